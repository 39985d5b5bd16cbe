//! Egocentric perception: a 90-degree field of view centered on the
//! agent's heading, range 6 cells, with walls occluding along Bresenham
//! lines. The first wall on a sight line is itself visible.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::hashing::fnv1a64;

use super::map::{Cell, GridMap, Occupancy, PlacedObject};
use super::motion::Pose;

/// Sight range in cells (Euclidean).
pub const VIEW_RANGE: i32 = 6;

const COS_HALF_FOV: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Cells on the exact 45-degree FOV boundary count as visible.
const FOV_EPSILON: f64 = 1e-9;

/// Straight-line cell trace from `from` to `to`, inclusive.
pub fn bresenham_line(from: Cell, to: Cell) -> Vec<Cell> {
    let mut cells = Vec::new();
    let (mut x, mut y) = (from.x, from.y);
    let dx = (to.x - x).abs();
    let dy = -(to.y - y).abs();
    let sx = if x < to.x { 1 } else { -1 };
    let sy = if y < to.y { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        cells.push(Cell::new(x, y));
        if x == to.x && y == to.y {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    cells
}

/// True when every cell strictly between the endpoints is free. The
/// endpoints themselves are not checked, so a wall can be the target.
pub fn line_of_sight(map: &GridMap, from: Cell, to: Cell) -> bool {
    let line = bresenham_line(from, to);
    line[1..line.len().saturating_sub(1)]
        .iter()
        .all(|&c| map.is_free(c))
}

fn in_fov(heading: u8, dx: i32, dy: i32) -> bool {
    let theta = heading as f64 * (std::f64::consts::PI / 8.0);
    let (ux, uy) = (theta.sin(), -theta.cos());
    let norm = ((dx * dx + dy * dy) as f64).sqrt();
    let dot = ux * dx as f64 + uy * dy as f64;
    dot + FOV_EPSILON >= COS_HALF_FOV * norm
}

/// All cells visible from `pose`: within range, inside the FOV cone, and
/// with unobstructed line of sight. The agent's own cell is always
/// included.
pub fn visible_cells(map: &GridMap, pose: Pose) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    out.insert(pose.cell);
    for dy in -VIEW_RANGE..=VIEW_RANGE {
        for dx in -VIEW_RANGE..=VIEW_RANGE {
            if dx == 0 && dy == 0 {
                continue;
            }
            if dx * dx + dy * dy > VIEW_RANGE * VIEW_RANGE {
                continue;
            }
            if !in_fov(pose.heading, dx, dy) {
                continue;
            }
            let target = Cell::new(pose.cell.x + dx, pose.cell.y + dy);
            if map.in_bounds(target) && line_of_sight(map, pose.cell, target) {
                out.insert(target);
            }
        }
    }
    out
}

/// One perception snapshot. Orderings are canonical (sorted by cell), so
/// equal snapshots always serialize and digest identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub cells: BTreeMap<Cell, Occupancy>,
    pub objects: Vec<PlacedObject>,
}

impl Observation {
    pub fn capture(map: &GridMap, pose: Pose) -> Self {
        let visible = visible_cells(map, pose);
        let cells = visible
            .iter()
            .map(|&c| (c, map.occupancy_at(c)))
            .collect::<BTreeMap<_, _>>();
        let mut objects: Vec<PlacedObject> = visible
            .iter()
            .filter_map(|&c| map.object_at(c).cloned())
            .collect();
        objects.sort_by_key(|o| o.cell);
        Observation { pose, cells, objects }
    }

    /// Stable content digest; identical observations share it, and any
    /// change to pose, cells, or objects changes it.
    pub fn digest(&self) -> u64 {
        fnv1a64(self.render_text().as_bytes())
    }

    /// Compact one-cell-per-record rendering, also used verbatim inside
    /// chat prompts.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "pose ({}, {}) heading {}\n",
            self.pose.cell.x, self.pose.cell.y, self.pose.heading
        ));
        for (cell, occ) in &self.cells {
            let kind = match occ {
                Occupancy::Free => "free",
                Occupancy::Wall => "wall",
            };
            out.push_str(&format!("cell ({}, {}) {}\n", cell.x, cell.y, kind));
        }
        for obj in &self.objects {
            out.push_str(&format!(
                "object ({}, {}) {} {}\n",
                obj.cell.x, obj.cell.y, obj.category, obj.color
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::map::Occupancy;

    fn map_from_rows(rows: &[&str]) -> GridMap {
        let height = rows.len() as i32;
        let width = rows[0].len() as i32;
        let occ = rows
            .iter()
            .flat_map(|r| r.chars())
            .map(|c| if c == '#' { Occupancy::Wall } else { Occupancy::Free })
            .collect();
        GridMap::from_parts(width, height, 0, occ, vec![], vec![])
    }

    fn big_open() -> GridMap {
        let rows: Vec<String> = (0..15)
            .map(|y| {
                (0..15)
                    .map(|x| if x == 0 || y == 0 || x == 14 || y == 14 { '#' } else { '.' })
                    .collect()
            })
            .collect();
        let refs: Vec<&str> = rows.iter().map(String::as_str).collect();
        map_from_rows(&refs)
    }

    #[test]
    fn north_fov_covers_the_forward_cone_only() {
        let m = big_open();
        let vis = visible_cells(&m, Pose::new(7, 7, 0));
        assert!(vis.contains(&Cell::new(7, 1))); // six straight ahead
        assert!(vis.contains(&Cell::new(11, 3))); // inside cone, range sqrt(32)
        assert!(vis.contains(&Cell::new(4, 4))); // 45-degree boundary included
        assert!(!vis.contains(&Cell::new(7, 8))); // directly behind
        assert!(!vis.contains(&Cell::new(9, 7))); // due east, outside 90-degree cone
        assert!(!vis.contains(&Cell::new(7, 0))); // range 7: too far
    }

    #[test]
    fn walls_occlude_but_are_themselves_seen() {
        let m = map_from_rows(&[
            "#########",
            "#.......#",
            "#.......#",
            "#...#...#",
            "#.......#",
            "#########",
        ]);
        let vis = visible_cells(&m, Pose::new(4, 4, 0)); // facing north at the wall
        assert!(vis.contains(&Cell::new(4, 3))); // the blocking wall
        assert!(!vis.contains(&Cell::new(4, 2))); // hidden behind it
        assert!(!vis.contains(&Cell::new(4, 1)));
        assert!(vis.contains(&Cell::new(3, 2))); // off-axis line is clear
    }

    #[test]
    fn turning_shifts_the_cone() {
        let m = big_open();
        let east = visible_cells(&m, Pose::new(7, 7, 4));
        assert!(east.contains(&Cell::new(13, 7)));
        assert!(!east.contains(&Cell::new(7, 1)));
        // Odd heading 1 leans the cone clockwise off north.
        let lean = visible_cells(&m, Pose::new(7, 7, 1));
        assert!(lean.contains(&Cell::new(7, 1)));
        assert!(lean.contains(&Cell::new(11, 5))); // ~63 degrees: inside now
        assert!(!lean.contains(&Cell::new(4, 4))); // -45 degrees: out now
        let north = visible_cells(&m, Pose::new(7, 7, 0));
        assert!(!north.contains(&Cell::new(11, 5)));
        assert!(north.contains(&Cell::new(4, 4)));
    }

    #[test]
    fn digest_tracks_content() {
        let m = big_open();
        let a = Observation::capture(&m, Pose::new(7, 7, 0));
        let b = Observation::capture(&m, Pose::new(7, 7, 0));
        assert_eq!(a.digest(), b.digest());
        let turned = Observation::capture(&m, Pose::new(7, 7, 4));
        assert_ne!(a.digest(), turned.digest());
    }

    #[test]
    fn bresenham_endpoints_and_contiguity() {
        let line = bresenham_line(Cell::new(0, 0), Cell::new(5, 2));
        assert_eq!(line[0], Cell::new(0, 0));
        assert_eq!(*line.last().unwrap(), Cell::new(5, 2));
        for pair in line.windows(2) {
            assert_eq!(pair[0].chebyshev(pair[1]), 1);
        }
    }
}
