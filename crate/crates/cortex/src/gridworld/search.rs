//! Shortest paths over free cells with 8-connected moves (unit cost,
//! diagonals included). The geodesic here is the denominator of SPL and
//! the success radius for navigation goals, so it must stay exact.

use std::collections::VecDeque;

use super::map::{Cell, GridMap};
use super::motion::DIRECTION_OFFSETS;

/// Distance field from `source` over free cells; `None` marks unreachable
/// or non-free cells. Indexed `y * width + x`.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub source: Cell,
    width: i32,
    dist: Vec<Option<u32>>,
}

impl DistanceField {
    pub fn get(&self, cell: Cell) -> Option<u32> {
        if cell.x < 0 || cell.y < 0 || cell.x >= self.width {
            return None;
        }
        self.dist.get((cell.y * self.width + cell.x) as usize).copied().flatten()
    }
}

/// Breadth-first distance field from `source`. A wall source yields an
/// all-unreachable field.
pub fn distance_field(map: &GridMap, source: Cell) -> DistanceField {
    let mut dist: Vec<Option<u32>> = vec![None; (map.width * map.height) as usize];
    let idx = |c: Cell| (c.y * map.width + c.x) as usize;
    let mut queue = VecDeque::new();
    if map.is_free(source) {
        dist[idx(source)] = Some(0);
        queue.push_back(source);
    }
    while let Some(cell) = queue.pop_front() {
        let d = dist[idx(cell)].unwrap();
        for (dx, dy) in DIRECTION_OFFSETS {
            let next = Cell::new(cell.x + dx, cell.y + dy);
            if map.is_free(next) && dist[idx(next)].is_none() {
                dist[idx(next)] = Some(d + 1);
                queue.push_back(next);
            }
        }
    }
    DistanceField { source, width: map.width, dist }
}

/// Geodesic distance in cells between two free cells, if connected.
pub fn geodesic(map: &GridMap, from: Cell, to: Cell) -> Option<u32> {
    distance_field(map, from).get(to)
}

/// One shortest cell path from `from` to `to`, inclusive of both ends.
/// Deterministic: predecessor ties resolve in `DIRECTION_OFFSETS` order
/// scanning backward from the goal.
pub fn shortest_path(map: &GridMap, from: Cell, to: Cell) -> Option<Vec<Cell>> {
    let field = distance_field(map, from);
    field.get(to)?;
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        let d = field.get(cur).unwrap();
        let mut stepped = false;
        for (dx, dy) in DIRECTION_OFFSETS {
            let prev = Cell::new(cur.x + dx, cur.y + dy);
            if field.get(prev) == Some(d - 1) {
                path.push(prev);
                cur = prev;
                stepped = true;
                break;
            }
        }
        debug_assert!(stepped, "distance field must decrease toward its source");
    }
    path.reverse();
    Some(path)
}

/// True when every free cell can reach every other one.
pub fn fully_connected(map: &GridMap) -> bool {
    let mut free = map.free_cells();
    let Some(first) = free.next() else { return true };
    let field = distance_field(map, first);
    map.free_cells().all(|c| field.get(c).is_some())
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

    #[test]
    fn open_ground_geodesic_is_chebyshev() {
        let m = map_from_rows(&[
            "##########",
            "#........#",
            "#........#",
            "#........#",
            "#........#",
            "##########",
        ]);
        let a = Cell::new(1, 1);
        for c in m.free_cells() {
            assert_eq!(geodesic(&m, a, c), Some(a.chebyshev(c) as u32), "{c:?}");
        }
    }

    #[test]
    fn wall_detour_lengthens_the_path() {
        let m = map_from_rows(&[
            "##########",
            "#....#...#",
            "#....#...#",
            "#....#...#",
            "#....#...#",
            "#........#",
            "##########",
        ]);
        let from = Cell::new(1, 1);
        let to = Cell::new(8, 1);
        // Straight-line Chebyshev would be 7; the only crossing of the
        // wall column is (5,5), so the path costs 4 + 4.
        assert_eq!(geodesic(&m, from, to), Some(8));
        let path = shortest_path(&m, from, to).unwrap();
        assert_eq!(path.len(), 9);
        assert_eq!(path[0], from);
        assert_eq!(*path.last().unwrap(), to);
        for pair in path.windows(2) {
            assert_eq!(pair[0].chebyshev(pair[1]), 1);
            assert!(m.is_free(pair[1]));
        }
    }

    #[test]
    fn unreachable_and_wall_cells_have_no_distance() {
        let m = map_from_rows(&[
            "#######",
            "#..#..#",
            "#..#..#",
            "#######",
        ]);
        let left = Cell::new(1, 1);
        assert_eq!(geodesic(&m, left, Cell::new(4, 1)), None);
        assert_eq!(geodesic(&m, left, Cell::new(3, 1)), None); // wall cell
        assert!(!fully_connected(&m));
    }

    #[test]
    fn distance_field_handles_wall_source() {
        let m = map_from_rows(&["####", "#..#", "####"]);
        let field = distance_field(&m, Cell::new(0, 0));
        assert_eq!(field.get(Cell::new(1, 1)), None);
    }
}
