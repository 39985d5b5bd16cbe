//! Occupancy-grid maps: cells, rooms, placed objects, and the plain-text
//! interchange format used for regression fixtures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map infeasible: {0}")]
    Infeasible(String),
    #[error("cell ({0}, {1}) is not free")]
    NotFree(i32, i32),
    #[error("map text parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Grid coordinates. `x` grows east, `y` grows south; heading 0 faces
/// north, i.e. toward smaller `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    /// Chebyshev distance; equals the 8-connected geodesic on open ground.
    pub fn chebyshev(&self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    Free,
    Wall,
}

/// A labeled rectangular region. `x..x+w` by `y..y+h`, exclusive ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub label: String,
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl Room {
    pub fn contains(&self, cell: Cell) -> bool {
        cell.x >= self.x && cell.x < self.x + self.w && cell.y >= self.y && cell.y < self.y + self.h
    }

    pub fn center(&self) -> Cell {
        Cell::new(self.x + self.w / 2, self.y + self.h / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub cell: Cell,
    pub category: String,
    pub color: String,
}

/// An immutable occupancy grid with labeled rooms and placed objects.
/// Border cells are always walls and the free cells form one connected
/// component; `generate_map` guarantees both by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub width: i32,
    pub height: i32,
    pub seed: u64,
    occupancy: Vec<Occupancy>,
    pub objects: Vec<PlacedObject>,
    pub rooms: Vec<Room>,
}

impl GridMap {
    pub fn from_parts(
        width: i32,
        height: i32,
        seed: u64,
        occupancy: Vec<Occupancy>,
        objects: Vec<PlacedObject>,
        rooms: Vec<Room>,
    ) -> Self {
        assert_eq!(occupancy.len(), (width * height) as usize);
        Self { width, height, seed, occupancy, objects, rooms }
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.x < self.width && cell.y >= 0 && cell.y < self.height
    }

    pub fn occupancy_at(&self, cell: Cell) -> Occupancy {
        if !self.in_bounds(cell) {
            return Occupancy::Wall;
        }
        self.occupancy[(cell.y * self.width + cell.x) as usize]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.occupancy_at(cell) == Occupancy::Free
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width)
                .map(move |x| Cell::new(x, y))
                .filter(move |&c| self.is_free(c))
        })
    }

    pub fn object_at(&self, cell: Cell) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.cell == cell)
    }

    pub fn room_at(&self, cell: Cell) -> Option<&Room> {
        self.rooms.iter().find(|r| r.contains(cell))
    }

    pub(crate) fn set_occupancy(&mut self, cell: Cell, occ: Occupancy) {
        let idx = (cell.y * self.width + cell.x) as usize;
        self.occupancy[idx] = occ;
    }

    /// Plain-text interchange form: a character grid followed by a legend
    /// and one record per room and object.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "map {}x{} seed={}\n",
            self.width, self.height, self.seed
        ));
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(match self.occupancy_at(Cell::new(x, y)) {
                    Occupancy::Wall => '#',
                    Occupancy::Free => '.',
                });
            }
            out.push('\n');
        }
        out.push_str("legend #=wall .=free\n");
        for room in &self.rooms {
            out.push_str(&format!(
                "room {} {} {} {} {}\n",
                room.label, room.x, room.y, room.w, room.h
            ));
        }
        for obj in &self.objects {
            out.push_str(&format!(
                "object {} {} {} {}\n",
                obj.cell.x, obj.cell.y, obj.category, obj.color
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MapError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(MapError::Parse {
            line: 1,
            message: "empty document".into(),
        })?;
        let parse_header = || -> Option<(i32, i32, u64)> {
            let rest = header.strip_prefix("map ")?;
            let (dims, seed) = rest.split_once(" seed=")?;
            let (w, h) = dims.split_once('x')?;
            Some((w.parse().ok()?, h.parse().ok()?, seed.parse().ok()?))
        };
        let (width, height, seed) = parse_header().ok_or(MapError::Parse {
            line: 1,
            message: format!("bad header {header:?}"),
        })?;
        let mut occupancy = Vec::with_capacity((width * height) as usize);
        for row in 0..height {
            let (lineno, line) = lines.next().ok_or(MapError::Parse {
                line: row as usize + 2,
                message: "missing grid row".into(),
            })?;
            if line.chars().count() != width as usize {
                return Err(MapError::Parse {
                    line: lineno + 1,
                    message: format!("expected {width} cells, got {}", line.chars().count()),
                });
            }
            for ch in line.chars() {
                occupancy.push(match ch {
                    '#' => Occupancy::Wall,
                    '.' => Occupancy::Free,
                    other => {
                        return Err(MapError::Parse {
                            line: lineno + 1,
                            message: format!("unknown cell {other:?}"),
                        })
                    }
                });
            }
        }
        let mut rooms = Vec::new();
        let mut objects = Vec::new();
        for (lineno, line) in lines {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("legend") | None => {}
                Some("room") => {
                    let fields: Vec<&str> = parts.collect();
                    if fields.len() != 5 {
                        return Err(MapError::Parse {
                            line: lineno + 1,
                            message: "room record needs label x y w h".into(),
                        });
                    }
                    let num = |s: &str| -> Result<i32, MapError> {
                        s.parse().map_err(|_| MapError::Parse {
                            line: lineno + 1,
                            message: format!("bad number {s:?}"),
                        })
                    };
                    rooms.push(Room {
                        label: fields[0].to_string(),
                        x: num(fields[1])?,
                        y: num(fields[2])?,
                        w: num(fields[3])?,
                        h: num(fields[4])?,
                    });
                }
                Some("object") => {
                    let fields: Vec<&str> = parts.collect();
                    if fields.len() != 4 {
                        return Err(MapError::Parse {
                            line: lineno + 1,
                            message: "object record needs x y category color".into(),
                        });
                    }
                    let num = |s: &str| -> Result<i32, MapError> {
                        s.parse().map_err(|_| MapError::Parse {
                            line: lineno + 1,
                            message: format!("bad number {s:?}"),
                        })
                    };
                    objects.push(PlacedObject {
                        cell: Cell::new(num(fields[0])?, num(fields[1])?),
                        category: fields[2].to_string(),
                        color: fields[3].to_string(),
                    });
                }
                Some(other) => {
                    return Err(MapError::Parse {
                        line: lineno + 1,
                        message: format!("unknown record {other:?}"),
                    })
                }
            }
        }
        Ok(Self { width, height, seed, occupancy, objects, rooms })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_map() -> GridMap {
        let mut occ = vec![Occupancy::Wall; 100];
        for y in 1..9 {
            for x in 1..9 {
                occ[y * 10 + x] = Occupancy::Free;
            }
        }
        GridMap::from_parts(10, 10, 1, occ, vec![], vec![])
    }

    #[test]
    fn out_of_bounds_reads_as_wall() {
        let m = open_map();
        assert_eq!(m.occupancy_at(Cell::new(-1, 0)), Occupancy::Wall);
        assert_eq!(m.occupancy_at(Cell::new(10, 3)), Occupancy::Wall);
        assert!(m.is_free(Cell::new(4, 4)));
    }

    #[test]
    fn text_round_trip_preserves_everything() {
        let mut m = open_map();
        m.objects.push(PlacedObject {
            cell: Cell::new(3, 4),
            category: "chair".into(),
            color: "blue".into(),
        });
        m.rooms.push(Room { label: "R1".into(), x: 1, y: 1, w: 8, h: 8 });
        let round = GridMap::from_text(&m.to_text()).unwrap();
        assert_eq!(m, round);
    }

    #[test]
    fn parse_error_names_the_line() {
        let text = "map 4x2 seed=0\n####\n#?##\n";
        let err = GridMap::from_text(text).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
