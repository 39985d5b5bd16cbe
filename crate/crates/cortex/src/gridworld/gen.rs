//! Seeded map generation: bordered boxes, rectangular rooms joined by
//! L-shaped corridors, and object placement on free cells. The same
//! parameters always produce the identical map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::map::{Cell, GridMap, MapError, Occupancy, PlacedObject, Room};
use super::search::fully_connected;

/// Object vocabulary. Category and color are matched as case-insensitive
/// tokens by question-style goals, so keep entries single words.
pub const CATEGORIES: [&str; 8] =
    ["chair", "table", "sofa", "lamp", "plant", "bed", "desk", "shelf"];
pub const COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "white", "purple"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapParams {
    pub width: i32,
    pub height: i32,
    /// Zero means a single open box inside the border walls.
    pub rooms: u32,
    pub objects: u32,
    pub seed: u64,
}

impl Default for MapParams {
    fn default() -> Self {
        Self { width: 24, height: 24, rooms: 4, objects: 6, seed: 0 }
    }
}

const PLACEMENT_ATTEMPTS: u32 = 200;

/// Deterministic generation from `params`. Border cells are walls, the
/// free cells form one connected component, and objects sit on distinct
/// free cells.
pub fn generate_map(params: &MapParams) -> Result<GridMap, MapError> {
    if params.width < 5 || params.height < 5 {
        return Err(MapError::Infeasible(format!(
            "{}x{} leaves no interior",
            params.width, params.height
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let occupancy = vec![Occupancy::Wall; (params.width * params.height) as usize];
    let mut map = GridMap::from_parts(
        params.width,
        params.height,
        params.seed,
        occupancy,
        vec![],
        vec![],
    );

    if params.rooms == 0 {
        for y in 1..params.height - 1 {
            for x in 1..params.width - 1 {
                map.set_occupancy(Cell::new(x, y), Occupancy::Free);
            }
        }
    } else {
        carve_rooms(&mut map, params, &mut rng)?;
    }

    place_objects(&mut map, params, &mut rng)?;
    debug_assert!(fully_connected(&map));
    Ok(map)
}

fn carve_rooms(
    map: &mut GridMap,
    params: &MapParams,
    rng: &mut ChaCha8Rng,
) -> Result<(), MapError> {
    let max_w = (params.width - 4).clamp(3, 8);
    let max_h = (params.height - 4).clamp(3, 8);
    let mut rooms: Vec<Room> = Vec::new();
    for i in 0..params.rooms {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = rng.gen_range(3..=max_w);
            let h = rng.gen_range(3..=max_h);
            if params.width - 1 - w < 1 || params.height - 1 - h < 1 {
                continue;
            }
            let x = rng.gen_range(1..=params.width - 1 - w);
            let y = rng.gen_range(1..=params.height - 1 - h);
            let candidate = Room { label: format!("R{}", i + 1), x, y, w, h };
            // Keep a one-cell wall between room interiors.
            let overlaps = rooms.iter().any(|r| {
                candidate.x < r.x + r.w + 1
                    && r.x < candidate.x + candidate.w + 1
                    && candidate.y < r.y + r.h + 1
                    && r.y < candidate.y + candidate.h + 1
            });
            if overlaps {
                continue;
            }
            for cy in candidate.y..candidate.y + candidate.h {
                for cx in candidate.x..candidate.x + candidate.w {
                    map.set_occupancy(Cell::new(cx, cy), Occupancy::Free);
                }
            }
            rooms.push(candidate);
            placed = true;
            break;
        }
        if !placed {
            return Err(MapError::Infeasible(format!(
                "could not place room {} of {} in {}x{}",
                i + 1,
                params.rooms,
                params.width,
                params.height
            )));
        }
    }

    // Chain the rooms with L-corridors (horizontal leg first). Centers
    // are interior, so corridors never touch the border.
    for pair in rooms.windows(2) {
        let a = pair[0].center();
        let b = pair[1].center();
        let (x0, x1) = (a.x.min(b.x), a.x.max(b.x));
        for x in x0..=x1 {
            map.set_occupancy(Cell::new(x, a.y), Occupancy::Free);
        }
        let (y0, y1) = (a.y.min(b.y), a.y.max(b.y));
        for y in y0..=y1 {
            map.set_occupancy(Cell::new(b.x, y), Occupancy::Free);
        }
    }
    map.rooms = rooms;
    Ok(())
}

fn place_objects(
    map: &mut GridMap,
    params: &MapParams,
    rng: &mut ChaCha8Rng,
) -> Result<(), MapError> {
    let mut open: Vec<Cell> = map.free_cells().collect();
    if (open.len() as u32) < params.objects {
        return Err(MapError::Infeasible(format!(
            "{} objects need {} free cells, map has {}",
            params.objects,
            params.objects,
            open.len()
        )));
    }
    let mut objects = Vec::new();
    for _ in 0..params.objects {
        let slot = rng.gen_range(0..open.len());
        let cell = open.swap_remove(slot);
        let category = CATEGORIES[rng.gen_range(0..CATEGORIES.len())].to_string();
        let color = COLORS[rng.gen_range(0..COLORS.len())].to_string();
        objects.push(PlacedObject { cell, category, color });
    }
    objects.sort_by_key(|o| o.cell);
    map.objects = objects;
    Ok(())
}
