//! Suite manifests: a small TOML document that expands deterministically
//! into a list of runnable episodes. The same manifest always yields the
//! same maps, starts, and goals, so suites can be referenced by name in
//! experiments and regenerated anywhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{
    generate_map, geodesic, visible_cells, Cell, GoalSpec, GridMap, MapParams, Pose, TaskKind,
    HEADINGS,
};
use crate::hashing::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("manifest {name:?}: {message}")]
    Invalid { name: String, message: String },
    #[error("episode seed {seed}: map generation failed: {message}")]
    Map { seed: u64, message: String },
    #[error("episode seed {seed}: no placement satisfied the constraints")]
    Placement { seed: u64 },
}

/// Which task family a suite runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskChoice {
    Ignav,
    Ar,
    Aeqa,
}

impl TaskChoice {
    pub fn kind(self) -> TaskKind {
        match self {
            TaskChoice::Ignav => TaskKind::IgNav,
            TaskChoice::Ar => TaskKind::Ar,
            TaskChoice::Aeqa => TaskKind::Aeqa,
        }
    }
}

/// Map-generation knobs shared by every episode of the suite; the seed
/// is the one per-episode input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub width: i32,
    pub height: i32,
    pub rooms: u32,
    pub objects: u32,
}

impl Default for MapSection {
    fn default() -> Self {
        Self { width: 24, height: 24, rooms: 4, objects: 6 }
    }
}

/// A suite: `episodes` maps drawn from consecutive seeds starting at
/// `seed_start`, with one task placed on each. Disjoint `seed_start`
/// ranges give disjoint map populations, which is how seen/unseen splits
/// are expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteManifest {
    pub name: String,
    pub task: TaskChoice,
    pub episodes: u32,
    pub seed_start: u64,
    pub map: MapSection,
    /// Minimum start-to-goal geodesic distance, in cells.
    pub min_separation: u32,
    /// Place the goal inside the start pose's field of view. Implies
    /// episodes the agent can solve without any exploration phase.
    pub goal_visible: bool,
}

impl Default for SuiteManifest {
    fn default() -> Self {
        Self {
            name: "unnamed".to_string(),
            task: TaskChoice::Ignav,
            episodes: 10,
            seed_start: 0,
            map: MapSection::default(),
            min_separation: 8,
            goal_visible: false,
        }
    }
}

/// One expanded episode: everything needed to run it except the mode,
/// backends, and config.
#[derive(Debug, Clone)]
pub struct EpisodeSpec {
    pub index: u32,
    pub seed: u64,
    pub map: GridMap,
    pub start: Pose,
    pub goal: GoalSpec,
}

pub fn load_manifest(source: &str) -> Result<SuiteManifest, ManifestError> {
    let manifest: SuiteManifest =
        toml::from_str(source).map_err(|e| ManifestError::Parse(e.to_string()))?;
    validate(&manifest)?;
    Ok(manifest)
}

fn validate(m: &SuiteManifest) -> Result<(), ManifestError> {
    let fail = |message: &str| {
        Err(ManifestError::Invalid { name: m.name.clone(), message: message.to_string() })
    };
    if m.episodes == 0 {
        return fail("episodes must be >= 1");
    }
    if m.task != TaskChoice::Ignav && m.map.objects == 0 {
        return fail("object tasks need at least one placed object");
    }
    if m.goal_visible && m.task != TaskChoice::Ignav {
        return fail("goal_visible only applies to view-goal navigation");
    }
    Ok(())
}

/// Salt separating placement draws from every other consumer of the
/// episode seed.
const PLACEMENT_SALT: u64 = 0x706c6163;

const PLACEMENT_ATTEMPTS: u32 = 500;

/// Expand a manifest into episodes. Pure function of the manifest.
pub fn expand_suite(manifest: &SuiteManifest) -> Result<Vec<EpisodeSpec>, ManifestError> {
    validate(manifest)?;
    let mut specs = Vec::with_capacity(manifest.episodes as usize);
    for index in 0..manifest.episodes {
        let seed = manifest.seed_start + u64::from(index);
        let params = MapParams {
            width: manifest.map.width,
            height: manifest.map.height,
            rooms: manifest.map.rooms,
            objects: manifest.map.objects,
            seed,
        };
        let map = generate_map(&params)
            .map_err(|e| ManifestError::Map { seed, message: e.to_string() })?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, PLACEMENT_SALT]));
        let (start, goal) = place_task(manifest, &map, &mut rng)
            .ok_or(ManifestError::Placement { seed })?;
        specs.push(EpisodeSpec { index, seed, map, start, goal });
    }
    Ok(specs)
}

fn place_task(
    manifest: &SuiteManifest,
    map: &GridMap,
    rng: &mut ChaCha8Rng,
) -> Option<(Pose, GoalSpec)> {
    let free: Vec<Cell> = map.free_cells().collect();
    if free.len() < 2 {
        return None;
    }
    let min_sep = manifest.min_separation;
    for _ in 0..PLACEMENT_ATTEMPTS {
        let start_cell = free[rng.gen_range(0..free.len())];
        let start = Pose { cell: start_cell, heading: rng.gen_range(0..HEADINGS) };
        match manifest.task {
            TaskChoice::Ignav => {
                let goal_cell = if manifest.goal_visible {
                    // Candidate goals: in view, far enough, not the start.
                    let candidates: Vec<Cell> = visible_cells(map, start)
                        .into_iter()
                        .filter(|c| map.is_free(*c) && *c != start_cell)
                        .filter(|c| {
                            geodesic(map, start_cell, *c).is_some_and(|d| d >= min_sep)
                        })
                        .collect();
                    if candidates.is_empty() {
                        continue;
                    }
                    candidates[rng.gen_range(0..candidates.len())]
                } else {
                    let cell = free[rng.gen_range(0..free.len())];
                    if cell == start_cell
                        || !geodesic(map, start_cell, cell).is_some_and(|d| d >= min_sep)
                    {
                        continue;
                    }
                    cell
                };
                let goal_pose = Pose { cell: goal_cell, heading: rng.gen_range(0..HEADINGS) };
                return Some((start, GoalSpec::ig_nav(map, goal_pose)));
            }
            TaskChoice::Ar | TaskChoice::Aeqa => {
                if map.objects.is_empty() {
                    return None;
                }
                let subject = map.objects[rng.gen_range(0..map.objects.len())].cell;
                if subject == start_cell
                    || !geodesic(map, start_cell, subject).is_some_and(|d| d >= min_sep)
                {
                    continue;
                }
                let goal = match manifest.task {
                    TaskChoice::Ar => GoalSpec::ar(map, subject),
                    _ => GoalSpec::aeqa(map, subject),
                };
                // Object placement guarantees the lookup succeeds.
                return Some((start, goal.ok()?));
            }
        }
    }
    None
}
