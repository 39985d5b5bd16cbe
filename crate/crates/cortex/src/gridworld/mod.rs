//! Deterministic, partially observable grid environment: maps and their
//! generation, agent kinematics, shortest-path oracles, field-of-view
//! perception, the three task families, episode simulation, and metrics.

pub mod gen;
pub mod map;
pub mod metrics;
pub mod motion;
pub mod observe;
pub mod search;
pub mod sim;
pub mod task;

pub use gen::{generate_map, MapParams};
pub use map::{Cell, GridMap, MapError, Occupancy, PlacedObject, Room};
pub use metrics::{compute_metrics, episode_spl, EpisodeRecord, Metrics, MetricsError};
pub use motion::{step, Action, Pose, StepResult, DIRECTION_OFFSETS, HEADINGS};
pub use observe::{bresenham_line, line_of_sight, visible_cells, Observation, VIEW_RANGE};
pub use search::{distance_field, fully_connected, geodesic, shortest_path, DistanceField};
pub use sim::{EpisodeSim, ExecStep, NavView};
pub use task::{
    evaluate_outcome, EpisodeOutcome, GoalSpec, OutcomeFlag, TaskError, TaskKind, SUCCESS_RADIUS,
};
