//! Trajectory analysis over subtask pose traces: stitching, revisit
//! counting, and collision streaks. These feed the reflection analyzer,
//! the heuristic detectors, and failure accounting, so all three see the
//! same patterns.

use std::collections::BTreeMap;

use crate::gridworld::{Action, Cell, GridMap, Pose};
use crate::memory_graph::SubtaskNode;

/// Number of times a cell must be entered before the trail counts as
/// oscillating.
pub const OSCILLATION_VISITS: u32 = 3;

/// Collisions in a row that count as a streak.
pub const COLLISION_STREAK_LEN: u32 = 3;

/// Concatenated pose trace across subtasks. Consecutive traces share
/// their junction pose (one unit ends where the next begins); the
/// duplicate is collapsed so each executed action contributes one pose.
pub fn stitched_poses(subtasks: &[&SubtaskNode]) -> Vec<Pose> {
    let mut out: Vec<Pose> = Vec::new();
    for sub in subtasks {
        for &pose in &sub.pose_trace {
            if out.last() != Some(&pose) {
                out.push(pose);
            }
        }
    }
    out
}

/// Arrivals per cell: the starting cell counts once, and every pose whose
/// cell differs from its predecessor's counts as a new arrival. Turning
/// in place is not an arrival.
pub fn cell_arrivals(poses: &[Pose]) -> BTreeMap<Cell, u32> {
    let mut counts = BTreeMap::new();
    let mut prev: Option<Cell> = None;
    for pose in poses {
        if prev != Some(pose.cell) {
            *counts.entry(pose.cell).or_insert(0) += 1;
        }
        prev = Some(pose.cell);
    }
    counts
}

/// The most re-entered cell and its arrival count; ties go to the
/// smallest cell. `None` on an empty trail.
pub fn most_revisited(subtasks: &[&SubtaskNode]) -> Option<(Cell, u32)> {
    let arrivals = cell_arrivals(&stitched_poses(subtasks));
    arrivals
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
}

/// A cell entered at least [`OSCILLATION_VISITS`] times, if any.
pub fn oscillation_cell(subtasks: &[&SubtaskNode]) -> Option<Cell> {
    most_revisited(subtasks).filter(|(_, n)| *n >= OSCILLATION_VISITS).map(|(c, _)| c)
}

/// Per-executed-action collision flags across the subtasks, in execution
/// order. A collision is a FORWARD whose pose did not change.
pub fn collision_flags(subtasks: &[&SubtaskNode]) -> Vec<bool> {
    let mut flags = Vec::new();
    for sub in subtasks {
        for (i, action) in sub.actions.iter().take(sub.executed_actions()).enumerate() {
            let collided =
                *action == Action::Forward && sub.pose_trace[i] == sub.pose_trace[i + 1];
            flags.push(collided);
        }
    }
    flags
}

pub fn collision_count(subtasks: &[&SubtaskNode]) -> u32 {
    collision_flags(subtasks).iter().filter(|f| **f).count() as u32
}

/// Longest run of consecutive collisions.
pub fn max_collision_streak(subtasks: &[&SubtaskNode]) -> u32 {
    let mut best = 0u32;
    let mut run = 0u32;
    for collided in collision_flags(subtasks) {
        if collided {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Index (into the stitched trace) of the first move that crosses a room
/// boundary, if the trail ever changes rooms.
pub fn first_room_transition(map: &GridMap, poses: &[Pose]) -> Option<usize> {
    poses.windows(2).position(|w| {
        let a = map.room_at(w[0].cell).map(|r| r.label.as_str());
        let b = map.room_at(w[1].cell).map(|r| r.label.as_str());
        a != b
    })
}

/// Forward motions in the trail (cells actually traveled).
pub fn travel_distance(subtasks: &[&SubtaskNode]) -> u32 {
    let poses = stitched_poses(subtasks);
    poses.windows(2).filter(|w| w[0].cell != w[1].cell).count() as u32
}
