//! Short-term reflective memory: once enough subtasks have accumulated,
//! the analyzer summarizes the most recent window — local progress,
//! failure patterns, recommendations — and the summary steers the next
//! planning cycle.

use serde::{Deserialize, Serialize};

use crate::aki::MergedHeuristic;
use crate::backends::{BackendError, SrmAnalyzerBackend};
use crate::gridworld::NavView;
use crate::memory_graph::MemoryGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Progress {
    Advancing,
    Stalled,
    Regressing,
}

/// Pattern id flagged when a cell is re-entered three or more times
/// within the window.
pub const PATTERN_OSCILLATION: &str = "OSCILLATION";
/// Pattern id flagged on three or more consecutive collisions.
pub const PATTERN_COLLISION_STREAK: &str = "COLLISION_STREAK";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionSummary {
    pub progress_assessment: Progress,
    /// Pattern ids such as [`PATTERN_OSCILLATION`].
    pub failure_patterns: Vec<String>,
    /// The subgoal the window was serving (latest rationale).
    pub subgoal_context: String,
    /// Actionable template strings; planners parse markers such as
    /// `AVOID_FRONTIER:(x,y)` out of these.
    pub recommendations: Vec<String>,
    /// Subtask ordinals (first, last) the window covered.
    pub window_span: (u32, u32),
}

/// Reflect over the last `w` subtasks, or return `None` when fewer than
/// `w` exist yet. Analyzer failures propagate; callers log them and
/// carry on without a summary.
pub fn maybe_reflect(
    graph: &MemoryGraph,
    analyzer: &dyn SrmAnalyzerBackend,
    w: usize,
    view: &NavView<'_>,
    active_heuristics: &[MergedHeuristic],
) -> Result<Option<ReflectionSummary>, BackendError> {
    let count = graph.subtask_count();
    if count < w {
        return Ok(None);
    }
    let window = graph.recent_window(w);
    let span = ((count - w) as u32, (count - 1) as u32);
    let summary = analyzer.reflect(&window, span, view, active_heuristics)?;
    Ok(Some(summary))
}
