//! Suite-level metrics: success rate, success weighted by path length,
//! mean trajectory, and the answer-score aggregate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::task::TaskKind;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot aggregate an empty result list")]
    Empty,
}

/// One finished episode, reduced to what the aggregates need. `shortest`
/// is the geodesic start-to-goal distance in cells; `actual` counts the
/// forward motions executed (cells traveled), while `total_steps` counts
/// every action against the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub task_kind: TaskKind,
    pub success: bool,
    pub shortest: u32,
    pub actual: u32,
    pub total_steps: u32,
    pub answer_score: Option<f64>,
    /// Episode ended in failure with an oscillation pattern in its
    /// trail; used by ablation comparisons.
    pub oscillation_failure: bool,
}

/// Per-episode success weighted by path length: S * l / max(p, l). An
/// episode that succeeds without needing to move scores 1.
pub fn episode_spl(success: bool, shortest: u32, actual: u32) -> f64 {
    if !success {
        return 0.0;
    }
    let denom = shortest.max(actual);
    if denom == 0 {
        1.0
    } else {
        shortest as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sr: f64,
    pub spl: f64,
    pub mean_traj: f64,
    /// Mean answer score over the episodes that carry one.
    pub answer_score: Option<f64>,
    pub episodes: usize,
}

pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<Metrics, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = records.len() as f64;
    let sr = records.iter().filter(|r| r.success).count() as f64 / n;
    let spl = records
        .iter()
        .map(|r| episode_spl(r.success, r.shortest, r.actual))
        .sum::<f64>()
        / n;
    let mean_traj = records.iter().map(|r| r.actual as f64).sum::<f64>() / n;
    let scored: Vec<f64> = records.iter().filter_map(|r| r.answer_score).collect();
    let answer_score = if scored.is_empty() {
        None
    } else {
        Some(scored.iter().sum::<f64>() / scored.len() as f64)
    };
    Ok(Metrics { sr, spl, mean_traj, answer_score, episodes: records.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, success: bool, shortest: u32, actual: u32) -> EpisodeRecord {
        EpisodeRecord {
            episode_id: id.into(),
            task_kind: TaskKind::IgNav,
            success,
            shortest,
            actual,
            total_steps: actual,
            answer_score: None,
            oscillation_failure: false,
        }
    }

    #[test]
    fn spl_formula_cases() {
        assert_eq!(episode_spl(true, 6, 6), 1.0);
        assert_eq!(episode_spl(true, 4, 8), 0.5);
        assert_eq!(episode_spl(false, 4, 4), 0.0);
        // Overshoot cannot raise the score above 1.
        assert_eq!(episode_spl(true, 8, 4), 1.0);
        assert_eq!(episode_spl(true, 0, 0), 1.0);
    }

    #[test]
    fn aggregates_are_means() {
        let records = vec![
            rec("a", true, 6, 6),   // spl 1.0
            rec("b", true, 4, 8),   // spl 0.5
            rec("c", false, 4, 10), // spl 0
        ];
        let m = compute_metrics(&records).unwrap();
        assert!((m.sr - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.spl - 0.5).abs() < 1e-12);
        assert!((m.mean_traj - 8.0).abs() < 1e-12);
        assert_eq!(m.answer_score, None);
        assert_eq!(m.episodes, 3);
    }

    #[test]
    fn answer_scores_average_over_scored_episodes_only() {
        let mut a = rec("a", true, 3, 3);
        a.task_kind = TaskKind::Aeqa;
        a.answer_score = Some(100.0);
        let mut b = rec("b", false, 3, 7);
        b.task_kind = TaskKind::Aeqa;
        b.answer_score = Some(50.0);
        let c = rec("c", true, 5, 5);
        let m = compute_metrics(&[a, b, c]).unwrap();
        assert_eq!(m.answer_score, Some(75.0));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn spl_never_exceeds_sr() {
        // Invariant: per-episode spl <= success indicator, so the means
        // preserve the ordering under any mix.
        let records: Vec<EpisodeRecord> = (0..50)
            .map(|i| rec(&format!("e{i}"), i % 3 != 0, (i % 7) + 1, (i % 11) + 1))
            .collect();
        let m = compute_metrics(&records).unwrap();
        assert!(m.spl <= m.sr + 1e-12);
    }
}
