//! Run reports: a JSON summary plus two TSV tables, written without
//! timestamps or host details so identical runs produce byte-identical
//! trees.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Mode, SuiteResult};
use crate::config::CortexConfig;
use crate::gridworld::Metrics;

/// Bumped when the on-disk layout changes shape.
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub metrics: Metrics,
    pub oscillation_failures: u32,
    #[serde(default)]
    pub records: Vec<crate::gridworld::EpisodeRecord>,
}

/// Everything a run produced, in deciding order: what ran, how it was
/// configured, and what came out round by round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: u32,
    pub suite: String,
    pub mode: Mode,
    pub config: CortexConfig,
    pub rounds: Vec<RoundSummary>,
}

impl RunSummary {
    pub fn new(suite: &str, mode: Mode, config: CortexConfig, results: Vec<SuiteResult>) -> Self {
        let rounds = results
            .into_iter()
            .map(|r| RoundSummary {
                round: r.round,
                oscillation_failures: r.oscillation_failures(),
                metrics: r.metrics,
                records: r.records,
            })
            .collect();
        RunSummary { version: REPORT_VERSION, suite: suite.to_string(), mode, config, rounds }
    }

    /// The last round's aggregates — what a multi-round run converged to.
    pub fn final_metrics(&self) -> Option<&Metrics> {
        self.rounds.last().map(|r| &r.metrics)
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

/// One row per round: the aggregate trajectory of the run.
pub fn render_rounds_tsv(summary: &RunSummary) -> String {
    let mut out = String::from(
        "suite\tmode\tround\tepisodes\tsr\tspl\tmean_traj\tanswer_score\tosc_failures\n",
    );
    for r in &summary.rounds {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\n",
            summary.suite,
            summary.mode.label(),
            r.round,
            r.metrics.episodes,
            r.metrics.sr,
            r.metrics.spl,
            r.metrics.mean_traj,
            fmt_opt(r.metrics.answer_score),
            r.oscillation_failures,
        ));
    }
    out
}

/// One row per episode per round: the full grain for diffing runs.
pub fn render_episodes_tsv(summary: &RunSummary) -> String {
    let mut out = String::from(
        "round\tepisode\ttask\tsuccess\tshortest\tactual\ttotal_steps\tanswer_score\toscillation\n",
    );
    for r in &summary.rounds {
        for rec in &r.records {
            out.push_str(&format!(
                "{}\t{}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.round,
                rec.episode_id,
                rec.task_kind,
                rec.success,
                rec.shortest,
                rec.actual,
                rec.total_steps,
                fmt_opt(rec.answer_score),
                rec.oscillation_failure,
            ));
        }
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Write `run.json`, `rounds.tsv`, and `episodes.tsv` under `dir`,
/// creating it if needed.
pub fn save_run(dir: &Path, summary: &RunSummary) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)
        .map_err(|source| HarnessError::Io { path: dir.display().to_string(), source })?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes") + "\n";
    write(&dir.join("run.json"), &json)?;
    write(&dir.join("rounds.tsv"), &render_rounds_tsv(summary))?;
    write(&dir.join("episodes.tsv"), &render_episodes_tsv(summary))
}

pub fn load_run(dir: &Path) -> Result<RunSummary, HarnessError> {
    let path = dir.join("run.json");
    let raw = fs::read_to_string(&path)
        .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&raw).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}
