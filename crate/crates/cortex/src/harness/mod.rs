//! The experiment harness: expands suite manifests, runs episodes under
//! an ablation mode, carries cross-episode memory between rounds, and
//! reduces everything to reports. All of it is deterministic for the
//! oracle backends — identical invocations produce identical outputs.

pub mod manifest;
pub mod report;

pub use manifest::{
    expand_suite, load_manifest, EpisodeSpec, ManifestError, SuiteManifest, TaskChoice,
};
pub use report::{load_run, save_run, RoundSummary, RunSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aki::{AkiError, HeuristicLibrary};
use crate::backends::{BackendError, BackendSet};
use crate::config::CortexConfig;
use crate::gridworld::{compute_metrics, EpisodeRecord, EpisodeSim, Metrics, MetricsError, TaskError};
use crate::lpm::{build_principles, embed_query, EpisodeBank, LpmError};
use crate::memory_graph::{create_episode, GraphError, MemoryGraph, SubtaskNode};
use crate::planning::{run_cycle, PlannerContext, PlanningError};
use crate::srm::maybe_reflect;
use crate::trail;

/// Principles injected into a planning cycle, at most.
pub const RETRIEVED_CAP: usize = 4;
/// Merged heuristics steering an episode, at most.
pub const GUIDANCE_CAP: usize = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Lpm(#[from] LpmError),
    #[error(transparent)]
    Aki(#[from] AkiError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Ablation mode: which memory systems are live. Reads and writes are
/// gated separately so a full reader can still be frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Imagine-then-verify planning only.
    Basic,
    /// Planning plus in-episode reflection.
    Srm,
    /// Planning plus cross-episode principle retrieval.
    Lpm,
    /// Reflection and retrieval together.
    SrmLpm,
    /// Everything read — reflection, retrieval, heuristic guidance — but
    /// nothing written back.
    StaticFull,
    /// The full loop: reads plus post-episode distillation, bank
    /// commits, and heuristic induction.
    AdaptiveFull,
}

impl Mode {
    pub const ALL: [Mode; 6] =
        [Mode::Basic, Mode::Srm, Mode::Lpm, Mode::SrmLpm, Mode::StaticFull, Mode::AdaptiveFull];

    /// In-episode reflection after each cycle.
    pub fn reflects(self) -> bool {
        matches!(self, Mode::Srm | Mode::SrmLpm | Mode::StaticFull | Mode::AdaptiveFull)
    }

    /// Principle retrieval at each cycle start.
    pub fn retrieves(self) -> bool {
        matches!(self, Mode::Lpm | Mode::SrmLpm | Mode::StaticFull | Mode::AdaptiveFull)
    }

    /// Merged heuristics steer planning.
    pub fn uses_heuristics(self) -> bool {
        matches!(self, Mode::StaticFull | Mode::AdaptiveFull)
    }

    /// Post-episode writes: bank commits and library updates.
    pub fn learns(self) -> bool {
        matches!(self, Mode::AdaptiveFull)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Basic => "basic",
            Mode::Srm => "srm",
            Mode::Lpm => "lpm",
            Mode::SrmLpm => "srm_lpm",
            Mode::StaticFull => "static_full",
            Mode::AdaptiveFull => "adaptive_full",
        }
    }

    /// Accepts the canonical labels plus the shorthand spellings the
    /// command line uses.
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "srm-lpm" => return Some(Mode::SrmLpm),
            "static" => return Some(Mode::StaticFull),
            "adaptive" => return Some(Mode::AdaptiveFull),
            _ => {}
        }
        Mode::ALL.into_iter().find(|m| m.label() == s)
    }
}

/// Cross-episode memory carried through a run: the episode bank with its
/// principles, and the heuristic library.
#[derive(Debug, Clone, Default)]
pub struct Stores {
    pub bank: EpisodeBank,
    pub library: HeuristicLibrary,
}

impl Stores {
    pub fn empty() -> Self {
        Self::default()
    }
}

/// One finished episode, with its experience graph and loop counters.
#[derive(Debug)]
pub struct EpisodeRun {
    pub record: EpisodeRecord,
    pub graph: MemoryGraph,
    pub cycles: u32,
    pub reflections: u32,
    pub retrieved: u32,
}

/// Run a single episode under `mode`. The planner context is rebuilt
/// every cycle from the stores; post-episode learning feeds them when
/// the mode allows writes.
pub fn run_episode(
    spec: &EpisodeSpec,
    episode_id: &str,
    mode: Mode,
    backends: &BackendSet,
    stores: &mut Stores,
    config: &CortexConfig,
) -> Result<EpisodeRun, HarnessError> {
    let mut sim =
        EpisodeSim::new(&spec.map, spec.goal.clone(), spec.start, config.max_steps as u32);
    let mut graph = create_episode(episode_id, spec.goal.clone());
    let mut context = PlannerContext::new(spec.goal.clone());
    if mode.uses_heuristics() {
        context.active_heuristics = stores.library.select_guidance(
            config.confidence_floor,
            config.min_support as u32,
            GUIDANCE_CAP,
        );
    }

    let mut cycles = 0u32;
    let mut reflections = 0u32;
    let mut retrieved = 0u32;
    while !sim.is_done() {
        if mode.retrieves() {
            let query = embed_query(&spec.goal, sim.pose());
            let hits = stores.bank.retrieve(&query, config.lpm_threshold, RETRIEVED_CAP)?;
            retrieved += hits.len() as u32;
            context.retrieved_principles = hits;
        }
        run_cycle(&mut sim, backends, &mut graph, &mut context, config)?;
        cycles += 1;
        if mode.reflects() && !sim.is_done() {
            let view = sim.view();
            match maybe_reflect(
                &graph,
                backends.srm_analyzer.as_ref(),
                config.srm_window,
                &view,
                &context.active_heuristics,
            ) {
                Ok(Some(summary)) => {
                    context.inject_reflection(summary);
                    reflections += 1;
                }
                Ok(None) => {}
                // Reflection is advisory: a failed analysis costs the
                // summary, not the episode.
                Err(err) => log::warn!("{episode_id}: reflection skipped: {err}"),
            }
        }
    }
    let outcome = sim.outcome()?;
    graph.finalize_episode(outcome.flag())?;

    let subtasks: Vec<&SubtaskNode> = graph.subtasks_in_order().map(|(_, s)| s).collect();
    let oscillation = trail::oscillation_cell(&subtasks).is_some();
    let record = sim.record(episode_id, oscillation)?;

    if mode.learns() {
        let principles = build_principles(
            &graph,
            &spec.map,
            backends.principle_analyzer.as_ref(),
            config.lpm_horizon,
        )?;
        stores.bank.commit_episode(graph.clone(), principles, config.max_episodes_per_goal)?;
        let mined = backends.heuristic_extractor.extract(&graph, &spec.map)?;
        stores.library.update(mined, config.sim_threshold, backends.heuristic_merger.as_ref())?;
    }

    Ok(EpisodeRun { record, graph, cycles, reflections, retrieved })
}

/// One suite pass: every expanded episode in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub round: u32,
    pub records: Vec<EpisodeRecord>,
    pub metrics: Metrics,
}

impl SuiteResult {
    pub fn oscillation_failures(&self) -> u32 {
        self.records.iter().filter(|r| r.oscillation_failure).count() as u32
    }
}

/// Run every episode of a suite once. `round` only namespaces episode
/// ids (and is 1-based in reports).
pub fn run_suite(
    manifest: &SuiteManifest,
    mode: Mode,
    round: u32,
    backends: &BackendSet,
    stores: &mut Stores,
    config: &CortexConfig,
) -> Result<SuiteResult, HarnessError> {
    let specs = expand_suite(manifest)?;
    let mut records = Vec::with_capacity(specs.len());
    for spec in &specs {
        let id = format!("ep-r{round}-s{}-{}", spec.seed, spec.index);
        let run = run_episode(spec, &id, mode, backends, stores, config)?;
        records.push(run.record);
    }
    let metrics = compute_metrics(&records)?;
    Ok(SuiteResult { round, records, metrics })
}

/// Run the suite `rounds` times, carrying the stores across rounds. In
/// an adaptive mode, later rounds replan the same worlds with everything
/// earlier rounds learned.
pub fn run_rounds(
    manifest: &SuiteManifest,
    mode: Mode,
    rounds: u32,
    backends: &BackendSet,
    stores: &mut Stores,
    config: &CortexConfig,
) -> Result<Vec<SuiteResult>, HarnessError> {
    (1..=rounds)
        .map(|round| run_suite(manifest, mode, round, backends, stores, config))
        .collect()
}
