//! Cognition backend interfaces. The control loop is written against
//! these seven traits only; a backend family is anything that implements
//! all of them. Two ship in-tree: deterministic oracles backed by world
//! truth, and a remote chat-completions client.

pub mod oracle;
pub mod remote;

use std::fmt;

use thiserror::Error;

use crate::aki::{Heuristic, MergedHeuristic};
use crate::gridworld::{Action, GoalSpec, GridMap, NavView, Observation, OutcomeFlag};
use crate::memory_graph::{MemoryGraph, SubtaskNode};
use crate::planning::{CandidatePlan, PlannerContext, Rollout};
use crate::srm::ReflectionSummary;

/// The seven cognition roles a backend family fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Planner,
    WorldModel,
    Evaluator,
    SrmAnalyzer,
    PrincipleAnalyzer,
    HeuristicExtractor,
    HeuristicMerger,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Role::Planner => "planner",
            Role::WorldModel => "world model",
            Role::Evaluator => "evaluator",
            Role::SrmAnalyzer => "reflection analyzer",
            Role::PrincipleAnalyzer => "principle analyzer",
            Role::HeuristicExtractor => "heuristic extractor",
            Role::HeuristicMerger => "heuristic merger",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Transport-level failure (network, process) after retries.
    #[error("{role} backend transport failure: {message}")]
    Transport { role: Role, message: String },
    /// The backend answered, but not in the shape the role requires.
    #[error("{role} backend returned a malformed response: {message}")]
    Malformed { role: Role, message: String },
    /// The remote endpoint rejected the credentials.
    #[error("{role} backend authentication failed: {message}")]
    Auth { role: Role, message: String },
    /// The request itself was unanswerable (e.g. empty window).
    #[error("{role} backend rejected the request: {message}")]
    Rejected { role: Role, message: String },
}

impl BackendError {
    pub fn role(&self) -> Role {
        match self {
            BackendError::Transport { role, .. }
            | BackendError::Malformed { role, .. }
            | BackendError::Auth { role, .. }
            | BackendError::Rejected { role, .. } => *role,
        }
    }
}

/// Proposes `n` candidate plans for the current view, conditioned on the
/// planning context (reflection, principles, heuristics).
pub trait PlannerBackend {
    fn propose(
        &self,
        view: &NavView<'_>,
        context: &PlannerContext,
        n: usize,
    ) -> Result<Vec<CandidatePlan>, BackendError>;
}

/// Predicts the observation after each of the first
/// `min(horizon, actions.len())` actions, without touching world state.
/// `seed` keys any stochasticity so imagination is replayable.
pub trait WorldModelBackend {
    fn imagine(
        &self,
        view: &NavView<'_>,
        actions: &[Action],
        horizon: usize,
        seed: u64,
    ) -> Result<Vec<Observation>, BackendError>;
}

/// Scores an imagined rollout against the goal; higher is better.
pub trait EvaluatorBackend {
    fn score(&self, rollout: &Rollout, view: &NavView<'_>) -> Result<f64, BackendError>;
}

/// Summarizes the recent subtask window. `span` gives the subtask
/// ordinals (first, last) the window covers.
pub trait SrmAnalyzerBackend {
    fn reflect(
        &self,
        window: &[&SubtaskNode],
        span: (u32, u32),
        view: &NavView<'_>,
        active_heuristics: &[MergedHeuristic],
    ) -> Result<ReflectionSummary, BackendError>;
}

/// Produces the text of one principle from a downstream trajectory
/// slice of a finalized episode.
pub trait PrincipleAnalyzerBackend {
    fn principle_text(
        &self,
        tau: &[&SubtaskNode],
        outcome: OutcomeFlag,
        goal: &GoalSpec,
        map: &GridMap,
    ) -> Result<String, BackendError>;
}

/// Mines reusable heuristics from a finalized episode.
pub trait HeuristicExtractorBackend {
    fn extract(&self, graph: &MemoryGraph, map: &GridMap) -> Result<Vec<Heuristic>, BackendError>;
}

/// Fuses the texts of clustered heuristics into one (description,
/// strategy) pair. Must be insensitive to member order.
pub trait HeuristicMergerBackend {
    fn merge_texts(&self, members: &[&Heuristic]) -> Result<(String, String), BackendError>;
}

/// One backend per role. Roles are filled independently, so families
/// can be mixed if ever needed.
pub struct BackendSet {
    pub planner: Box<dyn PlannerBackend + Send + Sync>,
    pub world_model: Box<dyn WorldModelBackend + Send + Sync>,
    pub evaluator: Box<dyn EvaluatorBackend + Send + Sync>,
    pub srm_analyzer: Box<dyn SrmAnalyzerBackend + Send + Sync>,
    pub principle_analyzer: Box<dyn PrincipleAnalyzerBackend + Send + Sync>,
    pub heuristic_extractor: Box<dyn HeuristicExtractorBackend + Send + Sync>,
    pub heuristic_merger: Box<dyn HeuristicMergerBackend + Send + Sync>,
}

impl BackendSet {
    /// The deterministic oracle family. `noise` is the world model's
    /// per-step perturbation probability; `seed` keys its noise stream.
    pub fn oracle(noise: f64, seed: u64, plan_cap: usize) -> Self {
        BackendSet {
            planner: Box::new(oracle::OraclePlanner { plan_cap }),
            world_model: Box::new(oracle::OracleWorldModel { noise, seed }),
            evaluator: Box::new(oracle::OracleEvaluator),
            srm_analyzer: Box::new(oracle::OracleSrmAnalyzer),
            principle_analyzer: Box::new(oracle::OraclePrincipleAnalyzer),
            heuristic_extractor: Box::new(oracle::OracleHeuristicExtractor),
            heuristic_merger: Box::new(oracle::OracleHeuristicMerger),
        }
    }
}
