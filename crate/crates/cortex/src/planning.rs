//! The plan–imagine–verify–execute cycle. Each cycle proposes candidate
//! plans, splits every plan into rationale-aligned subtask units,
//! imagines each plan forward on the world model, scores the imagined
//! futures, then executes the best plan's units for real — aborting a
//! unit on collision and replanning from wherever that leaves the agent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aki::MergedHeuristic;
use crate::backends::{BackendError, BackendSet};
use crate::config::CortexConfig;
use crate::gridworld::{Action, EpisodeSim, GoalSpec, NavView, Observation};
use crate::hashing::{fnv1a64_tokens, mix_seed};
use crate::lpm::ScoredPrinciple;
use crate::memory_graph::{GraphError, MemoryGraph, ObservationId, SubtaskNode, SubtaskStatus};
use crate::srm::ReflectionSummary;

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("plan {0} has an empty reasoning list")]
    EmptyReasoning(usize),
    #[error("plan {0} has no actions")]
    EmptyActions(usize),
    #[error("empty rollout for plan {0}")]
    EmptyRollout(usize),
    #[error("plan {plan_index} scored a non-finite value {value}")]
    NonFiniteScore { plan_index: usize, value: f64 },
    #[error("no candidate plans to select from")]
    NoCandidates,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// One proposed plan: a flat action sequence and the reasoning steps
/// behind it. `index` is its position in the proposal batch and breaks
/// score ties (earlier wins).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePlan {
    pub index: usize,
    pub actions: Vec<Action>,
    pub reasoning: Vec<String>,
}

/// A contiguous run of plan actions owned by one reasoning step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtaskUnit {
    pub actions: Vec<Action>,
    pub rationale: String,
}

/// Imagined future of one plan: the predicted observation after each of
/// the first `min(horizon, len)` actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub predicted: Vec<Observation>,
    pub source_plan_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPlan {
    pub plan: CandidatePlan,
    pub subtasks: Vec<SubtaskUnit>,
    pub rollout: Rollout,
    pub score: f64,
}

/// Everything the planner is conditioned on beyond the current view.
#[derive(Debug, Clone)]
pub struct PlannerContext {
    pub goal: GoalSpec,
    pub recent_reflection: Option<ReflectionSummary>,
    pub retrieved_principles: Vec<ScoredPrinciple>,
    pub active_heuristics: Vec<MergedHeuristic>,
    /// Planning cycle counter; indexes trajectory nodes.
    pub step: u32,
}

impl PlannerContext {
    pub fn new(goal: GoalSpec) -> Self {
        PlannerContext {
            goal,
            recent_reflection: None,
            retrieved_principles: Vec::new(),
            active_heuristics: Vec::new(),
            step: 0,
        }
    }

    /// Install a reflection, replacing any previous one: only the latest
    /// summary conditions the next cycle.
    pub fn inject_reflection(&mut self, summary: ReflectionSummary) {
        self.recent_reflection = Some(summary);
    }
}

/// Stable digest of a plan's actions and reasoning, recorded on the
/// trajectory node so a replay can match plans across runs.
pub fn plan_digest(plan: &CandidatePlan) -> String {
    let tokens: Vec<String> = plan
        .actions
        .iter()
        .map(Action::token)
        .chain(plan.reasoning.iter().cloned())
        .collect();
    format!("{:016x}", fnv1a64_tokens(&tokens))
}

/// Split a plan's actions into one contiguous unit per reasoning step.
/// A single rationale takes the whole plan; matching counts pair 1:1;
/// otherwise actions split as evenly as possible with earlier units
/// taking the remainder. Surplus rationales (more reasoning steps than
/// actions) fold into the final unit so no reasoning is dropped.
pub fn distribute_subtasks(plan: &CandidatePlan) -> Result<Vec<SubtaskUnit>, PlanningError> {
    if plan.reasoning.is_empty() {
        return Err(PlanningError::EmptyReasoning(plan.index));
    }
    if plan.actions.is_empty() {
        return Err(PlanningError::EmptyActions(plan.index));
    }
    let a = plan.actions.len();
    let r = plan.reasoning.len();
    if r == 1 {
        return Ok(vec![SubtaskUnit {
            actions: plan.actions.clone(),
            rationale: plan.reasoning[0].clone(),
        }]);
    }
    let units = r.min(a);
    let base = a / units;
    let extra = a % units;
    let mut out = Vec::with_capacity(units);
    let mut cursor = 0;
    for i in 0..units {
        let len = base + usize::from(i < extra);
        let rationale = if i == units - 1 && r > units {
            plan.reasoning[i..].join("; ")
        } else {
            plan.reasoning[i].clone()
        };
        out.push(SubtaskUnit {
            actions: plan.actions[cursor..cursor + len].to_vec(),
            rationale,
        });
        cursor += len;
    }
    debug_assert_eq!(cursor, a);
    Ok(out)
}

/// Imagine a plan forward: flatten its units and ask the world model for
/// the first `horizon` predicted observations.
pub fn imagine(
    backends: &BackendSet,
    view: &NavView<'_>,
    plan_index: usize,
    subtasks: &[SubtaskUnit],
    horizon: usize,
    seed: u64,
) -> Result<Rollout, PlanningError> {
    let actions: Vec<Action> = subtasks.iter().flat_map(|u| u.actions.iter().cloned()).collect();
    let predicted = backends.world_model.imagine(view, &actions, horizon, seed)?;
    Ok(Rollout { predicted, source_plan_index: plan_index })
}

/// Score a rollout. Empty rollouts and non-finite scores are errors:
/// a plan that cannot be imagined cannot be compared.
pub fn verify(
    backends: &BackendSet,
    view: &NavView<'_>,
    rollout: &Rollout,
) -> Result<f64, PlanningError> {
    if rollout.predicted.is_empty() {
        return Err(PlanningError::EmptyRollout(rollout.source_plan_index));
    }
    let score = backends.evaluator.score(rollout, view)?;
    if !score.is_finite() {
        return Err(PlanningError::NonFiniteScore {
            plan_index: rollout.source_plan_index,
            value: score,
        });
    }
    Ok(score)
}

/// Pick the best-scoring plan; ties go to the lowest plan index.
pub fn select(mut scored: Vec<ScoredPlan>) -> Result<ScoredPlan, PlanningError> {
    if scored.is_empty() {
        return Err(PlanningError::NoCandidates);
    }
    if let Some(bad) = scored.iter().find(|s| !s.score.is_finite()) {
        return Err(PlanningError::NonFiniteScore {
            plan_index: scored_index(bad),
            value: bad.score,
        });
    }
    scored.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .expect("finite scores")
            .then(scored_index(x).cmp(&scored_index(y)))
    });
    Ok(scored.remove(0))
}

fn scored_index(s: &ScoredPlan) -> usize {
    s.plan.index
}

/// What one control cycle did.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub selected_index: usize,
    pub selected_score: f64,
    pub selected_digest: String,
    /// Subtask units actually recorded (aborted ones included).
    pub units_recorded: usize,
    /// A unit was cut short by a collision this cycle.
    pub collided: bool,
    /// The episode is over (terminal action or budget).
    pub done: bool,
}

/// Run one full cycle: propose, distribute, imagine, verify, select,
/// execute. The selected plan is executed unit by unit; a collision
/// aborts the unit at the collision point and drops the rest of the
/// plan, leaving the next cycle to replan. Backend failures abort the
/// cycle and finalize the episode as a failure before propagating.
pub fn run_cycle(
    sim: &mut EpisodeSim<'_>,
    backends: &BackendSet,
    graph: &mut MemoryGraph,
    context: &mut PlannerContext,
    config: &CortexConfig,
) -> Result<CycleOutcome, PlanningError> {
    assert!(!sim.is_done(), "cycle on a finished episode");
    let view = sim.view();
    let horizon = config.imagination_horizon;
    let episode_key = crate::hashing::fnv1a64(graph.episode_id().as_bytes());

    let cycle = (|| -> Result<ScoredPlan, PlanningError> {
        let plans = backends.planner.propose(&view, context, config.n_candidates)?;
        if plans.is_empty() {
            return Err(PlanningError::NoCandidates);
        }
        let mut scored = Vec::with_capacity(plans.len());
        for plan in plans {
            let subtasks = distribute_subtasks(&plan)?;
            let seed = mix_seed(&[config.seed, episode_key, u64::from(context.step), plan.index as u64]);
            let rollout = imagine(backends, &view, plan.index, &subtasks, horizon, seed)?;
            let score = verify(backends, &view, &rollout)?;
            scored.push(ScoredPlan { plan, subtasks, rollout, score });
        }
        select(scored)
    })();

    let selected = match cycle {
        Ok(s) => s,
        Err(err) => {
            // A cognition failure ends the episode as a failure; the
            // graph stays consistent for post-mortem distillation.
            let _ = graph.finalize_episode(crate::gridworld::OutcomeFlag::Failure);
            return Err(err);
        }
    };

    let digest = plan_digest(&selected.plan);
    let cycle_observation = ObservationId(view.observation.digest());
    let mut outcome = CycleOutcome {
        selected_index: selected.plan.index,
        selected_score: selected.score,
        selected_digest: digest.clone(),
        units_recorded: 0,
        collided: false,
        done: false,
    };

    'units: for unit in &selected.subtasks {
        if sim.is_done() {
            break;
        }
        let pre = ObservationId(sim.observe().digest());
        let mut trace = vec![sim.pose()];
        let mut collided_here = false;
        for action in &unit.actions {
            let exec = sim.execute(action);
            trace.push(exec.pose);
            if exec.collided {
                collided_here = true;
            }
            if exec.collided || exec.done {
                break;
            }
        }
        // A unit counts as executed only when every planned action ran;
        // collisions, terminals, and budget exhaustion all cut it short.
        let status = if trace.len() == unit.actions.len() + 1 {
            SubtaskStatus::Executed
        } else {
            SubtaskStatus::Aborted
        };
        let node = SubtaskNode {
            actions: unit.actions.clone(),
            rationale: unit.rationale.clone(),
            status,
            pre_observation: pre,
            post_observation: ObservationId(sim.observe().digest()),
            pose_trace: trace,
        };
        graph.append_subtask(context.step, &digest, cycle_observation, node)?;
        outcome.units_recorded += 1;
        if collided_here {
            outcome.collided = true;
            break 'units; // drop the remaining units and replan
        }
        if sim.is_done() {
            break 'units;
        }
    }

    context.step += 1;
    outcome.done = sim.is_done();
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(index: usize, actions: usize, reasoning: &[&str]) -> CandidatePlan {
        CandidatePlan {
            index,
            actions: vec![Action::Forward; actions],
            reasoning: reasoning.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn one_rationale_owns_the_whole_plan() {
        let units = distribute_subtasks(&plan(0, 4, &["cross the room"])).unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].actions.len(), 4);
        assert_eq!(units[0].rationale, "cross the room");
    }

    #[test]
    fn matching_counts_pair_one_to_one() {
        let units = distribute_subtasks(&plan(0, 3, &["a", "b", "c"])).unwrap();
        assert_eq!(units.len(), 3);
        assert!(units.iter().all(|u| u.actions.len() == 1));
    }

    #[test]
    fn uneven_splits_front_load_the_remainder() {
        let units = distribute_subtasks(&plan(0, 5, &["first", "second"])).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].actions.len(), 3);
        assert_eq!(units[1].actions.len(), 2);
        let units = distribute_subtasks(&plan(0, 7, &["a", "b", "c"])).unwrap();
        let sizes: Vec<usize> = units.iter().map(|u| u.actions.len()).collect();
        assert_eq!(sizes, [3, 2, 2]);
    }

    #[test]
    fn surplus_rationales_fold_into_the_last_unit() {
        let units = distribute_subtasks(&plan(0, 2, &["a", "b", "c"])).unwrap();
        assert_eq!(units.len(), 2);
        assert_eq!(units[0].rationale, "a");
        assert_eq!(units[1].rationale, "b; c");
    }

    #[test]
    fn empty_reasoning_is_rejected() {
        let err = distribute_subtasks(&plan(7, 3, &[])).unwrap_err();
        assert!(matches!(err, PlanningError::EmptyReasoning(7)));
    }

    #[test]
    fn selection_takes_the_best_and_breaks_ties_low() {
        let mk = |index: usize, score: f64| ScoredPlan {
            plan: plan(index, 1, &["r"]),
            subtasks: vec![],
            rollout: Rollout { predicted: vec![], source_plan_index: index },
            score,
        };
        let best = select(vec![mk(0, 1.0), mk(1, 3.0), mk(2, 2.0)]).unwrap();
        assert_eq!(best.plan.index, 1);
        let tied = select(vec![mk(2, 5.0), mk(0, 5.0), mk(1, 5.0)]).unwrap();
        assert_eq!(tied.plan.index, 0);
        assert!(matches!(select(vec![]), Err(PlanningError::NoCandidates)));
        let err = select(vec![mk(3, f64::NAN)]).unwrap_err();
        assert!(matches!(err, PlanningError::NonFiniteScore { plan_index: 3, .. }));
    }

    #[test]
    fn plan_digests_distinguish_reasoning() {
        let a = plan(0, 3, &["go"]);
        let mut b = plan(0, 3, &["go"]);
        assert_eq!(plan_digest(&a), plan_digest(&b));
        b.reasoning = vec!["stay".into()];
        assert_ne!(plan_digest(&a), plan_digest(&b));
    }
}
