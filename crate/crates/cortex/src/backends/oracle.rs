//! The oracle backend family: deterministic implementations of all seven
//! cognition roles, backed by world truth. They set the behavioral
//! reference the control loop is tested against — any backend family is
//! interchangeable with these — and their only stochastic element is the
//! world model's seeded noise.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BackendError, EvaluatorBackend, HeuristicExtractorBackend, HeuristicMergerBackend,
    PlannerBackend, PrincipleAnalyzerBackend, Role, SrmAnalyzerBackend, WorldModelBackend,
};
use crate::aki::{Heuristic, MergedHeuristic, PATTERN_DIRECT_APPROACH, PATTERN_DOOR_FIRST};
use crate::gridworld::{
    distance_field, geodesic, visible_cells, Action, Cell, GoalSpec, GridMap, NavView,
    Observation, OutcomeFlag, Pose, TaskKind, DIRECTION_OFFSETS, HEADINGS, SUCCESS_RADIUS,
};
use crate::hashing::mix_seed;
use crate::memory_graph::{MemoryGraph, SubtaskNode};
use crate::planning::{CandidatePlan, PlannerContext, Rollout};
use crate::srm::{Progress, ReflectionSummary, PATTERN_COLLISION_STREAK, PATTERN_OSCILLATION};
use crate::trail;

/// How far around a flagged cell frontiers are shunned.
const AVOID_RADIUS: i32 = 2;

/// Recommendation marker the planner parses for frontier exclusion.
pub fn avoid_marker(cell: Cell) -> String {
    format!("AVOID_FRONTIER:({}, {})", cell.x, cell.y)
}

/// Guiding-principle phrasing the planner can turn back into a waypoint.
pub fn goal_hint(cell: Cell) -> String {
    format!("toward ({}, {}) led to the goal", cell.x, cell.y)
}

/// Parse `"(x, y)"` at the head of `s`; returns the cell and consumed length.
fn parse_cell_at(s: &str) -> Option<(Cell, usize)> {
    let rest = s.strip_prefix('(')?;
    let close = rest.find(')')?;
    let inner = &rest[..close];
    let (xs, ys) = inner.split_once(',')?;
    let x: i32 = xs.trim().parse().ok()?;
    let y: i32 = ys.trim().parse().ok()?;
    Some((Cell::new(x, y), close + 2))
}

/// All cells written as `"{marker}(x, y)"` anywhere in `text`.
fn cells_after_marker(text: &str, marker: &str) -> Vec<Cell> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(pos) = rest.find(marker) {
        rest = &rest[pos + marker.len()..];
        if let Some((cell, used)) = parse_cell_at(rest) {
            out.push(cell);
            rest = &rest[used..];
        }
    }
    out
}

/// The waypoint of a guiding principle, if its text carries one.
pub fn parse_goal_hint(text: &str) -> Option<Cell> {
    let mut rest = text;
    while let Some(pos) = rest.find("toward ") {
        rest = &rest[pos + "toward ".len()..];
        if let Some((cell, used)) = parse_cell_at(rest) {
            if rest[used..].starts_with(" led to the goal") {
                return Some(cell);
            }
        }
    }
    None
}

/// Cells a cautionary principle warns about.
pub fn parse_caution_cells(text: &str) -> Vec<Cell> {
    let mut cells = cells_after_marker(text, "near ");
    cells.extend(cells_after_marker(text, "around "));
    cells
}

/// One motion action applied to a pose, walls ignored.
fn advance(pose: Pose, action: &Action) -> Pose {
    match action {
        Action::Forward => {
            let (dx, dy) = DIRECTION_OFFSETS[(pose.heading / 2) as usize];
            Pose::new(pose.cell.x + dx, pose.cell.y + dy, pose.heading)
        }
        Action::TurnRight => Pose { cell: pose.cell, heading: (pose.heading + 1) % HEADINGS },
        Action::TurnLeft => {
            Pose { cell: pose.cell, heading: (pose.heading + HEADINGS - 1) % HEADINGS }
        }
        _ => pose,
    }
}

/// Shortest action sequence from `from` to any cell satisfying `zone`:
/// breadth-first search over (cell, heading) states, so the length is
/// exact with turns included — descending a cell-distance field greedily
/// can buy a cheap first turn at the price of more turning later.
/// `None` when no zone cell is reachable; already inside yields `[]`.
fn search_route(map: &GridMap, from: Pose, zone: impl Fn(Cell) -> bool) -> Option<Vec<Action>> {
    if zone(from.cell) {
        return Some(Vec::new());
    }
    let index = |p: Pose| {
        ((p.cell.y * map.width + p.cell.x) as usize) * HEADINGS as usize + p.heading as usize
    };
    let mut parent: Vec<Option<(Pose, Action)>> =
        vec![None; (map.width * map.height) as usize * HEADINGS as usize];
    let mut seen = vec![false; parent.len()];
    let mut queue = std::collections::VecDeque::from([from]);
    seen[index(from)] = true;
    let mut arrival: Option<Pose> = None;
    'search: while let Some(p) = queue.pop_front() {
        // Fixed expansion order picks one canonical optimum.
        for action in [Action::Forward, Action::TurnRight, Action::TurnLeft] {
            let next = advance(p, &action);
            if action == Action::Forward && !map.is_free(next.cell) {
                continue;
            }
            let i = index(next);
            if seen[i] {
                continue;
            }
            seen[i] = true;
            parent[i] = Some((p, action));
            if zone(next.cell) {
                arrival = Some(next);
                break 'search;
            }
            queue.push_back(next);
        }
    }
    let end = arrival?;
    let mut actions = Vec::new();
    let mut cursor = end;
    while cursor != from {
        let (prev, action) = parent[index(cursor)].clone().expect("reached state has a parent");
        actions.push(action);
        cursor = prev;
    }
    actions.reverse();
    Some(actions)
}

/// Route to one specific cell: at most `cap` actions of the optimal
/// sequence plus the pose they end at. Unreachable targets yield none.
fn route_actions(map: &GridMap, from: Pose, to: Cell, cap: usize) -> (Vec<Action>, Pose) {
    let Some(mut actions) = search_route(map, from, |c| c == to) else {
        return (Vec::new(), from);
    };
    actions.truncate(cap);
    let pose = actions.iter().fold(from, advance);
    (actions, pose)
}

/// Where the terminal action completes the task, given a known target:
/// anywhere in the stop zone for view-goal navigation, next to (or on)
/// the subject for recognition and question goals.
fn completion_radius(kind: TaskKind) -> u32 {
    match kind {
        TaskKind::IgNav => SUCCESS_RADIUS,
        TaskKind::Ar | TaskKind::Aeqa => 1,
    }
}

/// Minimal actions to finish the task from `pose`: motion into the
/// completion zone plus the one terminal action. `None` when the zone is
/// unreachable.
fn remaining_actions(map: &GridMap, pose: Pose, target: Cell, kind: TaskKind) -> Option<usize> {
    let field = distance_field(map, target);
    let radius = completion_radius(kind);
    let route = search_route(map, pose, |c| field.get(c).is_some_and(|d| d <= radius))?;
    Some(route.len() + 1)
}

/// Truth-backed planner. Plan 0 exploits: it routes to the localized
/// target (or to a waypoint recalled from a guiding principle); the rest
/// explore nearby frontiers with distinct opening moves. Reflections and
/// heuristics shrink the candidate frontier set.
pub struct OraclePlanner {
    /// Maximum actions per proposed plan.
    pub plan_cap: usize,
}

impl OraclePlanner {
    fn avoided_cells(&self, view: &NavView<'_>, context: &PlannerContext) -> BTreeSet<Cell> {
        let mut avoid = BTreeSet::new();
        if let Some(r) = &context.recent_reflection {
            if r.failure_patterns.iter().any(|p| p == PATTERN_OSCILLATION) {
                for rec in &r.recommendations {
                    avoid.extend(cells_after_marker(rec, "AVOID_FRONTIER:"));
                }
            }
        }
        for sp in &context.retrieved_principles {
            if sp.principle.kind == crate::lpm::PrincipleKind::Cautionary {
                avoid.extend(parse_caution_cells(&sp.principle.text));
            }
        }
        // With oscillation named in the library, shun re-visited ground
        // proactively instead of waiting for a reflection to flag it.
        if context.active_heuristics.iter().any(|h| h.pattern_id == PATTERN_OSCILLATION) {
            avoid.extend(
                view.arrivals
                    .iter()
                    .filter(|(_, &n)| n >= 2)
                    .map(|(c, _)| *c),
            );
        }
        avoid
    }

    fn answer_text(goal: &GoalSpec) -> Option<String> {
        match goal {
            GoalSpec::IgNav { .. } => None,
            GoalSpec::Ar { category, .. } => Some(category.clone()),
            GoalSpec::Aeqa { category, color, .. } => Some(format!("{color} {category}")),
        }
    }

    fn exploit_plan(&self, view: &NavView<'_>, context: &PlannerContext) -> Option<CandidatePlan> {
        let cap = self.plan_cap.max(1);
        if let Some(target) = view.target {
            match view.goal.kind() {
                TaskKind::IgNav => {
                    // Head for the nearest cell of the stop zone, not the
                    // goal cell itself — walking the final radius would
                    // waste actions the task does not demand.
                    let field = distance_field(view.map, target);
                    let zone =
                        |c: Cell| field.get(c).is_some_and(|d| d <= SUCCESS_RADIUS);
                    let mut actions = search_route(view.map, view.pose, zone)?;
                    actions.truncate(cap.saturating_sub(1));
                    let end = actions.iter().fold(view.pose, advance);
                    let reasoning = if zone(end.cell) {
                        actions.push(Action::Stop);
                        vec![
                            format!("close in on the goal at ({}, {})", target.x, target.y),
                            "stop inside the goal zone".to_string(),
                        ]
                    } else {
                        vec![format!("close in on the goal at ({}, {})", target.x, target.y)]
                    };
                    if actions.is_empty() {
                        return None;
                    }
                    Some(CandidatePlan { index: 0, actions, reasoning })
                }
                TaskKind::Ar | TaskKind::Aeqa => {
                    if view.can_answer {
                        let text = Self::answer_text(view.goal)?;
                        Some(CandidatePlan {
                            index: 0,
                            actions: vec![Action::Answer(text)],
                            reasoning: vec!["answer from the observed object".to_string()],
                        })
                    } else {
                        let (actions, _) = route_actions(view.map, view.pose, target, cap);
                        if actions.is_empty() {
                            return None;
                        }
                        Some(CandidatePlan {
                            index: 0,
                            actions,
                            reasoning: vec![format!(
                                "move until ({}, {}) comes into view",
                                target.x, target.y
                            )],
                        })
                    }
                }
            }
        } else {
            // No localized target: follow the best recalled waypoint.
            let hint = context
                .retrieved_principles
                .iter()
                .filter(|sp| sp.principle.kind == crate::lpm::PrincipleKind::Guiding)
                .find_map(|sp| parse_goal_hint(&sp.principle.text))?;
            if !view.map.is_free(hint) || hint == view.pose.cell {
                return None;
            }
            let (actions, _) = route_actions(view.map, view.pose, hint, cap);
            if actions.is_empty() {
                return None;
            }
            Some(CandidatePlan {
                index: 0,
                actions,
                reasoning: vec![format!(
                    "retrace the recalled route toward ({}, {})",
                    hint.x, hint.y
                )],
            })
        }
    }
}

impl PlannerBackend for OraclePlanner {
    fn propose(
        &self,
        view: &NavView<'_>,
        context: &PlannerContext,
        n: usize,
    ) -> Result<Vec<CandidatePlan>, BackendError> {
        let n = n.max(1);
        let cap = self.plan_cap.max(1);
        let mut plans = Vec::new();
        if let Some(plan) = self.exploit_plan(view, context) {
            plans.push(plan);
        }

        let avoid = self.avoided_cells(view, context);
        let keep = |f: &Cell| !avoid.iter().any(|a| f.chebyshev(*a) <= AVOID_RADIUS);
        let filtered: Vec<Cell> = view.frontiers.iter().copied().filter(keep).collect();
        // Avoidance is advice, not a straitjacket: an emptied frontier
        // set falls back to the full one.
        let pool = if filtered.is_empty() { view.frontiers.clone() } else { filtered };

        let from_here = distance_field(view.map, view.pose.cell);
        let door_first = context
            .active_heuristics
            .iter()
            .any(|h| h.pattern_id == PATTERN_DOOR_FIRST);
        let mut ranked: Vec<(u32, u32, Cell)> = pool
            .into_iter()
            .filter(|f| *f != view.pose.cell)
            .filter_map(|f| from_here.get(f).map(|d| (d, f)))
            .map(|(d, f)| {
                // Door-first preference: corridor cells (outside every
                // room) lead to doorways, so rank them ahead.
                let in_room = u32::from(door_first && view.map.room_at(f).is_some());
                (in_room, d, f)
            })
            .collect();
        ranked.sort();

        let mut first_moves: BTreeSet<Action> =
            plans.iter().filter_map(|p| p.actions.first().cloned()).collect();
        for (_, _, frontier) in ranked {
            if plans.len() >= n {
                break;
            }
            let (actions, _) = route_actions(view.map, view.pose, frontier, cap);
            let Some(first) = actions.first().cloned() else { continue };
            if !first_moves.insert(first) {
                continue;
            }
            plans.push(CandidatePlan {
                index: plans.len(),
                actions,
                reasoning: vec![format!(
                    "push the seen boundary at ({}, {})",
                    frontier.x, frontier.y
                )],
            });
        }

        if plans.is_empty() {
            // Nothing to exploit and nowhere new to go: scan in place so
            // the cycle still has a legal plan.
            plans.push(CandidatePlan {
                index: 0,
                actions: vec![Action::TurnRight; cap.min(4)],
                reasoning: vec!["scan for an opening".to_string()],
            });
        }
        Ok(plans)
    }
}

/// Truth-backed world model: replays actions on the real map. With
/// `noise > 0`, each step's predicted pose is perturbed onto a random
/// free neighbor with that probability — imagination degrades while
/// execution stays exact.
pub struct OracleWorldModel {
    pub noise: f64,
    pub seed: u64,
}

impl WorldModelBackend for OracleWorldModel {
    fn imagine(
        &self,
        view: &NavView<'_>,
        actions: &[Action],
        horizon: usize,
        seed: u64,
    ) -> Result<Vec<Observation>, BackendError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.seed, seed]));
        let mut pose = view.pose;
        let mut out = Vec::new();
        for action in actions.iter().take(horizon.min(actions.len())) {
            pose = crate::gridworld::step(view.map, pose, action).pose;
            if rng.gen::<f64>() < self.noise {
                let neighbors: Vec<Cell> = DIRECTION_OFFSETS
                    .iter()
                    .map(|(dx, dy)| Cell::new(pose.cell.x + dx, pose.cell.y + dy))
                    .filter(|c| view.map.is_free(*c))
                    .collect();
                if !neighbors.is_empty() {
                    pose.cell = neighbors[rng.gen_range(0..neighbors.len())];
                }
            }
            out.push(Observation::capture(view.map, pose));
        }
        Ok(out)
    }
}

/// Truth-backed evaluator. With a localized target, an imagined future
/// is exactly as good as it is close to finishing: the negated count of
/// actions (turns included) still needed from its end pose. Otherwise a
/// future is worth the ground it would newly reveal.
pub struct OracleEvaluator;

impl EvaluatorBackend for OracleEvaluator {
    fn score(&self, rollout: &Rollout, view: &NavView<'_>) -> Result<f64, BackendError> {
        let Some(last) = rollout.predicted.last() else {
            return Err(BackendError::Rejected {
                role: Role::Evaluator,
                message: "empty rollout".to_string(),
            });
        };
        if let Some(target) = view.target {
            let score = match remaining_actions(view.map, last.pose, target, view.goal.kind()) {
                Some(k) => -(k as f64),
                None => -1.0e9,
            };
            Ok(score)
        } else {
            let mut novel: BTreeSet<Cell> = BTreeSet::new();
            for obs in &rollout.predicted {
                novel.extend(obs.cells.keys().filter(|c| !view.seen.contains(c)));
            }
            Ok(novel.len() as f64)
        }
    }
}

/// Truth-backed reflection: detects oscillation and collision streaks in
/// the window, judges progress by goal distance (or by freshly revealed
/// ground when the goal is not localized), and echoes whichever active
/// heuristics match the detected patterns.
pub struct OracleSrmAnalyzer;

impl SrmAnalyzerBackend for OracleSrmAnalyzer {
    fn reflect(
        &self,
        window: &[&SubtaskNode],
        span: (u32, u32),
        view: &NavView<'_>,
        active_heuristics: &[MergedHeuristic],
    ) -> Result<ReflectionSummary, BackendError> {
        if window.is_empty() {
            return Err(BackendError::Rejected {
                role: Role::SrmAnalyzer,
                message: "empty reflection window".to_string(),
            });
        }
        let poses = trail::stitched_poses(window);
        let mut failure_patterns = Vec::new();
        let mut recommendations = Vec::new();

        if let Some(cell) = trail::oscillation_cell(window) {
            failure_patterns.push(PATTERN_OSCILLATION.to_string());
            recommendations.push(avoid_marker(cell));
        }
        if trail::max_collision_streak(window) >= trail::COLLISION_STREAK_LEN {
            failure_patterns.push(PATTERN_COLLISION_STREAK.to_string());
            recommendations.push("BACK_OFF_AND_TURN before the next forward push".to_string());
        }

        let first = poses.first().expect("non-empty window has poses");
        let last = poses.last().expect("non-empty window has poses");
        let progress = if let Some(target) = view.target {
            let d0 = geodesic(view.map, first.cell, target);
            let d1 = geodesic(view.map, last.cell, target);
            match (d0, d1) {
                (Some(a), Some(b)) if b < a => Progress::Advancing,
                (Some(a), Some(b)) if b > a => Progress::Regressing,
                _ => Progress::Stalled,
            }
        } else {
            // Coverage proxy: did the window's end reveal any cell no
            // earlier pose in the window could see?
            let mut earlier = BTreeSet::new();
            for p in &poses[..poses.len() - 1] {
                earlier.extend(visible_cells(view.map, *p));
            }
            let fresh = visible_cells(view.map, *last)
                .iter()
                .any(|c| !earlier.contains(c));
            if fresh {
                Progress::Advancing
            } else {
                Progress::Stalled
            }
        };
        if progress != Progress::Advancing && failure_patterns.is_empty() {
            recommendations.push("COMMIT_TO_FRONTIER until it is cleared".to_string());
        }
        for h in active_heuristics {
            if failure_patterns.contains(&h.pattern_id) {
                recommendations.push(format!("APPLY_HEURISTIC:{}: {}", h.pattern_id, h.strategy));
            }
        }
        Ok(ReflectionSummary {
            progress_assessment: progress,
            failure_patterns,
            subgoal_context: window.last().expect("non-empty").rationale.clone(),
            recommendations,
            window_span: span,
        })
    }
}

/// Truth-backed principle distillation: templated text naming where the
/// trajectory slice went and how that related to the outcome.
pub struct OraclePrincipleAnalyzer;

impl PrincipleAnalyzerBackend for OraclePrincipleAnalyzer {
    fn principle_text(
        &self,
        tau: &[&SubtaskNode],
        outcome: OutcomeFlag,
        goal: &GoalSpec,
        map: &GridMap,
    ) -> Result<String, BackendError> {
        let poses = trail::stitched_poses(tau);
        let (Some(first), Some(last)) = (poses.first(), poses.last()) else {
            return Err(BackendError::Rejected {
                role: Role::PrincipleAnalyzer,
                message: "empty trajectory slice".to_string(),
            });
        };
        let _ = goal;
        let start = first.cell;
        let end = last.cell;
        let text = match outcome {
            OutcomeFlag::Success => {
                let base = format!(
                    "moving from ({}, {}) {}",
                    start.x,
                    start.y,
                    goal_hint(end)
                );
                match trail::first_room_transition(map, &poses)
                    .and_then(|i| map.room_at(poses[i].cell))
                {
                    Some(room) => format!("after entering room {}, {base}", room.label),
                    None => base,
                }
            }
            _ => {
                let collisions = trail::collision_count(tau);
                if collisions >= 2 || trail::max_collision_streak(tau) >= 2 {
                    format!(
                        "repeated collisions near ({}, {}) preceded the failure",
                        end.x, end.y
                    )
                } else if let Some(cell) = trail::oscillation_cell(tau) {
                    format!(
                        "oscillating around ({}, {}) burned the budget before the goal",
                        cell.x, cell.y
                    )
                } else {
                    format!(
                        "the route from ({}, {}) to ({}, {}) did not reach the goal",
                        start.x, start.y, end.x, end.y
                    )
                }
            }
        };
        Ok(text)
    }
}

/// Truth-backed heuristic mining: four fixed detectors over the whole
/// episode, each with a confidence proportional to its trigger strength.
pub struct OracleHeuristicExtractor;

impl HeuristicExtractorBackend for OracleHeuristicExtractor {
    fn extract(&self, graph: &MemoryGraph, map: &GridMap) -> Result<Vec<Heuristic>, BackendError> {
        if !graph.is_finalized() {
            return Err(BackendError::Rejected {
                role: Role::HeuristicExtractor,
                message: "episode is not finalized".to_string(),
            });
        }
        let subtasks: Vec<&SubtaskNode> = graph.subtasks_in_order().map(|(_, s)| s).collect();
        if subtasks.is_empty() {
            return Ok(Vec::new());
        }
        let outcome = graph.outcome();
        let episode = graph.episode_id().to_string();
        let poses = trail::stitched_poses(&subtasks);
        let mut out = Vec::new();

        if let Some((_, n)) = trail::most_revisited(&subtasks) {
            if n >= trail::OSCILLATION_VISITS {
                out.push(Heuristic {
                    pattern_id: PATTERN_OSCILLATION.to_string(),
                    description: "the agent kept re-entering the same cell".to_string(),
                    strategy: "avoid revisiting recent cells; commit to one frontier until it opens"
                        .to_string(),
                    confidence: (f64::from(n) / 4.0).min(1.0),
                    outcome_tag: outcome,
                    source_episode: episode.clone(),
                });
            }
        }
        let streak = trail::max_collision_streak(&subtasks);
        if streak >= trail::COLLISION_STREAK_LEN {
            out.push(Heuristic {
                pattern_id: PATTERN_COLLISION_STREAK.to_string(),
                description: "consecutive forward pushes ended in collisions".to_string(),
                strategy: "after a collision, turn before pushing forward again".to_string(),
                confidence: (f64::from(streak) / 4.0).min(1.0),
                outcome_tag: outcome,
                source_episode: episode.clone(),
            });
        }
        if outcome == OutcomeFlag::Success {
            if trail::first_room_transition(map, &poses).is_some() {
                out.push(Heuristic {
                    pattern_id: PATTERN_DOOR_FIRST.to_string(),
                    description: "a room boundary was crossed on the way to the goal".to_string(),
                    strategy: "clear the nearest doorway before sweeping a room".to_string(),
                    confidence: 0.8,
                    outcome_tag: outcome,
                    source_episode: episode.clone(),
                });
            }
            let actual = trail::travel_distance(&subtasks);
            let optimal = geodesic(map, poses[0].cell, graph.goal().focus_cell());
            if let Some(optimal) = optimal {
                if optimal > 0 && actual > 0 {
                    let ratio = f64::from(actual) / f64::from(optimal);
                    if ratio <= 1.2 {
                        out.push(Heuristic {
                            pattern_id: PATTERN_DIRECT_APPROACH.to_string(),
                            description: "the goal was reached with little wasted motion"
                                .to_string(),
                            strategy: "approach the localized goal directly".to_string(),
                            confidence: (f64::from(optimal) / f64::from(actual)).min(1.0),
                            outcome_tag: outcome,
                            source_episode: episode.clone(),
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Truth-backed text fusion: unique member texts, sorted and joined, so
/// the result cannot depend on member order. When failures outnumber
/// successes the description leads with a caution.
pub struct OracleHeuristicMerger;

impl HeuristicMergerBackend for OracleHeuristicMerger {
    fn merge_texts(&self, members: &[&Heuristic]) -> Result<(String, String), BackendError> {
        if members.is_empty() {
            return Err(BackendError::Rejected {
                role: Role::HeuristicMerger,
                message: "empty cluster".to_string(),
            });
        }
        let joined = |texts: Vec<&str>| -> String {
            let unique: BTreeSet<&str> = texts.into_iter().collect();
            unique.into_iter().collect::<Vec<_>>().join("; ")
        };
        let mut description =
            joined(members.iter().map(|m| m.description.as_str()).collect());
        let strategy = joined(members.iter().map(|m| m.strategy.as_str()).collect());
        let failures = members
            .iter()
            .filter(|m| m.outcome_tag != OutcomeFlag::Success)
            .count();
        if failures * 2 > members.len() {
            description = format!("Caution: {description}");
        }
        Ok((description, strategy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{EpisodeSim, Occupancy};

    fn open_map() -> GridMap {
        let mut occ = vec![Occupancy::Wall; 400];
        for y in 1..19 {
            for x in 1..19 {
                occ[y * 20 + x] = Occupancy::Free;
            }
        }
        GridMap::from_parts(20, 20, 0, occ, vec![], vec![])
    }

    #[test]
    fn routes_are_turn_then_forward_and_capped() {
        let map = open_map();
        // Straight east: 4 turns from north to east, then forwards.
        let (actions, end) = route_actions(&map, Pose::new(2, 10, 0), Cell::new(6, 10), 32);
        assert_eq!(actions[..4], vec![Action::TurnRight; 4]);
        assert_eq!(actions[4..].len(), 4);
        assert!(actions[4..].iter().all(|a| *a == Action::Forward));
        assert_eq!(end.cell, Cell::new(6, 10));
        // The cap truncates mid-route.
        let (capped, _) = route_actions(&map, Pose::new(2, 10, 0), Cell::new(6, 10), 6);
        assert_eq!(capped.len(), 6);
        // Already there: no actions.
        let (none, _) = route_actions(&map, Pose::new(2, 10, 4), Cell::new(2, 10), 8);
        assert!(none.is_empty());
    }

    #[test]
    fn routes_prefer_the_current_heading_on_diagonals() {
        let map = open_map();
        // North-east diagonal, already facing north-east (heading 2).
        let (actions, _) = route_actions(&map, Pose::new(3, 10, 2), Cell::new(8, 5), 32);
        assert!(actions.iter().all(|a| *a == Action::Forward), "{actions:?}");
        assert_eq!(actions.len(), 5);
    }

    #[test]
    fn marker_round_trips() {
        let c = Cell::new(7, 12);
        assert_eq!(cells_after_marker(&avoid_marker(c), "AVOID_FRONTIER:"), vec![c]);
        assert_eq!(parse_goal_hint(&format!("moving from (1, 2) {}", goal_hint(c))), Some(c));
        assert_eq!(parse_goal_hint("toward the light"), None);
        let caution = "repeated collisions near (3, 4) preceded the failure";
        assert_eq!(parse_caution_cells(caution), vec![Cell::new(3, 4)]);
    }

    #[test]
    fn planner_stops_at_the_goal_zone_when_localized() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        // Sighted (range 6) but one cell outside the stop zone (radius 5).
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(9, 10, 0), 100);
        let view = sim.view();
        assert_eq!(view.target, Some(Cell::new(9, 4)));
        let planner = OraclePlanner { plan_cap: 8 };
        let plans = planner.propose(&view, &PlannerContext::new(goal), 3).unwrap();
        // One step into the zone, then stop — no walking the radius down.
        assert_eq!(plans[0].actions, vec![Action::Forward, Action::Stop]);
        // Exploration plans open with different moves.
        let firsts: Vec<&Action> = plans.iter().filter_map(|p| p.actions.first()).collect();
        let unique: BTreeSet<String> = firsts.iter().map(|a| a.token()).collect();
        assert_eq!(unique.len(), plans.len());
    }

    #[test]
    fn planner_follows_a_guiding_principle_when_blind() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(17, 17, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(2, 2, 4), 100);
        let view = sim.view();
        assert_eq!(view.target, None);
        let mut context = PlannerContext::new(goal.clone());
        let planner = OraclePlanner { plan_cap: 6 };
        let blind = planner.propose(&view, &context, 3).unwrap();
        assert!(blind.iter().all(|p| !p.reasoning[0].contains("recalled")));
        // Inject a guiding principle pointing at the goal region.
        let text = format!("moving from (2, 2) {}", goal_hint(Cell::new(16, 16)));
        context.retrieved_principles = vec![crate::lpm::ScoredPrinciple {
            principle: crate::lpm::Principle {
                kind: crate::lpm::PrincipleKind::Guiding,
                text,
                source_episode: "ep-past".into(),
                source_subtask: crate::memory_graph::NodeId(2),
                embedding: crate::lpm::EmbeddingVector::zeros(crate::lpm::EMBED_DIM),
            },
            similarity: 0.93,
        }];
        let guided = planner.propose(&view, &context, 3).unwrap();
        assert!(guided[0].reasoning[0].contains("recalled route toward (16, 16)"));
    }

    #[test]
    fn reflection_oscillation_shrinks_the_frontier_pool() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(17, 17, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(9, 9, 0), 100);
        let view = sim.view();
        let planner = OraclePlanner { plan_cap: 6 };
        let mut context = PlannerContext::new(goal);
        // Flag the nearest frontier cell as an oscillation site.
        let flagged = view.frontiers[0];
        context.recent_reflection = Some(ReflectionSummary {
            progress_assessment: Progress::Stalled,
            failure_patterns: vec![PATTERN_OSCILLATION.to_string()],
            subgoal_context: "explore".to_string(),
            recommendations: vec![avoid_marker(flagged)],
            window_span: (0, 4),
        });
        let adjusted = planner.propose(&view, &context, 3).unwrap();
        assert!(!adjusted.is_empty());
        for plan in &adjusted {
            if let Some(rest) = plan.reasoning[0].strip_prefix("push the seen boundary at ") {
                let (cell, _) = parse_cell_at(rest).unwrap();
                assert!(cell.chebyshev(flagged) > AVOID_RADIUS, "still targeting {cell:?}");
            }
        }
    }

    #[test]
    fn noisy_imagination_diverges_but_replays_exactly() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(17, 17, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(3, 10, 4), 100);
        let view = sim.view();
        let actions = vec![Action::Forward; 6];
        let clean = OracleWorldModel { noise: 0.0, seed: 7 };
        let noisy = OracleWorldModel { noise: 1.0, seed: 7 };
        let truth = clean.imagine(&view, &actions, 6, 11).unwrap();
        assert_eq!(truth.len(), 6);
        assert_eq!(truth.last().unwrap().pose.cell, Cell::new(9, 10));
        let fuzzy_a = noisy.imagine(&view, &actions, 6, 11).unwrap();
        let fuzzy_b = noisy.imagine(&view, &actions, 6, 11).unwrap();
        assert_eq!(fuzzy_a, fuzzy_b, "same seed must replay identically");
        assert_ne!(fuzzy_a, truth, "full noise must disturb the rollout");
        // Horizon truncates.
        let short = clean.imagine(&view, &actions, 4, 11).unwrap();
        assert_eq!(short.len(), 4);
    }

    #[test]
    fn evaluator_prefers_endings_nearer_the_target() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(9, 9, 0), 100);
        let view = sim.view();
        let eval = OracleEvaluator;
        let at = |cell: Cell| Rollout {
            predicted: vec![Observation::capture(&map, Pose { cell, heading: 0 })],
            source_plan_index: 0,
        };
        let near = eval.score(&at(Cell::new(9, 5)), &view).unwrap();
        let far = eval.score(&at(Cell::new(9, 12)), &view).unwrap();
        assert!(near > far);
        assert_eq!(near, -1.0);
    }

    #[test]
    fn evaluator_counts_fresh_ground_when_blind() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(17, 17, 0));
        let sim = EpisodeSim::new(&map, goal.clone(), Pose::new(3, 3, 8), 100);
        let view = sim.view();
        assert_eq!(view.target, None);
        let eval = OracleEvaluator;
        // Staying put reveals nothing new; walking south does.
        let stay = Rollout {
            predicted: vec![Observation::capture(&map, view.pose)],
            source_plan_index: 0,
        };
        let go = Rollout {
            predicted: vec![
                Observation::capture(&map, Pose::new(3, 6, 8)),
                Observation::capture(&map, Pose::new(3, 9, 8)),
            ],
            source_plan_index: 1,
        };
        assert_eq!(eval.score(&stay, &view).unwrap(), 0.0);
        assert!(eval.score(&go, &view).unwrap() > 0.0);
    }

    #[test]
    fn merger_is_cautious_when_failures_dominate() {
        let merger = OracleHeuristicMerger;
        let h = |tag, ep: &str| Heuristic {
            pattern_id: PATTERN_OSCILLATION.to_string(),
            description: "the agent kept re-entering the same cell".to_string(),
            strategy: "commit to one frontier".to_string(),
            confidence: 0.8,
            outcome_tag: tag,
            source_episode: ep.to_string(),
        };
        let fail_a = h(OutcomeFlag::Failure, "e0");
        let fail_b = h(OutcomeFlag::Failure, "e1");
        let win = h(OutcomeFlag::Success, "e2");
        let (desc, strat) = merger.merge_texts(&[&fail_a, &fail_b, &win]).unwrap();
        assert!(desc.starts_with("Caution: "));
        assert_eq!(strat, "commit to one frontier");
        let (balanced, _) = merger.merge_texts(&[&fail_a, &win]).unwrap();
        assert!(!balanced.starts_with("Caution: "));
    }
}
