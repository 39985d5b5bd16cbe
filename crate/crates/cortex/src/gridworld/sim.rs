//! Episode runtime: owns the agent's mutable state on an immutable map,
//! enforces the step budget and terminal-action legality, and exposes the
//! read-only view that cognition backends plan against.

use std::collections::{BTreeMap, BTreeSet};

use super::map::{Cell, GridMap};
use super::metrics::EpisodeRecord;
use super::motion::{step, Action, Pose, DIRECTION_OFFSETS};
use super::observe::{visible_cells, Observation};
use super::search::geodesic;
use super::task::{evaluate_outcome, EpisodeOutcome, GoalSpec, TaskError};

/// Read-only snapshot handed to backends each planning cycle. The map is
/// world knowledge; partial observability enters through `seen`,
/// `frontiers`, and the target-localization fields.
#[derive(Debug)]
pub struct NavView<'a> {
    pub map: &'a GridMap,
    pub goal: &'a GoalSpec,
    pub pose: Pose,
    pub observation: Observation,
    /// Every cell observed so far this episode.
    pub seen: &'a BTreeSet<Cell>,
    /// How many times each cell has been entered (the start cell counts
    /// as one arrival). Turning in place never increments.
    pub arrivals: &'a BTreeMap<Cell, u32>,
    /// Seen free cells bordering unseen ground, sorted.
    pub frontiers: Vec<Cell>,
    /// The goal/target cell once localized; navigation goals stay `None`
    /// until their cell has been observed.
    pub target: Option<Cell>,
    /// Whether the focus cell has been observed, i.e. an answer would be
    /// grounded in a view rather than a guess.
    pub can_answer: bool,
    pub steps_used: u32,
    pub budget: u32,
}

/// Result of executing one action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecStep {
    pub pose: Pose,
    pub collided: bool,
    /// The episode reached a terminal action or the budget.
    pub done: bool,
}

#[derive(Debug)]
pub struct EpisodeSim<'a> {
    map: &'a GridMap,
    goal: GoalSpec,
    start: Pose,
    pose: Pose,
    budget: u32,
    steps: u32,
    forward_steps: u32,
    collisions: u32,
    seen: BTreeSet<Cell>,
    arrivals: BTreeMap<Cell, u32>,
    target_sighted: bool,
    terminal: Option<Action>,
}

impl<'a> EpisodeSim<'a> {
    /// Start an episode at `start`, which must be a free cell. The
    /// initial observation is taken immediately.
    pub fn new(map: &'a GridMap, goal: GoalSpec, start: Pose, budget: u32) -> Self {
        assert!(map.is_free(start.cell), "start pose must be on a free cell");
        let mut sim = Self {
            map,
            goal,
            start,
            pose: start,
            budget,
            steps: 0,
            forward_steps: 0,
            collisions: 0,
            seen: BTreeSet::new(),
            arrivals: BTreeMap::from([(start.cell, 1)]),
            target_sighted: false,
            terminal: None,
        };
        sim.absorb_view();
        sim
    }

    fn absorb_view(&mut self) {
        let visible = visible_cells(self.map, self.pose);
        if visible.contains(&self.goal.focus_cell()) {
            self.target_sighted = true;
        }
        self.seen.extend(visible);
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn start_pose(&self) -> Pose {
        self.start
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.goal
    }

    pub fn map(&self) -> &'a GridMap {
        self.map
    }

    pub fn steps_used(&self) -> u32 {
        self.steps
    }

    pub fn forward_steps(&self) -> u32 {
        self.forward_steps
    }

    pub fn collisions(&self) -> u32 {
        self.collisions
    }

    pub fn seen(&self) -> &BTreeSet<Cell> {
        &self.seen
    }

    pub fn arrivals(&self) -> &BTreeMap<Cell, u32> {
        &self.arrivals
    }

    pub fn target_sighted(&self) -> bool {
        self.target_sighted
    }

    pub fn is_done(&self) -> bool {
        self.terminal.is_some() || self.steps >= self.budget
    }

    /// The terminal action that ended the episode, if one did (budget
    /// exhaustion leaves this `None`).
    pub fn terminal_action(&self) -> Option<&Action> {
        self.terminal.as_ref()
    }

    pub fn observe(&self) -> Observation {
        Observation::capture(self.map, self.pose)
    }

    /// Where the agent believes the goal is. Recognition targets and
    /// question subjects are named by the instruction, so they are known
    /// from the start; navigation goals only after being sighted.
    pub fn known_target(&self) -> Option<Cell> {
        match &self.goal {
            GoalSpec::IgNav { goal_cell, .. } => self.target_sighted.then_some(*goal_cell),
            GoalSpec::Ar { target_cell, .. } => Some(*target_cell),
            GoalSpec::Aeqa { subject, .. } => Some(*subject),
        }
    }

    /// Seen free cells with at least one unseen in-bounds neighbor.
    pub fn frontiers(&self) -> Vec<Cell> {
        self.seen
            .iter()
            .copied()
            .filter(|&c| self.map.is_free(c))
            .filter(|&c| {
                DIRECTION_OFFSETS.iter().any(|(dx, dy)| {
                    let n = Cell::new(c.x + dx, c.y + dy);
                    self.map.in_bounds(n) && !self.seen.contains(&n)
                })
            })
            .collect()
    }

    pub fn view(&self) -> NavView<'_> {
        NavView {
            map: self.map,
            goal: &self.goal,
            pose: self.pose,
            observation: self.observe(),
            seen: &self.seen,
            arrivals: &self.arrivals,
            frontiers: self.frontiers(),
            target: self.known_target(),
            can_answer: self.target_sighted,
            steps_used: self.steps,
            budget: self.budget,
        }
    }

    /// Execute one action. Every call consumes budget; a terminal action
    /// of the wrong kind for the goal is a wasted step rather than an
    /// episode end. Panics if called on a finished episode.
    pub fn execute(&mut self, action: &Action) -> ExecStep {
        assert!(!self.is_done(), "execute on a finished episode");
        self.steps += 1;
        let mut collided = false;
        if action.is_terminal() {
            if self.goal.terminal_is_legal(action) {
                self.terminal = Some(action.clone());
            }
        } else {
            let result = step(self.map, self.pose, action);
            collided = result.collided;
            if collided {
                self.collisions += 1;
            }
            if *action == Action::Forward && !collided {
                self.forward_steps += 1;
            }
            if result.pose.cell != self.pose.cell {
                *self.arrivals.entry(result.pose.cell).or_insert(0) += 1;
            }
            self.pose = result.pose;
            self.absorb_view();
        }
        ExecStep { pose: self.pose, collided, done: self.is_done() }
    }

    /// Score the finished episode.
    pub fn outcome(&self) -> Result<EpisodeOutcome, TaskError> {
        debug_assert!(self.is_done(), "outcome of an unfinished episode");
        evaluate_outcome(self.map, &self.goal, self.terminal.as_ref(), self.pose.cell)
    }

    /// Reduce the finished episode to the metrics row. `oscillation` is
    /// detected by the caller from the episode's pose traces.
    pub fn record(&self, episode_id: &str, oscillation: bool) -> Result<EpisodeRecord, TaskError> {
        let outcome = self.outcome()?;
        let shortest = geodesic(self.map, self.start.cell, self.goal.focus_cell()).unwrap_or(0);
        Ok(EpisodeRecord {
            episode_id: episode_id.to_string(),
            task_kind: self.goal.kind(),
            success: outcome.success,
            shortest,
            actual: self.forward_steps,
            total_steps: self.steps,
            answer_score: outcome.answer_score,
            oscillation_failure: !outcome.success && oscillation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::map::Occupancy;

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
    fn navigation_goal_localizes_only_on_sight() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(3, 18 - 4, 0));
        // Start far away, facing away from the goal.
        let mut sim = EpisodeSim::new(&m, goal, Pose::new(17, 2, 0), 100);
        assert_eq!(sim.known_target(), None);
        assert!(!sim.view().can_answer);
        // March within sight: face south-west toward the goal region.
        sim.execute(&Action::TurnRight); // pure turn, no sighting change
        assert_eq!(sim.known_target(), None);
        let mut sim2 = EpisodeSim::new(
            &m,
            GoalSpec::ig_nav(&m, Pose::new(9, 4, 0)),
            Pose::new(9, 8, 0), // four cells south of it, facing north
            100,
        );
        assert_eq!(sim2.known_target(), Some(Cell::new(9, 4)));
        assert!(sim2.target_sighted());
        let _ = &mut sim2;
    }

    #[test]
    fn budget_exhaustion_finishes_without_terminal() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(18, 18, 0));
        let mut sim = EpisodeSim::new(&m, goal, Pose::new(2, 2, 4), 3);
        for _ in 0..3 {
            sim.execute(&Action::Forward);
        }
        assert!(sim.is_done());
        assert_eq!(sim.terminal_action(), None);
        assert!(!sim.outcome().unwrap().success);
        assert_eq!(sim.steps_used(), 3);
        assert_eq!(sim.forward_steps(), 3);
    }

    #[test]
    fn illegal_terminal_wastes_a_step() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(4, 4, 0));
        let mut sim = EpisodeSim::new(&m, goal, Pose::new(4, 6, 0), 10);
        let r = sim.execute(&Action::Answer("chair".into()));
        assert!(!r.done);
        assert_eq!(sim.steps_used(), 1);
        assert_eq!(sim.terminal_action(), None);
        // The legal terminal ends it.
        let r = sim.execute(&Action::Stop);
        assert!(r.done);
        assert!(sim.outcome().unwrap().success);
    }

    #[test]
    fn collisions_are_counted_and_do_not_move() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(9, 9, 0));
        let mut sim = EpisodeSim::new(&m, goal, Pose::new(1, 1, 0), 10);
        let r = sim.execute(&Action::Forward); // into the north border
        assert!(r.collided);
        assert_eq!(sim.pose().cell, Cell::new(1, 1));
        assert_eq!(sim.collisions(), 1);
        assert_eq!(sim.forward_steps(), 0);
    }

    #[test]
    fn frontiers_shrink_as_the_world_is_seen() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(18, 18, 0));
        let mut sim = EpisodeSim::new(&m, goal, Pose::new(9, 9, 8), 200);
        let before = sim.frontiers();
        assert!(!before.is_empty());
        // A full spin plus a march reveals more ground.
        for _ in 0..16 {
            sim.execute(&Action::TurnLeft);
        }
        let seen_before = sim.seen().len();
        for _ in 0..6 {
            sim.execute(&Action::Forward);
        }
        assert!(sim.seen().len() > seen_before);
        for f in sim.frontiers() {
            assert!(m.is_free(f));
            assert!(sim.seen().contains(&f));
        }
    }

    #[test]
    fn record_carries_path_accounting() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(2, 6, 0));
        let mut sim = EpisodeSim::new(&m, goal, Pose::new(2, 10, 0), 50);
        for _ in 0..4 {
            sim.execute(&Action::Forward);
        }
        sim.execute(&Action::Stop);
        let rec = sim.record("ep-test", false).unwrap();
        assert!(rec.success);
        assert_eq!(rec.shortest, 4);
        assert_eq!(rec.actual, 4);
        assert_eq!(rec.total_steps, 5);
        assert!(!rec.oscillation_failure);
    }
}
