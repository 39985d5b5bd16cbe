//! Goals and outcome scoring for the three task families: navigation to
//! a viewed goal, active recognition, and embodied question answering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::tokenize;

use super::map::{Cell, GridMap};
use super::motion::{Action, Pose};
use super::observe::Observation;
use super::search::geodesic;

/// Navigation success radius: STOP within this geodesic distance of the
/// goal cell counts (one meter at the 0.20 m cell scale).
pub const SUCCESS_RADIUS: u32 = 5;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("terminal action {action} is illegal for task {kind:?}")]
    IllegalTerminal { action: String, kind: TaskKind },
    #[error("no object at ({0}, {1}) to build a goal from")]
    NoObject(i32, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    IgNav,
    Ar,
    Aeqa,
}

impl TaskKind {
    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::IgNav => "IGNAV",
            TaskKind::Ar => "AR",
            TaskKind::Aeqa => "AEQA",
        }
    }
}

/// What the agent is asked to do, plus the ground truth used only for
/// scoring. Truth fields are consistent with the map by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GoalSpec {
    /// Reach the viewpoint whose rendered observation is given; the
    /// signature stands in for the goal image.
    IgNav { goal_cell: Cell, goal_pose: Pose, signature: u64 },
    /// Name the category of the object at the designated cell.
    Ar { target_cell: Cell, category: String },
    /// Answer a question about the object at the subject cell; truth is
    /// "<color> <category>".
    Aeqa { question: String, subject: Cell, category: String, color: String },
}

impl GoalSpec {
    pub fn ig_nav(map: &GridMap, goal_pose: Pose) -> Self {
        let signature = Observation::capture(map, goal_pose).digest();
        GoalSpec::IgNav { goal_cell: goal_pose.cell, goal_pose, signature }
    }

    pub fn ar(map: &GridMap, target_cell: Cell) -> Result<Self, TaskError> {
        let obj = map
            .object_at(target_cell)
            .ok_or(TaskError::NoObject(target_cell.x, target_cell.y))?;
        Ok(GoalSpec::Ar { target_cell, category: obj.category.clone() })
    }

    pub fn aeqa(map: &GridMap, subject: Cell) -> Result<Self, TaskError> {
        let obj = map
            .object_at(subject)
            .ok_or(TaskError::NoObject(subject.x, subject.y))?;
        Ok(GoalSpec::Aeqa {
            question: format!("What is the object at ({}, {})?", subject.x, subject.y),
            subject,
            category: obj.category.clone(),
            color: obj.color.clone(),
        })
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            GoalSpec::IgNav { .. } => TaskKind::IgNav,
            GoalSpec::Ar { .. } => TaskKind::Ar,
            GoalSpec::Aeqa { .. } => TaskKind::Aeqa,
        }
    }

    /// The cell an episode revolves around: navigation goal, recognition
    /// target, or question subject.
    pub fn focus_cell(&self) -> Cell {
        match self {
            GoalSpec::IgNav { goal_cell, .. } => *goal_cell,
            GoalSpec::Ar { target_cell, .. } => *target_cell,
            GoalSpec::Aeqa { subject, .. } => *subject,
        }
    }

    /// Stable key grouping episodes that pursue the same goal.
    pub fn key(&self) -> String {
        let c = self.focus_cell();
        format!("{}:({},{})", self.kind().label().to_ascii_lowercase(), c.x, c.y)
    }

    /// Agent-facing instruction. Never leaks the scored truth: the
    /// recognition and question goals name only the cell to inspect.
    pub fn instruction(&self) -> String {
        match self {
            GoalSpec::IgNav { .. } => {
                "Navigate to the viewpoint matching the goal view, then STOP within 5 cells of it."
                    .to_string()
            }
            GoalSpec::Ar { target_cell, .. } => format!(
                "Move until you can see the object at ({}, {}), then ANSWER with its category.",
                target_cell.x, target_cell.y
            ),
            GoalSpec::Aeqa { question, subject, .. } => format!(
                "{question} Inspect ({}, {}) and ANSWER with \"<color> <category>\".",
                subject.x, subject.y
            ),
        }
    }

    /// Whether `action` may legally end an episode with this goal.
    pub fn terminal_is_legal(&self, action: &Action) -> bool {
        match (self, action) {
            (GoalSpec::IgNav { .. }, Action::Stop) => true,
            (GoalSpec::Ar { .. }, Action::Answer(_)) => true,
            (GoalSpec::Aeqa { .. }, Action::Answer(_)) => true,
            _ => !action.is_terminal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeFlag {
    Pending,
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// 0/50/100 answer rubric; present only for question goals.
    pub answer_score: Option<f64>,
}

impl EpisodeOutcome {
    pub fn flag(&self) -> OutcomeFlag {
        if self.success {
            OutcomeFlag::Success
        } else {
            OutcomeFlag::Failure
        }
    }
}

fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Score a terminated episode. `final_action` is `None` when the step
/// budget ran out, which always scores as failure. A terminal action of
/// the wrong kind for the goal is an error.
pub fn evaluate_outcome(
    map: &GridMap,
    goal: &GoalSpec,
    final_action: Option<&Action>,
    final_cell: Cell,
) -> Result<EpisodeOutcome, TaskError> {
    if let Some(action) = final_action {
        if action.is_terminal() && !goal.terminal_is_legal(action) {
            return Err(TaskError::IllegalTerminal {
                action: action.token(),
                kind: goal.kind(),
            });
        }
    }
    let outcome = match goal {
        GoalSpec::IgNav { goal_cell, .. } => {
            let stopped = matches!(final_action, Some(Action::Stop));
            let near = geodesic(map, final_cell, *goal_cell)
                .map(|d| d <= SUCCESS_RADIUS)
                .unwrap_or(false);
            EpisodeOutcome { success: stopped && near, answer_score: None }
        }
        GoalSpec::Ar { category, .. } => {
            let success = match final_action {
                Some(Action::Answer(text)) => normalize(text) == normalize(category),
                _ => false,
            };
            EpisodeOutcome { success, answer_score: None }
        }
        GoalSpec::Aeqa { category, color, .. } => {
            let score = match final_action {
                Some(Action::Answer(text)) => {
                    let truth = format!("{color} {category}");
                    if normalize(text) == normalize(&truth) {
                        100.0
                    } else {
                        let tokens = tokenize(text);
                        let category_hit = tokenize(category).iter().all(|t| tokens.contains(t));
                        let color_hit = tokenize(color).iter().all(|t| tokens.contains(t));
                        if category_hit || color_hit {
                            50.0
                        } else {
                            0.0
                        }
                    }
                }
                _ => 0.0,
            };
            EpisodeOutcome { success: score == 100.0, answer_score: Some(score) }
        }
    };
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::gen::{generate_map, MapParams};
    use crate::gridworld::map::Occupancy;

    fn open_map() -> GridMap {
        let mut occ = vec![Occupancy::Wall; 144];
        for y in 1..11 {
            for x in 1..11 {
                occ[y * 12 + x] = Occupancy::Free;
            }
        }
        GridMap::from_parts(12, 12, 0, occ, vec![], vec![])
    }

    #[test]
    fn stop_within_radius_succeeds() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(9, 9, 0));
        // Distance 3 from the goal: inside the radius.
        let near = evaluate_outcome(&m, &goal, Some(&Action::Stop), Cell::new(6, 9)).unwrap();
        assert!(near.success);
        let far = evaluate_outcome(&m, &goal, Some(&Action::Stop), Cell::new(2, 2)).unwrap();
        assert!(!far.success);
        // Reaching the radius without STOP is not success.
        let coast = evaluate_outcome(&m, &goal, None, Cell::new(9, 9)).unwrap();
        assert!(!coast.success);
    }

    #[test]
    fn recognition_matches_case_insensitively() {
        let mut m = open_map();
        m.objects.push(crate::gridworld::map::PlacedObject {
            cell: Cell::new(4, 4),
            category: "chair".into(),
            color: "blue".into(),
        });
        let goal = GoalSpec::ar(&m, Cell::new(4, 4)).unwrap();
        let yes = evaluate_outcome(
            &m,
            &goal,
            Some(&Action::Answer("Chair".into())),
            Cell::new(3, 3),
        )
        .unwrap();
        assert!(yes.success);
        let no = evaluate_outcome(
            &m,
            &goal,
            Some(&Action::Answer("table".into())),
            Cell::new(3, 3),
        )
        .unwrap();
        assert!(!no.success);
    }

    #[test]
    fn answer_rubric_scores_exact_partial_zero() {
        let mut m = open_map();
        m.objects.push(crate::gridworld::map::PlacedObject {
            cell: Cell::new(4, 4),
            category: "chair".into(),
            color: "blue".into(),
        });
        let goal = GoalSpec::aeqa(&m, Cell::new(4, 4)).unwrap();
        let score = |text: &str| {
            evaluate_outcome(&m, &goal, Some(&Action::Answer(text.into())), Cell::new(4, 5))
                .unwrap()
                .answer_score
                .unwrap()
        };
        assert_eq!(score("blue chair"), 100.0);
        assert_eq!(score("Blue  Chair."), 100.0);
        assert_eq!(score("red chair"), 50.0);
        assert_eq!(score("blue table"), 50.0);
        assert_eq!(score("green sofa"), 0.0);
        // Budget exhaustion scores zero.
        let out = evaluate_outcome(&m, &goal, None, Cell::new(4, 5)).unwrap();
        assert_eq!(out.answer_score, Some(0.0));
        assert!(!out.success);
    }

    #[test]
    fn wrong_terminal_kind_is_an_error() {
        let m = open_map();
        let goal = GoalSpec::ig_nav(&m, Pose::new(9, 9, 0));
        let err = evaluate_outcome(
            &m,
            &goal,
            Some(&Action::Answer("chair".into())),
            Cell::new(2, 2),
        )
        .unwrap_err();
        assert!(matches!(err, TaskError::IllegalTerminal { .. }));
    }

    #[test]
    fn goal_truth_comes_from_the_map() {
        let m = generate_map(&MapParams { seed: 11, ..Default::default() }).unwrap();
        let obj = &m.objects[0];
        let goal = GoalSpec::ar(&m, obj.cell).unwrap();
        match &goal {
            GoalSpec::Ar { category, .. } => assert_eq!(category, &obj.category),
            _ => unreachable!(),
        }
        assert!(GoalSpec::ar(&m, Cell::new(0, 0)).is_err());
        assert!(!goal.instruction().contains(&obj.category));
    }
}
