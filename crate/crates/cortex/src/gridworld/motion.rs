//! Agent kinematics: 16-step headings projected onto 8-connected grid
//! motion, plus the discrete action set.

use serde::{Deserialize, Serialize};

use super::map::{Cell, GridMap};

/// Number of discrete headings (22.5 degrees apart). Heading 0 faces north
/// (toward smaller `y`) and increases clockwise, so 4 = east, 8 = south,
/// 12 = west.
pub const HEADINGS: u8 = 16;

/// Offsets for the 8 grid directions, clockwise from north.
pub const DIRECTION_OFFSETS: [(i32, i32); 8] = [
    (0, -1),  // N
    (1, -1),  // NE
    (1, 0),   // E
    (1, 1),   // SE
    (0, 1),   // S
    (-1, 1),  // SW
    (-1, 0),  // W
    (-1, -1), // NW
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub cell: Cell,
    /// Heading index in `0..16`.
    pub heading: u8,
}

impl Pose {
    pub fn new(x: i32, y: i32, heading: u8) -> Self {
        Self { cell: Cell::new(x, y), heading: heading % HEADINGS }
    }

    /// Grid direction the agent moves in: odd headings round toward the
    /// lower direction index, so heading 1 still moves north and heading
    /// 15 moves northwest.
    pub fn direction(&self) -> u8 {
        self.heading / 2
    }

    pub fn forward_cell(&self) -> Cell {
        let (dx, dy) = DIRECTION_OFFSETS[self.direction() as usize];
        Cell::new(self.cell.x + dx, self.cell.y + dy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    /// Terminal for navigation goals.
    Stop,
    /// Terminal for recognition and question goals; carries the answer.
    Answer(String),
}

impl Action {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Action::Stop | Action::Answer(_))
    }

    /// Canonical token form, also the wire format in prompts and plans.
    pub fn token(&self) -> String {
        match self {
            Action::Forward => "FORWARD".into(),
            Action::TurnLeft => "TURN_LEFT".into(),
            Action::TurnRight => "TURN_RIGHT".into(),
            Action::Stop => "STOP".into(),
            Action::Answer(text) => format!("ANSWER {text}"),
        }
    }

    pub fn from_token(token: &str) -> Option<Action> {
        let token = token.trim();
        if let Some(rest) = token
            .strip_prefix("ANSWER")
            .or_else(|| token.strip_prefix("answer"))
        {
            return Some(Action::Answer(rest.trim().to_string()));
        }
        match token.to_ascii_uppercase().as_str() {
            "FORWARD" => Some(Action::Forward),
            "TURN_LEFT" => Some(Action::TurnLeft),
            "TURN_RIGHT" => Some(Action::TurnRight),
            "STOP" => Some(Action::Stop),
            _ => None,
        }
    }
}

/// Outcome of applying one action to a pose on a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepResult {
    pub pose: Pose,
    /// FORWARD into a wall: pose unchanged, flag set.
    pub collided: bool,
}

/// Pure kinematics: terminal actions and turns never collide; FORWARD
/// into a non-free cell leaves the pose in place and reports a collision.
pub fn step(map: &GridMap, pose: Pose, action: &Action) -> StepResult {
    match action {
        Action::TurnLeft => StepResult {
            pose: Pose { cell: pose.cell, heading: (pose.heading + HEADINGS - 1) % HEADINGS },
            collided: false,
        },
        Action::TurnRight => StepResult {
            pose: Pose { cell: pose.cell, heading: (pose.heading + 1) % HEADINGS },
            collided: false,
        },
        Action::Stop | Action::Answer(_) => StepResult { pose, collided: false },
        Action::Forward => {
            let target = pose.forward_cell();
            if map.is_free(target) {
                StepResult { pose: Pose { cell: target, heading: pose.heading }, collided: false }
            } else {
                StepResult { pose, collided: true }
            }
        }
    }
}
