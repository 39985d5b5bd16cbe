//! Per-episode experience graph: one root describing the episode, one
//! trajectory node per planning step, and subtask nodes for the executed
//! semantic units, linked by parent-child tree edges and a temporal chain
//! over subtasks. Append-only while pending; immutable after finalize.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Action, GoalSpec, OutcomeFlag, Pose, TaskKind};

/// Reference to a perception snapshot by its content digest.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ObservationId(pub u64);

impl fmt::Display for ObservationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Node handle, unique and monotonically assigned within one graph. The
/// root is always node 0.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u64);

pub const ROOT_ID: NodeId = NodeId(0);

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("episode closed")]
    Closed,
    #[error("already finalized")]
    AlreadyFinalized,
    #[error("finalize requires SUCCESS or FAILURE")]
    PendingOutcome,
    #[error("step_index {given} precedes last step_index {last}")]
    NonMonotonicStep { last: u32, given: u32 },
    #[error("node {0:?} is not a subtask node")]
    NotASubtask(NodeId),
    #[error("subtask actions must be non-empty")]
    EmptyActions,
    #[error("pose_trace must hold executed actions + 1 poses (actions {actions}, trace {trace})")]
    BadPoseTrace { actions: usize, trace: usize },
    #[error("parse error at record {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootNode {
    pub episode_id: String,
    pub task_kind: TaskKind,
    pub goal: GoalSpec,
    pub outcome: OutcomeFlag,
    pub total_steps: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryNode {
    pub step_index: u32,
    pub selected_plan_digest: String,
    pub observation_ref: ObservationId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubtaskStatus {
    Executed,
    Aborted,
}

/// One executed semantic unit: the actions it planned, the rationale they
/// served, and the poses actually traversed. An aborted unit's trace is
/// shorter than its plan; `pose_trace.len() - 1` actions were executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskNode {
    pub actions: Vec<Action>,
    pub rationale: String,
    pub status: SubtaskStatus,
    pub pre_observation: ObservationId,
    pub post_observation: ObservationId,
    pub pose_trace: Vec<Pose>,
}

impl SubtaskNode {
    pub fn executed_actions(&self) -> usize {
        self.pose_trace.len().saturating_sub(1)
    }

    fn validate(&self) -> Result<(), GraphError> {
        if self.actions.is_empty() {
            return Err(GraphError::EmptyActions);
        }
        let ok = match self.status {
            SubtaskStatus::Executed => self.pose_trace.len() == self.actions.len() + 1,
            SubtaskStatus::Aborted => {
                !self.pose_trace.is_empty() && self.pose_trace.len() <= self.actions.len() + 1
            }
        };
        if !ok {
            return Err(GraphError::BadPoseTrace {
                actions: self.actions.len(),
                trace: self.pose_trace.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryGraph {
    root: RootNode,
    trajectories: BTreeMap<NodeId, TrajectoryNode>,
    subtasks: BTreeMap<NodeId, SubtaskNode>,
    parent_of: BTreeMap<NodeId, NodeId>,
    /// Temporal chain: subtask ids in execution order.
    subtask_order: Vec<NodeId>,
    next_id: u64,
}

/// Fresh pending graph holding only the root.
pub fn create_episode(episode_id: &str, goal: GoalSpec) -> MemoryGraph {
    assert!(!episode_id.is_empty(), "episode id must be non-empty");
    MemoryGraph {
        root: RootNode {
            episode_id: episode_id.to_string(),
            task_kind: goal.kind(),
            goal,
            outcome: OutcomeFlag::Pending,
            total_steps: 0,
        },
        trajectories: BTreeMap::new(),
        subtasks: BTreeMap::new(),
        parent_of: BTreeMap::new(),
        subtask_order: Vec::new(),
        next_id: 1,
    }
}

impl MemoryGraph {
    pub fn root(&self) -> &RootNode {
        &self.root
    }

    pub fn episode_id(&self) -> &str {
        &self.root.episode_id
    }

    pub fn goal(&self) -> &GoalSpec {
        &self.root.goal
    }

    pub fn outcome(&self) -> OutcomeFlag {
        self.root.outcome
    }

    pub fn is_finalized(&self) -> bool {
        self.root.outcome != OutcomeFlag::Pending
    }

    pub fn node_count(&self) -> usize {
        1 + self.trajectories.len() + self.subtasks.len()
    }

    pub fn subtask_count(&self) -> usize {
        self.subtask_order.len()
    }

    pub fn subtask(&self, id: NodeId) -> Option<&SubtaskNode> {
        self.subtasks.get(&id)
    }

    pub fn trajectory(&self, id: NodeId) -> Option<&TrajectoryNode> {
        self.trajectories.get(&id)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent_of.get(&id).copied()
    }

    /// Subtask ids in temporal order.
    pub fn subtask_ids(&self) -> &[NodeId] {
        &self.subtask_order
    }

    pub fn subtasks_in_order(&self) -> impl Iterator<Item = (NodeId, &SubtaskNode)> {
        self.subtask_order.iter().map(move |id| (*id, &self.subtasks[id]))
    }

    pub fn parent_child_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.parent_of.iter().map(|(child, parent)| (*parent, *child))
    }

    pub fn temporal_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.subtask_order.windows(2).map(|w| (w[0], w[1]))
    }

    fn alloc(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Attach an executed subtask under the trajectory node for
    /// `step_index`, creating that node on first use (with the given plan
    /// digest and observation) and reusing it for repeat appends at the
    /// same index. Extends the temporal chain.
    pub fn append_subtask(
        &mut self,
        step_index: u32,
        plan_digest: &str,
        observation: ObservationId,
        subtask: SubtaskNode,
    ) -> Result<NodeId, GraphError> {
        if self.is_finalized() {
            return Err(GraphError::Closed);
        }
        subtask.validate()?;
        let last_traj = self.trajectories.iter().next_back().map(|(id, t)| (*id, t.step_index));
        let traj_id = match last_traj {
            Some((_, last)) if step_index < last => {
                return Err(GraphError::NonMonotonicStep { last, given: step_index })
            }
            Some((id, last)) if step_index == last => id,
            _ => {
                let id = self.alloc();
                self.trajectories.insert(
                    id,
                    TrajectoryNode {
                        step_index,
                        selected_plan_digest: plan_digest.to_string(),
                        observation_ref: observation,
                    },
                );
                self.parent_of.insert(id, ROOT_ID);
                id
            }
        };
        let sub_id = self.alloc();
        self.subtasks.insert(sub_id, subtask);
        self.parent_of.insert(sub_id, traj_id);
        self.subtask_order.push(sub_id);
        Ok(sub_id)
    }

    /// The last `min(w, count)` subtasks in temporal order.
    pub fn recent_window(&self, w: usize) -> Vec<&SubtaskNode> {
        assert!(w >= 1, "window must be at least 1");
        let skip = self.subtask_order.len().saturating_sub(w);
        self.subtask_order[skip..]
            .iter()
            .map(|id| &self.subtasks[id])
            .collect()
    }

    /// The start subtask followed by up to `k` temporal successors.
    pub fn downstream_trajectory(
        &self,
        start: NodeId,
        k: usize,
    ) -> Result<Vec<&SubtaskNode>, GraphError> {
        let pos = self
            .subtask_order
            .iter()
            .position(|id| *id == start)
            .ok_or(GraphError::NotASubtask(start))?;
        let end = (pos + k + 1).min(self.subtask_order.len());
        Ok(self.subtask_order[pos..end]
            .iter()
            .map(|id| &self.subtasks[id])
            .collect())
    }

    /// Close the episode. Total steps are derived from the executed
    /// action count across all subtasks.
    pub fn finalize_episode(&mut self, outcome: OutcomeFlag) -> Result<(), GraphError> {
        if outcome == OutcomeFlag::Pending {
            return Err(GraphError::PendingOutcome);
        }
        if self.is_finalized() {
            return Err(GraphError::AlreadyFinalized);
        }
        self.root.outcome = outcome;
        self.root.total_steps = self
            .subtasks
            .values()
            .map(|s| s.executed_actions() as u32)
            .sum();
        Ok(())
    }

    /// Newline-delimited records: one per node, then one per edge, in a
    /// canonical order, so equal graphs serialize byte-identically.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut push = |record: &Record| {
            out.push_str(&serde_json::to_string(record).expect("graph records serialize"));
            out.push('\n');
        };
        push(&Record::Root(self.root.clone()));
        for (id, node) in &self.trajectories {
            push(&Record::Trajectory { id: *id, node: node.clone() });
        }
        for id in &self.subtask_order {
            push(&Record::Subtask { id: *id, node: self.subtasks[id].clone() });
        }
        let mut parents: Vec<(NodeId, NodeId)> = self.parent_child_edges().collect();
        parents.sort_by_key(|(_, child)| *child);
        for (parent, child) in parents {
            push(&Record::Edge { edge: EdgeKind::Parent, from: parent, to: child });
        }
        for (from, to) in self.temporal_edges() {
            push(&Record::Edge { edge: EdgeKind::Temporal, from, to });
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<MemoryGraph, GraphError> {
        let mut root: Option<RootNode> = None;
        let mut trajectories = BTreeMap::new();
        let mut subtasks: BTreeMap<NodeId, SubtaskNode> = BTreeMap::new();
        let mut subtask_file_order: Vec<NodeId> = Vec::new();
        let mut parent_edges: Vec<(NodeId, NodeId)> = Vec::new();
        let mut temporal_edges: Vec<(NodeId, NodeId)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let record: Record = serde_json::from_str(line).map_err(|e| GraphError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            match record {
                Record::Root(r) => {
                    if root.is_some() {
                        return Err(GraphError::Parse {
                            line: lineno,
                            message: "second root record".into(),
                        });
                    }
                    root = Some(r);
                }
                Record::Trajectory { id, node } => {
                    trajectories.insert(id, node);
                }
                Record::Subtask { id, node } => {
                    subtasks.insert(id, node);
                    subtask_file_order.push(id);
                }
                Record::Edge { edge, from, to } => match edge {
                    EdgeKind::Parent => parent_edges.push((from, to)),
                    EdgeKind::Temporal => temporal_edges.push((from, to)),
                },
            }
        }
        let root = root.ok_or(GraphError::Parse {
            line: 1,
            message: "missing root record".into(),
        })?;
        // Rebuild and validate structure.
        let mut parent_of = BTreeMap::new();
        for (parent, child) in &parent_edges {
            if parent_of.insert(*child, *parent).is_some() {
                return Err(GraphError::Parse {
                    line: 0,
                    message: format!("node {child:?} has two parents"),
                });
            }
        }
        let bad_parent = |msg: String| GraphError::Parse { line: 0, message: msg };
        for id in trajectories.keys() {
            if parent_of.get(id) != Some(&ROOT_ID) {
                return Err(bad_parent(format!("trajectory {id:?} not rooted")));
            }
        }
        for id in subtasks.keys() {
            match parent_of.get(id) {
                Some(p) if trajectories.contains_key(p) => {}
                _ => return Err(bad_parent(format!("subtask {id:?} lacks a trajectory parent"))),
            }
        }
        if parent_of.len() != trajectories.len() + subtasks.len() {
            return Err(bad_parent("dangling parent edge".into()));
        }
        // The temporal chain must reproduce the file's subtask order.
        let chain_ok = subtask_file_order.len() <= 1 && temporal_edges.is_empty()
            || temporal_edges.len() + 1 == subtask_file_order.len()
                && temporal_edges
                    .iter()
                    .zip(subtask_file_order.windows(2))
                    .all(|((f, t), w)| *f == w[0] && *t == w[1]);
        if !chain_ok {
            return Err(GraphError::Parse {
                line: 0,
                message: "temporal edges do not form the subtask chain".into(),
            });
        }
        let next_id = trajectories
            .keys()
            .chain(subtasks.keys())
            .map(|id| id.0)
            .max()
            .unwrap_or(0)
            + 1;
        Ok(MemoryGraph {
            root,
            trajectories,
            subtasks,
            parent_of,
            subtask_order: subtask_file_order,
            next_id,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Root(RootNode),
    Trajectory { id: NodeId, node: TrajectoryNode },
    Subtask { id: NodeId, node: SubtaskNode },
    Edge { edge: EdgeKind, from: NodeId, to: NodeId },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EdgeKind {
    Parent,
    Temporal,
}
