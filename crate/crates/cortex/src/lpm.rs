//! Long-term procedural memory: a bounded per-goal bank of finalized
//! episodes plus the principles distilled from them. Principles are
//! goal-conditioned (goal tokens dominate the embedding), so retrieval
//! at episode start surfaces experience from the same goal first.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::PrincipleAnalyzerBackend;
use crate::gridworld::{GoalSpec, GridMap, OutcomeFlag, Pose};
use crate::hashing::{hash_feature, tokenize};
use crate::memory_graph::{GraphError, MemoryGraph, NodeId, SubtaskNode};

/// Dimensionality of state embeddings.
pub const EMBED_DIM: usize = 64;

/// Relative weight of goal-identity tokens in a state embedding. High
/// enough that two states under the same goal stay above the default
/// retrieval threshold while different goals fall below it.
const GOAL_TOKEN_WEIGHT: f64 = 3.0;

/// Cells are bucketed into 4x4 tiles for embedding, so nearby subtasks
/// share their location token. (Coarse on purpose: location matters
/// less than goal identity.)
const CELL_BUCKET: i32 = 4;

#[derive(Debug, Error)]
pub enum LpmError {
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("episode {0} is not finalized")]
    NotFinalized(String),
    #[error("episode {0} is already in the bank")]
    DuplicateEpisode(String),
    #[error("principle references episode {got}, expected {expected}")]
    BadProvenance { expected: String, got: String },
    #[error("episode id {0:?} is not filesystem-safe")]
    InvalidEpisodeId(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn io_err(path: &Path, source: io::Error) -> LpmError {
    LpmError::Io { path: path.to_path_buf(), source }
}

/// Dense feature-hashed vector, L2-normalized unless all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn normalize(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for v in &mut self.0 {
                *v /= n;
            }
        }
        self
    }

    /// Cosine similarity; errors when dimensions differ. Zero vectors
    /// compare at 0.
    pub fn cosine(&self, other: &EmbeddingVector) -> Result<f64, LpmError> {
        if self.dim() != other.dim() {
            return Err(LpmError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let (na, nb) = (self.norm(), other.norm());
        if na == 0.0 || nb == 0.0 {
            return Ok(0.0);
        }
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        Ok(dot / (na * nb))
    }

    pub fn euclidean(&self, other: &EmbeddingVector) -> Result<f64, LpmError> {
        if self.dim() != other.dim() {
            return Err(LpmError::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

fn goal_tokens(goal: &GoalSpec, values: &mut [f64]) {
    hash_feature(values, &format!("kind:{}", goal.kind().label()), GOAL_TOKEN_WEIGHT);
    for tok in tokenize(&goal.key()) {
        hash_feature(values, &format!("goal:{tok}"), GOAL_TOKEN_WEIGHT);
    }
}

fn cell_token(values: &mut [f64], pose: Pose) {
    let bx = pose.cell.x.div_euclid(CELL_BUCKET);
    let by = pose.cell.y.div_euclid(CELL_BUCKET);
    hash_feature(values, &format!("cell:{bx}:{by}"), 1.0);
}

/// Embed a subtask as experienced under `goal`: goal identity dominates,
/// refined by where the subtask ended and what it was for.
pub fn embed_state(goal: &GoalSpec, subtask: &SubtaskNode) -> EmbeddingVector {
    let mut values = vec![0.0; EMBED_DIM];
    goal_tokens(goal, &mut values);
    if let Some(last) = subtask.pose_trace.last() {
        cell_token(&mut values, *last);
    }
    for tok in tokenize(&subtask.rationale) {
        hash_feature(&mut values, &tok, 1.0);
    }
    EmbeddingVector(values).normalize()
}

/// Embed the current situation for retrieval: the same goal identity
/// plus the agent's position bucket.
pub fn embed_query(goal: &GoalSpec, pose: Pose) -> EmbeddingVector {
    let mut values = vec![0.0; EMBED_DIM];
    goal_tokens(goal, &mut values);
    cell_token(&mut values, pose);
    EmbeddingVector(values).normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrincipleKind {
    /// Distilled from a successful episode: worth imitating.
    Guiding,
    /// Distilled from a failed episode: worth avoiding.
    Cautionary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Principle {
    pub kind: PrincipleKind,
    pub text: String,
    pub source_episode: String,
    pub source_subtask: NodeId,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrinciple {
    pub principle: Principle,
    pub similarity: f64,
}

/// Distill one principle per subtask from its downstream trajectory of
/// up to `k` successors. Analyzer failures skip that subtask with a
/// warning instead of aborting the episode's distillation.
pub fn build_principles(
    graph: &MemoryGraph,
    map: &GridMap,
    analyzer: &dyn PrincipleAnalyzerBackend,
    k: usize,
) -> Result<Vec<Principle>, LpmError> {
    if !graph.is_finalized() {
        return Err(LpmError::NotFinalized(graph.episode_id().to_string()));
    }
    let outcome = graph.outcome();
    let kind = match outcome {
        OutcomeFlag::Success => PrincipleKind::Guiding,
        _ => PrincipleKind::Cautionary,
    };
    let mut out = Vec::new();
    for (id, subtask) in graph.subtasks_in_order() {
        let tau = graph.downstream_trajectory(id, k)?;
        match analyzer.principle_text(&tau, outcome, graph.goal(), map) {
            Ok(text) => out.push(Principle {
                kind,
                text,
                source_episode: graph.episode_id().to_string(),
                source_subtask: id,
                embedding: embed_state(graph.goal(), subtask),
            }),
            Err(err) => {
                log::warn!(
                    "principle distillation skipped subtask {} of {}: {err}",
                    id.0,
                    graph.episode_id()
                );
            }
        }
    }
    Ok(out)
}

/// Goal-keyed episode bank with its principle store. Bounded per goal by
/// the consolidation policy; insertion order is preserved and acts as
/// the tie-breaker everywhere.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeBank {
    episodes: BTreeMap<String, Vec<MemoryGraph>>,
    principles: Vec<Principle>,
    committed: BTreeSet<String>,
}

fn filesystem_safe(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !id.starts_with('.')
}

impl EpisodeBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.values().map(Vec::len).sum()
    }

    pub fn principle_count(&self) -> usize {
        self.principles.len()
    }

    pub fn principles(&self) -> &[Principle] {
        &self.principles
    }

    pub fn goal_keys(&self) -> impl Iterator<Item = &str> {
        self.episodes.keys().map(String::as_str)
    }

    /// Episodes stored for a goal, in commit order.
    pub fn episodes_for(&self, goal_key: &str) -> &[MemoryGraph] {
        self.episodes.get(goal_key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, episode_id: &str) -> bool {
        self.committed.contains(episode_id)
    }

    /// Admit a finalized episode and its principles, then consolidate
    /// its goal's shelf down to `max_per_goal`.
    pub fn commit_episode(
        &mut self,
        graph: MemoryGraph,
        principles: Vec<Principle>,
        max_per_goal: usize,
    ) -> Result<(), LpmError> {
        let id = graph.episode_id().to_string();
        if !graph.is_finalized() {
            return Err(LpmError::NotFinalized(id));
        }
        if self.committed.contains(&id) {
            return Err(LpmError::DuplicateEpisode(id));
        }
        if !filesystem_safe(&id) {
            return Err(LpmError::InvalidEpisodeId(id));
        }
        for p in &principles {
            if p.source_episode != id {
                return Err(LpmError::BadProvenance {
                    expected: id,
                    got: p.source_episode.clone(),
                });
            }
        }
        let goal_key = graph.goal().key();
        self.committed.insert(id);
        self.episodes.entry(goal_key.clone()).or_default().push(graph);
        self.principles.extend(principles);
        self.consolidate(&goal_key, max_per_goal);
        Ok(())
    }

    /// Mean over the episode's principle embeddings (one per subtask);
    /// the all-zero vector when it has none.
    fn mean_embedding(&self, episode_id: &str) -> EmbeddingVector {
        let mut sum = vec![0.0; EMBED_DIM];
        let mut n = 0usize;
        for p in self.principles.iter().filter(|p| p.source_episode == episode_id) {
            for (s, v) in sum.iter_mut().zip(&p.embedding.0) {
                *s += v;
            }
            n += 1;
        }
        if n > 0 {
            for s in &mut sum {
                *s /= n as f64;
            }
        }
        EmbeddingVector(sum)
    }

    /// Bound one goal's shelf to `m` episodes. If any succeeded, keep the
    /// `m` with the fewest total steps (ties: earliest committed).
    /// Otherwise keep `m` failures chosen for diversity of their mean
    /// subtask embeddings: the longest alone at `m` = 1, the farthest
    /// pair at `m` = 2 (so the kept pair is exactly the max-min optimum),
    /// extended greedily beyond that. Evicted episodes take their
    /// principles with them. Idempotent.
    pub fn consolidate(&mut self, goal_key: &str, m: usize) -> Vec<String> {
        let Some(shelf) = self.episodes.get(goal_key) else {
            return Vec::new();
        };
        if shelf.len() <= m {
            return Vec::new();
        }
        let successes: Vec<usize> = (0..shelf.len())
            .filter(|&i| shelf[i].outcome() == OutcomeFlag::Success)
            .collect();
        let keep: BTreeSet<usize> = if !successes.is_empty() {
            let mut ranked = successes;
            ranked.sort_by_key(|&i| shelf[i].root().total_steps); // stable: ties stay in commit order
            ranked.truncate(m);
            ranked.into_iter().collect()
        } else {
            let means: Vec<EmbeddingVector> = shelf
                .iter()
                .map(|g| self.mean_embedding(g.episode_id()))
                .collect();
            let seed = (0..shelf.len())
                .max_by_key(|&i| (shelf[i].root().total_steps, std::cmp::Reverse(i)))
                .expect("non-empty shelf");
            let mut chosen = vec![seed];
            if m >= 2 {
                // Open with the farthest pair (first pair in commit order
                // wins ties), which is the exact max-min set at m = 2.
                let mut best: Option<(f64, usize, usize)> = None;
                for i in 0..shelf.len() {
                    for j in (i + 1)..shelf.len() {
                        let d = means[i].euclidean(&means[j]).expect("same dim");
                        if best.is_none_or(|(bd, _, _)| d > bd) {
                            best = Some((d, i, j));
                        }
                    }
                }
                let (_, i, j) = best.expect("two or more failures");
                chosen = vec![i, j];
            }
            while chosen.len() < m {
                let next = (0..shelf.len())
                    .filter(|i| !chosen.contains(i))
                    .map(|i| {
                        let d = chosen
                            .iter()
                            .map(|&j| means[i].euclidean(&means[j]).expect("same dim"))
                            .fold(f64::INFINITY, f64::min);
                        (i, d)
                    })
                    // Max min-distance; ties go to the earliest commit.
                    .max_by(|(i, a), (j, b)| {
                        a.partial_cmp(b).expect("finite").then(j.cmp(i))
                    });
                match next {
                    Some((i, _)) => chosen.push(i),
                    None => break,
                }
            }
            chosen.into_iter().collect()
        };
        let shelf = self.episodes.get_mut(goal_key).expect("shelf checked above");
        let mut evicted_ids = Vec::new();
        let mut kept = Vec::new();
        for (i, g) in shelf.drain(..).enumerate() {
            if keep.contains(&i) {
                kept.push(g);
            } else {
                evicted_ids.push(g.episode_id().to_string());
            }
        }
        *shelf = kept;
        for id in &evicted_ids {
            self.committed.remove(id);
        }
        self.principles.retain(|p| !evicted_ids.contains(&p.source_episode));
        evicted_ids
    }

    /// Principles at least `threshold`-similar to the query, most similar
    /// first, ties in insertion order, at most `top_n` of them.
    pub fn retrieve(
        &self,
        query: &EmbeddingVector,
        threshold: f64,
        top_n: usize,
    ) -> Result<Vec<ScoredPrinciple>, LpmError> {
        let mut scored = Vec::new();
        for p in &self.principles {
            let s = query.cosine(&p.embedding)?;
            if s >= threshold {
                scored.push(ScoredPrinciple { principle: p.clone(), similarity: s });
            }
        }
        scored.sort_by(|a, b| b.similarity.partial_cmp(&a.similarity).expect("finite"));
        scored.truncate(top_n);
        Ok(scored)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct BankIndex {
    version: u32,
    /// Goal key → episode ids in commit order.
    goals: BTreeMap<String, Vec<String>>,
}

/// Write the bank as a directory: one `.mem` file per episode, an index
/// with the goal shelves, and the principle store. Byte-stable for a
/// given bank, so save→load→save reproduces identical files.
pub fn save_bank(bank: &EpisodeBank, dir: &Path) -> Result<(), LpmError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut goals = BTreeMap::new();
    for (key, shelf) in &bank.episodes {
        let ids: Vec<String> = shelf.iter().map(|g| g.episode_id().to_string()).collect();
        for g in shelf {
            let path = dir.join(format!("{}.mem", g.episode_id()));
            fs::write(&path, g.serialize()).map_err(|e| io_err(&path, e))?;
        }
        goals.insert(key.clone(), ids);
    }
    let index = BankIndex { version: 1, goals };
    let index_path = dir.join("bank.json");
    let body = serde_json::to_string_pretty(&index).expect("index serializes");
    fs::write(&index_path, body + "\n").map_err(|e| io_err(&index_path, e))?;
    let mut lines = String::new();
    for p in &bank.principles {
        lines.push_str(&serde_json::to_string(p).expect("principle serializes"));
        lines.push('\n');
    }
    let pr_path = dir.join("principles.jsonl");
    fs::write(&pr_path, lines).map_err(|e| io_err(&pr_path, e))?;
    Ok(())
}

pub fn load_bank(dir: &Path) -> Result<EpisodeBank, LpmError> {
    let index_path = dir.join("bank.json");
    let body = fs::read_to_string(&index_path).map_err(|e| io_err(&index_path, e))?;
    let index: BankIndex = serde_json::from_str(&body).map_err(|e| LpmError::Parse {
        file: "bank.json".into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut bank = EpisodeBank::new();
    for (key, ids) in index.goals {
        let mut shelf = Vec::new();
        for id in ids {
            let path = dir.join(format!("{id}.mem"));
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let graph = MemoryGraph::deserialize(&text)?;
            bank.committed.insert(graph.episode_id().to_string());
            shelf.push(graph);
        }
        bank.episodes.insert(key, shelf);
    }
    let pr_path = dir.join("principles.jsonl");
    let text = fs::read_to_string(&pr_path).map_err(|e| io_err(&pr_path, e))?;
    for (i, line) in text.lines().enumerate() {
        let p: Principle = serde_json::from_str(line).map_err(|e| LpmError::Parse {
            file: "principles.jsonl".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        bank.principles.push(p);
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{Action, GridMap, Occupancy};
    use crate::memory_graph::{create_episode, ObservationId, SubtaskStatus};

    fn open_map() -> GridMap {
        let mut occ = vec![Occupancy::Wall; 400];
        for y in 1..19 {
            for x in 1..19 {
                occ[y * 20 + x] = Occupancy::Free;
            }
        }
        GridMap::from_parts(20, 20, 0, occ, vec![], vec![])
    }

    fn unit(rationale: &str, from: (i32, i32), to: (i32, i32)) -> SubtaskNode {
        SubtaskNode {
            actions: vec![Action::Forward],
            rationale: rationale.into(),
            status: SubtaskStatus::Executed,
            pre_observation: ObservationId(1),
            post_observation: ObservationId(2),
            pose_trace: vec![Pose::new(from.0, from.1, 0), Pose::new(to.0, to.1, 0)],
        }
    }

    /// A finalized single-subtask episode with a chosen step count, built
    /// by padding the unit's actions.
    fn episode(
        map: &GridMap,
        id: &str,
        goal: GoalSpec,
        steps: usize,
        outcome: OutcomeFlag,
        rationale: &str,
    ) -> MemoryGraph {
        let _ = map;
        let mut g = create_episode(id, goal);
        let mut sub = unit(rationale, (2, 2), (2, 1 + steps as i32));
        sub.actions = vec![Action::Forward; steps];
        sub.pose_trace = (0..=steps).map(|i| Pose::new(2, 2 + i as i32, 0)).collect();
        g.append_subtask(0, "plan", ObservationId(0), sub).unwrap();
        g.finalize_episode(outcome).unwrap();
        g
    }

    fn principle_for(g: &MemoryGraph, text: &str) -> Principle {
        let (id, sub) = g.subtasks_in_order().next().unwrap();
        Principle {
            kind: if g.outcome() == OutcomeFlag::Success {
                PrincipleKind::Guiding
            } else {
                PrincipleKind::Cautionary
            },
            text: text.into(),
            source_episode: g.episode_id().to_string(),
            source_subtask: id,
            embedding: embed_state(g.goal(), sub),
        }
    }

    #[test]
    fn same_goal_states_stay_above_the_default_threshold() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let other = GoalSpec::ig_nav(&map, Pose::new(16, 17, 0));
        let a = embed_state(&goal, &unit("push toward the north wall", (2, 2), (2, 3)));
        let b = embed_state(&goal, &unit("sweep the east corridor", (17, 12), (16, 12)));
        let c = embed_state(&other, &unit("push toward the north wall", (2, 2), (2, 3)));
        assert!((a.norm() - 1.0).abs() < 1e-9);
        let same = a.cosine(&b).unwrap();
        let diff = a.cosine(&c).unwrap();
        assert!(same >= 0.8, "same-goal similarity {same} under threshold");
        assert!(diff < 0.8, "cross-goal similarity {diff} over threshold");
        assert!(same > diff);
        // A query built from the live pose also lands above threshold.
        let q = embed_query(&goal, Pose::new(17, 12, 6));
        assert!(q.cosine(&b).unwrap() >= 0.8);
    }

    #[test]
    fn retrieval_filters_sorts_and_bounds() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let mut bank = EpisodeBank::new();
        for (i, steps) in [4usize, 6, 8].into_iter().enumerate() {
            let g = episode(&map, &format!("ep-{i}"), goal.clone(), steps, OutcomeFlag::Success, "go north");
            let p = principle_for(&g, &format!("principle {i}"));
            bank.commit_episode(g, vec![p], 3).unwrap();
        }
        let q = embed_query(&goal, Pose::new(2, 4, 0));
        let hits = bank.retrieve(&q, 0.8, 2).unwrap();
        assert_eq!(hits.len(), 2, "top_n bounds the result");
        assert!(hits[0].similarity >= hits[1].similarity);
        assert!(hits.iter().all(|h| h.similarity >= 0.8));
        // Identical embeddings tie; insertion order breaks the tie.
        assert_eq!(hits[0].principle.source_episode, "ep-0");
        assert_eq!(hits[1].principle.source_episode, "ep-1");
        // Self-query with a stored embedding is exact.
        let stored = &bank.principles()[0].embedding;
        let self_hits = bank.retrieve(stored, 0.8, 1).unwrap();
        assert!((self_hits[0].similarity - 1.0).abs() < 1e-9);
        // Dimension mismatch is a typed error.
        let bad = EmbeddingVector::zeros(16);
        assert!(matches!(
            bank.retrieve(&bad, 0.8, 3),
            Err(LpmError::DimensionMismatch { expected: 16, got: 64 })
        ));
    }

    #[test]
    fn successes_crowd_out_failures_and_long_runs() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let mut bank = EpisodeBank::new();
        let spec = [
            ("ep-a", 9, OutcomeFlag::Success),
            ("ep-b", 3, OutcomeFlag::Failure),
            ("ep-c", 5, OutcomeFlag::Success),
            ("ep-d", 7, OutcomeFlag::Success),
            ("ep-e", 5, OutcomeFlag::Success), // ties ep-c; later commit loses
        ];
        for (id, steps, outcome) in spec {
            let g = episode(&map, id, goal.clone(), steps, outcome, "go north");
            let p = principle_for(&g, id);
            bank.commit_episode(g, vec![p], 2).unwrap();
        }
        let kept: Vec<&str> = bank
            .episodes_for(&goal.key())
            .iter()
            .map(|g| g.episode_id())
            .collect();
        assert_eq!(kept, ["ep-c", "ep-e"]);
        // Evicted episodes' principles are gone with them.
        let texts: Vec<&str> = bank.principles().iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, ["ep-c", "ep-e"]);
        assert!(!bank.contains("ep-a"));
        assert!(bank.contains("ep-c"));
        // Consolidation is idempotent.
        let again = bank.consolidate(&goal.key(), 2);
        assert!(again.is_empty());
    }

    #[test]
    fn failure_only_shelves_keep_the_longest_and_most_different() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let mut bank = EpisodeBank::new();
        // Three failures: two share a rationale (near-identical embeddings),
        // the third is phrased differently and ends elsewhere.
        let a = episode(&map, "ep-long", goal.clone(), 9, OutcomeFlag::Failure, "circle the east wing");
        let b = episode(&map, "ep-twin", goal.clone(), 4, OutcomeFlag::Failure, "circle the east wing");
        let c = episode(&map, "ep-odd", goal.clone(), 5, OutcomeFlag::Failure, "probe the west door");
        for g in [a, b, c] {
            let p = principle_for(&g, g.episode_id());
            bank.commit_episode(g, vec![p], 2).unwrap();
        }
        let kept: Vec<&str> = bank
            .episodes_for(&goal.key())
            .iter()
            .map(|g| g.episode_id())
            .collect();
        // Seeded with the longest failure, then the farthest mean embedding.
        assert_eq!(kept, ["ep-long", "ep-odd"]);
    }

    #[test]
    fn commit_guards_duplicates_and_pending_episodes() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let pending = create_episode("ep-pending", goal.clone());
        let mut bank = EpisodeBank::new();
        assert!(matches!(
            bank.commit_episode(pending, vec![], 3),
            Err(LpmError::NotFinalized(_))
        ));
        let g = episode(&map, "ep-dup", goal.clone(), 3, OutcomeFlag::Success, "r");
        bank.commit_episode(g.clone(), vec![], 3).unwrap();
        assert!(matches!(
            bank.commit_episode(g, vec![], 3),
            Err(LpmError::DuplicateEpisode(id)) if id == "ep-dup"
        ));
        // Foreign principles are rejected.
        let g2 = episode(&map, "ep-two", goal, 3, OutcomeFlag::Success, "r");
        let mut p = principle_for(&g2, "text");
        p.source_episode = "ep-other".into();
        assert!(matches!(
            bank.commit_episode(g2, vec![p], 3),
            Err(LpmError::BadProvenance { .. })
        ));
    }

    #[test]
    fn bank_survives_a_round_trip_bit_exactly() {
        let map = open_map();
        let goal = GoalSpec::ig_nav(&map, Pose::new(9, 4, 0));
        let mut bank = EpisodeBank::new();
        for (i, outcome) in [OutcomeFlag::Success, OutcomeFlag::Failure].into_iter().enumerate() {
            let g = episode(&map, &format!("ep-rt-{i}"), goal.clone(), 3 + i, outcome, "roam");
            let p = principle_for(&g, "round trip");
            bank.commit_episode(g, vec![p], 3).unwrap();
        }
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        save_bank(&bank, dir1.path()).unwrap();
        let loaded = load_bank(dir1.path()).unwrap();
        assert_eq!(loaded, bank);
        save_bank(&loaded, dir2.path()).unwrap();
        for name in ["bank.json", "principles.jsonl", "ep-rt-0.mem", "ep-rt-1.mem"] {
            let a = fs::read(dir1.path().join(name)).unwrap();
            let b = fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs across the round trip");
        }
    }
}
