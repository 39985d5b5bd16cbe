//! Autonomous heuristic induction: raw behavioral heuristics mined per
//! episode accumulate in an append-only log; the merged library is
//! always a pure function of that log (cluster by pattern, refine by
//! text similarity, fuse each cluster), so replaying the log from any
//! point reproduces the same library.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, HeuristicMergerBackend};
use crate::gridworld::OutcomeFlag;
use crate::hashing::text_cosine;

/// Pattern id for episodes that over-commit to a winning route.
pub const PATTERN_DIRECT_APPROACH: &str = "DIRECT_APPROACH";
/// Pattern id for successes that crossed a room boundary before
/// locking onto the goal.
pub const PATTERN_DOOR_FIRST: &str = "DOOR_FIRST";

/// Dimensions of the hashed text space used for cluster refinement.
const TEXT_SIM_DIMS: usize = 128;

#[derive(Debug, Error)]
pub enum AkiError {
    #[error("heuristic confidence {0} is outside [0, 1]")]
    BadConfidence(f64),
    #[error("heuristic outcome tag must be success or failure")]
    PendingTag,
    #[error("heuristic pattern id is empty")]
    EmptyPattern,
    #[error("cannot merge heuristics with mixed pattern ids: {0} and {1}")]
    MixedPatterns(String, String),
    #[error("cannot merge an empty cluster")]
    EmptyCluster,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file} line {line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("merged index does not match a recompute from the raw log")]
    IndexMismatch,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

fn io_err(path: &Path, source: io::Error) -> AkiError {
    AkiError::Io { path: path.to_path_buf(), source }
}

/// One mined behavioral regularity from one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heuristic {
    /// Detector family, e.g. `OSCILLATION`.
    pub pattern_id: String,
    /// What was observed.
    pub description: String,
    /// What to do about it.
    pub strategy: String,
    /// Detector trigger strength in [0, 1].
    pub confidence: f64,
    /// Outcome of the episode it was mined from.
    pub outcome_tag: OutcomeFlag,
    pub source_episode: String,
}

impl Heuristic {
    pub fn validate(&self) -> Result<(), AkiError> {
        if self.pattern_id.is_empty() {
            return Err(AkiError::EmptyPattern);
        }
        if !(0.0..=1.0).contains(&self.confidence) || !self.confidence.is_finite() {
            return Err(AkiError::BadConfidence(self.confidence));
        }
        if self.outcome_tag == OutcomeFlag::Pending {
            return Err(AkiError::PendingTag);
        }
        Ok(())
    }

    /// The text the semantic refinement compares.
    fn sim_text(&self) -> String {
        format!("{} {}", self.description, self.strategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeMix {
    pub successes: u32,
    pub failures: u32,
}

/// A cluster of raw heuristics fused into one library entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedHeuristic {
    pub pattern_id: String,
    pub description: String,
    pub strategy: String,
    /// Mean member confidence.
    pub confidence: f64,
    /// Number of members.
    pub support: u32,
    pub outcome_mix: OutcomeMix,
    /// Member source episodes, sorted (duplicates kept: support counts
    /// contributions, not distinct episodes).
    pub provenance: Vec<String>,
}

/// Group raw heuristics into clusters: members must share a pattern id
/// and be connected by single-linkage text similarity at or above
/// `sim_threshold`. Returns index clusters, each sorted, ordered by
/// (pattern id, first member index).
pub fn cluster(raw: &[Heuristic], sim_threshold: f64) -> Vec<Vec<usize>> {
    let mut by_pattern: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, h) in raw.iter().enumerate() {
        by_pattern.entry(&h.pattern_id).or_default().push(i);
    }
    let mut clusters = Vec::new();
    for members in by_pattern.values() {
        // Union-find over the pattern group; single linkage means one
        // above-threshold pair is enough to join two clusters.
        let mut parent: Vec<usize> = (0..members.len()).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let root = find(parent, parent[i]);
                parent[i] = root;
            }
            parent[i]
        }
        for a in 0..members.len() {
            for b in (a + 1)..members.len() {
                let sim = text_cosine(
                    &raw[members[a]].sim_text(),
                    &raw[members[b]].sim_text(),
                    TEXT_SIM_DIMS,
                );
                if sim >= sim_threshold {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (local, &member) in members.iter().enumerate() {
            let root = find(&mut parent, local);
            groups.entry(root).or_default().push(member);
        }
        clusters.extend(groups.into_values());
    }
    clusters.sort_by_key(|c| {
        let first = c[0];
        (raw[first].pattern_id.clone(), first)
    });
    clusters
}

/// Fuse one cluster. Insensitive to member order: confidences are summed
/// in value order, provenance is sorted, and the merger is required to
/// be order-insensitive over texts.
pub fn merge_cluster(
    members: &[&Heuristic],
    merger: &dyn HeuristicMergerBackend,
) -> Result<MergedHeuristic, AkiError> {
    let first = members.first().ok_or(AkiError::EmptyCluster)?;
    for m in members {
        if m.pattern_id != first.pattern_id {
            return Err(AkiError::MixedPatterns(
                first.pattern_id.clone(),
                m.pattern_id.clone(),
            ));
        }
        m.validate()?;
    }
    let (description, strategy) = merger.merge_texts(members)?;
    let mut confidences: Vec<f64> = members.iter().map(|m| m.confidence).collect();
    confidences.sort_by(f64::total_cmp);
    let confidence = confidences.iter().sum::<f64>() / confidences.len() as f64;
    let mut mix = OutcomeMix::default();
    for m in members {
        match m.outcome_tag {
            OutcomeFlag::Success => mix.successes += 1,
            _ => mix.failures += 1,
        }
    }
    let mut provenance: Vec<String> =
        members.iter().map(|m| m.source_episode.clone()).collect();
    provenance.sort();
    Ok(MergedHeuristic {
        pattern_id: first.pattern_id.clone(),
        description,
        strategy,
        confidence,
        support: members.len() as u32,
        outcome_mix: mix,
        provenance,
    })
}

/// The heuristic store: the raw append-only log plus the merged index
/// recomputed from it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeuristicLibrary {
    raw: Vec<Heuristic>,
    merged: Vec<MergedHeuristic>,
}

impl HeuristicLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raw(&self) -> &[Heuristic] {
        &self.raw
    }

    pub fn merged(&self) -> &[MergedHeuristic] {
        &self.merged
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Append newly mined heuristics and recompute the merged index from
    /// the whole log. Incremental updates therefore commute with one
    /// batch update of the same heuristics.
    pub fn update(
        &mut self,
        new: Vec<Heuristic>,
        sim_threshold: f64,
        merger: &dyn HeuristicMergerBackend,
    ) -> Result<(), AkiError> {
        for h in &new {
            h.validate()?;
        }
        self.raw.extend(new);
        self.merged = recompute(&self.raw, sim_threshold, merger)?;
        Ok(())
    }

    /// Entries trustworthy enough to steer planning: confidence at least
    /// `confidence_floor` and support at least `min_support`, best first
    /// (confidence, then support, then pattern id), at most `cap`.
    pub fn select_guidance(
        &self,
        confidence_floor: f64,
        min_support: u32,
        cap: usize,
    ) -> Vec<MergedHeuristic> {
        let mut picked: Vec<MergedHeuristic> = self
            .merged
            .iter()
            .filter(|m| m.confidence >= confidence_floor && m.support >= min_support)
            .cloned()
            .collect();
        picked.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then_with(|| b.support.cmp(&a.support))
                .then_with(|| a.pattern_id.cmp(&b.pattern_id))
                .then_with(|| a.description.cmp(&b.description))
        });
        picked.truncate(cap);
        picked
    }
}

/// The merged index as a pure function of the raw log.
pub fn recompute(
    raw: &[Heuristic],
    sim_threshold: f64,
    merger: &dyn HeuristicMergerBackend,
) -> Result<Vec<MergedHeuristic>, AkiError> {
    let mut merged = Vec::new();
    for indices in cluster(raw, sim_threshold) {
        let members: Vec<&Heuristic> = indices.iter().map(|&i| &raw[i]).collect();
        merged.push(merge_cluster(&members, merger)?);
    }
    Ok(merged)
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryIndex {
    version: u32,
    sim_threshold: f64,
    entries: Vec<MergedHeuristic>,
}

/// Write the library as a directory: `raw.jsonl` (the log, one heuristic
/// per line) and `merged.json` (the index). Since the log only grows,
/// successive saves only ever extend `raw.jsonl`.
pub fn save_library(
    library: &HeuristicLibrary,
    sim_threshold: f64,
    dir: &Path,
) -> Result<(), AkiError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut lines = String::new();
    for h in &library.raw {
        lines.push_str(&serde_json::to_string(h).expect("heuristic serializes"));
        lines.push('\n');
    }
    let raw_path = dir.join("raw.jsonl");
    fs::write(&raw_path, lines).map_err(|e| io_err(&raw_path, e))?;
    let index = LibraryIndex {
        version: 1,
        sim_threshold,
        entries: library.merged.clone(),
    };
    let body = serde_json::to_string_pretty(&index).expect("index serializes");
    let merged_path = dir.join("merged.json");
    fs::write(&merged_path, body + "\n").map_err(|e| io_err(&merged_path, e))?;
    Ok(())
}

/// Load a library and verify the stored index against a recompute from
/// the raw log (using the threshold the index was built with); a
/// mismatch means the files were edited out from under us.
pub fn load_library(
    dir: &Path,
    merger: &dyn HeuristicMergerBackend,
) -> Result<(HeuristicLibrary, f64), AkiError> {
    let raw_path = dir.join("raw.jsonl");
    let text = fs::read_to_string(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let mut raw = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let h: Heuristic = serde_json::from_str(line).map_err(|e| AkiError::Parse {
            file: "raw.jsonl".into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        raw.push(h);
    }
    let merged_path = dir.join("merged.json");
    let body = fs::read_to_string(&merged_path).map_err(|e| io_err(&merged_path, e))?;
    let index: LibraryIndex = serde_json::from_str(&body).map_err(|e| AkiError::Parse {
        file: "merged.json".into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let merged = recompute(&raw, index.sim_threshold, merger)?;
    if merged != index.entries {
        return Err(AkiError::IndexMismatch);
    }
    Ok((HeuristicLibrary { raw, merged }, index.sim_threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::oracle::OracleHeuristicMerger;
    use crate::srm::{PATTERN_COLLISION_STREAK, PATTERN_OSCILLATION};

    fn heuristic(pattern: &str, text: &str, c: f64, tag: OutcomeFlag, ep: &str) -> Heuristic {
        Heuristic {
            pattern_id: pattern.into(),
            description: text.into(),
            strategy: format!("respond to {text}"),
            confidence: c,
            outcome_tag: tag,
            source_episode: ep.into(),
        }
    }

    #[test]
    fn clustering_needs_both_pattern_and_text_agreement() {
        let raw = vec![
            heuristic(PATTERN_OSCILLATION, "bounced between two cells", 0.8, OutcomeFlag::Failure, "e0"),
            heuristic(PATTERN_OSCILLATION, "bounced between two cells", 0.9, OutcomeFlag::Failure, "e1"),
            heuristic(PATTERN_OSCILLATION, "paced one long corridor loop repeatedly wasting turns", 0.7, OutcomeFlag::Failure, "e2"),
            heuristic(PATTERN_COLLISION_STREAK, "bounced between two cells", 0.8, OutcomeFlag::Failure, "e3"),
        ];
        let clusters = cluster(&raw, 0.85);
        assert_eq!(clusters.len(), 3);
        assert!(clusters.contains(&vec![0, 1]));
        assert!(clusters.contains(&vec![2]));
        assert!(clusters.contains(&vec![3]));
    }

    #[test]
    fn merge_is_insensitive_to_member_order() {
        let merger = OracleHeuristicMerger;
        let a = heuristic(PATTERN_OSCILLATION, "bounced between cells", 0.7, OutcomeFlag::Failure, "e-b");
        let b = heuristic(PATTERN_OSCILLATION, "bounced between cells", 0.9, OutcomeFlag::Success, "e-a");
        let c = heuristic(PATTERN_OSCILLATION, "bounced around", 0.5, OutcomeFlag::Failure, "e-c");
        let m1 = merge_cluster(&[&a, &b, &c], &merger).unwrap();
        let m2 = merge_cluster(&[&c, &b, &a], &merger).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(
            serde_json::to_string(&m1).unwrap(),
            serde_json::to_string(&m2).unwrap()
        );
        assert_eq!(m1.support, 3);
        assert_eq!(m1.outcome_mix, OutcomeMix { successes: 1, failures: 2 });
        assert_eq!(m1.provenance, ["e-a", "e-b", "e-c"]);
        assert!((m1.confidence - 0.7).abs() < 1e-12);
    }

    #[test]
    fn mixed_patterns_refuse_to_merge() {
        let merger = OracleHeuristicMerger;
        let a = heuristic(PATTERN_OSCILLATION, "x", 0.5, OutcomeFlag::Failure, "e0");
        let b = heuristic(PATTERN_COLLISION_STREAK, "x", 0.5, OutcomeFlag::Failure, "e0");
        assert!(matches!(
            merge_cluster(&[&a, &b], &merger),
            Err(AkiError::MixedPatterns(..))
        ));
        assert!(matches!(merge_cluster(&[], &merger), Err(AkiError::EmptyCluster)));
    }

    #[test]
    fn incremental_updates_match_one_batch_update() {
        let merger = OracleHeuristicMerger;
        let batch: Vec<Heuristic> = (0..6)
            .map(|i| {
                let tag = if i % 2 == 0 { OutcomeFlag::Failure } else { OutcomeFlag::Success };
                let pattern = if i < 4 { PATTERN_OSCILLATION } else { PATTERN_DOOR_FIRST };
                heuristic(pattern, "a recurring movement pattern", 0.5 + 0.05 * i as f64, tag, &format!("e{i}"))
            })
            .collect();
        let mut incremental = HeuristicLibrary::new();
        incremental.update(batch[..2].to_vec(), 0.85, &merger).unwrap();
        incremental.update(batch[2..5].to_vec(), 0.85, &merger).unwrap();
        incremental.update(batch[5..].to_vec(), 0.85, &merger).unwrap();
        let mut oneshot = HeuristicLibrary::new();
        oneshot.update(batch, 0.85, &merger).unwrap();
        assert_eq!(incremental, oneshot);
    }

    #[test]
    fn guidance_filters_ranks_and_caps() {
        let merger = OracleHeuristicMerger;
        let mut lib = HeuristicLibrary::new();
        let mut batch = Vec::new();
        // Strong, well-supported oscillation evidence.
        for i in 0..3 {
            batch.push(heuristic(PATTERN_OSCILLATION, "bounced between cells", 0.9, OutcomeFlag::Failure, &format!("o{i}")));
        }
        // Well-supported but weak evidence: filtered by confidence.
        for i in 0..3 {
            batch.push(heuristic(PATTERN_COLLISION_STREAK, "scraped the wall", 0.4, OutcomeFlag::Failure, &format!("c{i}")));
        }
        // Strong but solitary evidence: filtered by support.
        batch.push(heuristic(PATTERN_DIRECT_APPROACH, "went straight in", 1.0, OutcomeFlag::Success, "d0"));
        // Mid-strength, supported: kept, ranked below the stronger entry.
        for i in 0..2 {
            batch.push(heuristic(PATTERN_DOOR_FIRST, "crossed the doorway first", 0.8, OutcomeFlag::Success, &format!("f{i}")));
        }
        lib.update(batch, 0.85, &merger).unwrap();
        let picked = lib.select_guidance(0.7, 2, 10);
        let patterns: Vec<&str> = picked.iter().map(|m| m.pattern_id.as_str()).collect();
        assert_eq!(patterns, [PATTERN_OSCILLATION, PATTERN_DOOR_FIRST]);
        let capped = lib.select_guidance(0.7, 2, 1);
        assert_eq!(capped.len(), 1);
        assert_eq!(capped[0].pattern_id, PATTERN_OSCILLATION);
    }

    #[test]
    fn library_round_trips_through_disk() {
        let merger = OracleHeuristicMerger;
        let mut lib = HeuristicLibrary::new();
        let batch = vec![
            heuristic(PATTERN_OSCILLATION, "bounced between cells", 0.75, OutcomeFlag::Failure, "e0"),
            heuristic(PATTERN_OSCILLATION, "bounced between cells", 0.85, OutcomeFlag::Failure, "e1"),
        ];
        lib.update(batch, 0.85, &merger).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_library(&lib, 0.85, dir.path()).unwrap();
        let (loaded, threshold) = load_library(dir.path(), &merger).unwrap();
        assert_eq!(loaded, lib);
        assert_eq!(threshold, 0.85);
        // A tampered index is caught at load.
        let merged_path = dir.path().join("merged.json");
        let body = fs::read_to_string(&merged_path).unwrap();
        fs::write(&merged_path, body.replace("\"support\": 2", "\"support\": 9")).unwrap();
        assert!(matches!(
            load_library(dir.path(), &merger),
            Err(AkiError::IndexMismatch) | Err(AkiError::Parse { .. })
        ));
    }
}
