//! Inter-folder cleaning: folders whose centroids are close are either merged
//! (same identity split across folders) or the smaller one is deleted
//! (ambiguous overlap).
//!
//! Resolution runs in passes. Each pass scans all centroid pairs with
//! similarity `>= delete_low` and walks them from most to least similar.
//! A pair is skipped once either side was removed, or merged into, earlier in
//! the same pass; merged survivors get a fresh centroid and are reconsidered
//! in the next pass. Passes stop at a fixpoint or after `max_passes`.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingMap, Folder, SubjectId};
use crate::embedding::{cosine_unchecked, Centroid, Embedding, Similarity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterCleanConfig {
    /// Merge when centroid similarity is strictly above this.
    pub merge_threshold: f64,
    /// Delete the smaller folder when similarity is in `[delete_low, merge_threshold]`.
    pub delete_low: f64,
    pub max_passes: usize,
}

impl Default for InterCleanConfig {
    fn default() -> Self {
        InterCleanConfig {
            merge_threshold: 0.7,
            delete_low: 0.5,
            max_passes: 10,
        }
    }
}

impl InterCleanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.delete_low && self.delete_low < self.merge_threshold && self.merge_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "inter thresholds must satisfy 0 < delete_low ({}) < merge_threshold ({}) < 1",
                self.delete_low, self.merge_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Merge,
    Delete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterAction {
    pub kind: ActionKind,
    pub survivor: SubjectId,
    pub victim: SubjectId,
    pub similarity: Similarity,
}

/// A centroid pair from [`pairwise_centroid_scan`]; `first < second` by
/// subject id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub first: SubjectId,
    pub second: SubjectId,
    pub similarity: Similarity,
}

/// Every centroid pair with similarity `>= delete_low`, most similar first,
/// ties ordered by `(smaller id, larger id)`.
pub fn pairwise_centroid_scan(centroids: &[Centroid], delete_low: f64) -> Vec<ScoredPair> {
    let n = centroids.len();
    let mut pairs: Vec<ScoredPair> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let a = &centroids[i];
            centroids[i + 1..].iter().filter_map(move |b| {
                let s = cosine_unchecked(&a.vector, &b.vector);
                (s.value() >= delete_low).then(|| {
                    let (first, second) = if a.subject_id <= b.subject_id {
                        (a.subject_id.clone(), b.subject_id.clone())
                    } else {
                        (b.subject_id.clone(), a.subject_id.clone())
                    };
                    ScoredPair {
                        first,
                        second,
                        similarity: s,
                    }
                })
            })
        })
        .collect();
    pairs.sort_by(|x, y| {
        y.similarity
            .value()
            .total_cmp(&x.similarity.value())
            .then_with(|| x.first.cmp(&y.first))
            .then_with(|| x.second.cmp(&y.second))
    });
    pairs
}

struct Entry {
    folder: Folder,
    centroid: Embedding,
}

/// Decides which side of a pair survives. Larger folders survive; equal
/// sizes keep the lexicographically smaller subject id.
fn survivor_of<'a>(a: (&'a SubjectId, usize), b: (&'a SubjectId, usize)) -> (&'a SubjectId, &'a SubjectId) {
    match a.1.cmp(&b.1) {
        std::cmp::Ordering::Greater => (a.0, b.0),
        std::cmp::Ordering::Less => (b.0, a.0),
        std::cmp::Ordering::Equal if a.0 <= b.0 => (a.0, b.0),
        std::cmp::Ordering::Equal => (b.0, a.0),
    }
}

/// Merges or deletes overlapping folders. Returns surviving folders sorted by
/// subject id and the ordered action log.
pub fn resolve_folders(
    folders: &[Folder],
    embeddings: &EmbeddingMap,
    config: &InterCleanConfig,
) -> Result<(Vec<Folder>, Vec<InterAction>)> {
    config.validate()?;
    let mut live: BTreeMap<SubjectId, Entry> = BTreeMap::new();
    for f in folders.iter().filter(|f| !f.is_empty()) {
        let centroid = f.centroid(embeddings)?;
        let mut folder = f.clone();
        folder.faces.sort();
        if live.insert(f.subject_id.clone(), Entry { folder, centroid }).is_some() {
            return Err(Error::InvalidConfig(format!(
                "subject `{}` appears twice",
                f.subject_id
            )));
        }
    }

    let mut log = Vec::new();
    for _pass in 0..config.max_passes {
        let centroids: Vec<Centroid> = live
            .iter()
            .map(|(id, e)| Centroid {
                subject_id: id.clone(),
                vector: e.centroid.clone(),
                member_count: e.folder.len(),
            })
            .collect();
        let pairs = pairwise_centroid_scan(&centroids, config.delete_low);
        if pairs.is_empty() {
            break;
        }
        let mut stale: HashSet<SubjectId> = HashSet::new();
        let mut merged_into: Vec<SubjectId> = Vec::new();
        for pair in pairs {
            if stale.contains(&pair.first) || stale.contains(&pair.second) {
                continue;
            }
            let (survivor, victim) = survivor_of(
                (&pair.first, live[&pair.first].folder.len()),
                (&pair.second, live[&pair.second].folder.len()),
            );
            let (survivor, victim) = (survivor.clone(), victim.clone());
            let kind = if pair.similarity.value() > config.merge_threshold {
                ActionKind::Merge
            } else {
                ActionKind::Delete
            };
            let removed = live.remove(&victim).expect("live victim");
            if kind == ActionKind::Merge {
                let entry = live.get_mut(&survivor).expect("live survivor");
                entry.folder.faces.extend(removed.folder.faces);
                entry.folder.faces.sort();
                stale.insert(survivor.clone());
                merged_into.push(survivor.clone());
            }
            stale.insert(victim.clone());
            log.push(InterAction {
                kind,
                survivor,
                victim,
                similarity: pair.similarity,
            });
        }
        for id in merged_into {
            let entry = live.get_mut(&id).expect("merged survivor");
            entry.centroid = entry.folder.centroid(embeddings)?;
        }
    }
    Ok((live.into_values().map(|e| e.folder).collect(), log))
}

/// Applies an action log to `folders`, reproducing [`resolve_folders`]'s
/// output.
pub fn replay(folders: &[Folder], log: &[InterAction]) -> Result<Vec<Folder>> {
    let mut live: BTreeMap<SubjectId, Folder> = folders
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| (f.subject_id.clone(), f.clone()))
        .collect();
    for (i, action) in log.iter().enumerate() {
        let victim = live.remove(&action.victim).ok_or_else(|| {
            Error::InvalidConfig(format!("action {i}: victim `{}` not present", action.victim))
        })?;
        let survivor = live.get_mut(&action.survivor).ok_or_else(|| {
            Error::InvalidConfig(format!("action {i}: survivor `{}` not present", action.survivor))
        })?;
        if action.kind == ActionKind::Merge {
            survivor.faces.extend(victim.faces);
        }
    }
    Ok(live
        .into_values()
        .map(|mut f| {
            f.faces.sort();
            f
        })
        .collect())
}

pub fn write_log<W: Write>(log: &[InterAction], mut w: W) -> Result<()> {
    for a in log {
        serde_json::to_writer(&mut w, a)?;
        w.write_all(b"\n").map_err(|e| Error::io("<action log>", e))?;
    }
    w.flush().map_err(|e| Error::io("<action log>", e))
}

pub fn read_log<R: BufRead>(r: R) -> Result<Vec<InterAction>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}
