//! Final purification: per-subject near-duplicate removal, removal of
//! subjects overlapping an evaluation set, and a minimum-size floor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EmbeddingMap, FaceId, Folder};
use crate::embedding::{centroid, cosine_unchecked, Centroid, Embedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PostCleanConfig {
    pub duplicate_threshold: f64,
    pub overlap_threshold: f64,
    pub min_faces_per_identity: usize,
}

impl Default for PostCleanConfig {
    fn default() -> Self {
        PostCleanConfig {
            duplicate_threshold: 0.95,
            overlap_threshold: 0.7,
            min_faces_per_identity: 3,
        }
    }
}

impl PostCleanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("post.duplicate_threshold", self.duplicate_threshold),
            ("post.overlap_threshold", self.overlap_threshold),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {t}")));
            }
        }
        if self.min_faces_per_identity < 1 {
            return Err(Error::InvalidConfig("post.min_faces_per_identity must be >= 1".into()));
        }
        Ok(())
    }
}

struct Components {
    parent: Vec<usize>,
}

impl Components {
    fn new(n: usize) -> Self {
        Components {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Removes near-duplicates within one subject. Faces linked by similarity
/// above `duplicate_threshold` form groups (connected components); each
/// group keeps the face most similar to the subject centroid, ties going to
/// the smallest face id. Returns retained face ids in input order.
pub fn dedup_subject(faces: &[(FaceId, &Embedding)], config: &PostCleanConfig) -> Result<Vec<FaceId>> {
    if faces.len() < 2 {
        return Ok(faces.iter().map(|(f, _)| f.clone()).collect());
    }
    let n = faces.len();
    let mut groups = Components::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if cosine_unchecked(faces[i].1, faces[j].1).value() > config.duplicate_threshold {
                groups.union(i, j);
            }
        }
    }
    let center = centroid(faces.iter().map(|(_, e)| *e))?;
    let closeness: Vec<f64> = faces
        .iter()
        .map(|(_, e)| cosine_unchecked(e, &center).value())
        .collect();
    let mut best: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let root = groups.find(i);
        let replace = match best[root] {
            None => true,
            Some(b) => {
                closeness[i] > closeness[b] || (closeness[i] == closeness[b] && faces[i].0 < faces[b].0)
            }
        };
        if replace {
            best[root] = Some(i);
        }
    }
    let mut keep = vec![false; n];
    for b in best.into_iter().flatten() {
        keep[b] = true;
    }
    Ok(faces
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|((f, _), _)| f.clone())
        .collect())
}

/// Subjects whose centroid is no more than `overlap_threshold` similar to
/// every test centroid. An empty test set keeps everything.
pub fn remove_test_overlap<'a>(
    subjects: &'a [Centroid],
    test_centroids: &[Embedding],
    config: &PostCleanConfig,
) -> Vec<&'a Centroid> {
    if test_centroids.is_empty() {
        log::warn!("no test centroids supplied; skipping test-set overlap removal");
        return subjects.iter().collect();
    }
    subjects
        .par_iter()
        .filter(|s| {
            test_centroids
                .iter()
                .all(|t| cosine_unchecked(&s.vector, t).value() <= config.overlap_threshold)
        })
        .collect()
}

pub fn enforce_min_faces(dataset: &Dataset, config: &PostCleanConfig) -> Dataset {
    Dataset::new(
        dataset
            .folders
            .iter()
            .filter(|f| f.len() >= config.min_faces_per_identity)
            .cloned()
            .collect(),
    )
}

/// Dataset snapshots after each post-clean step.
#[derive(Debug, Clone)]
pub struct PostCleanOutcome {
    pub deduplicated: Dataset,
    pub overlap_removed: Dataset,
    pub final_dataset: Dataset,
}

pub fn post_clean(
    dataset: &Dataset,
    embeddings: &EmbeddingMap,
    test_centroids: &[Embedding],
    config: &PostCleanConfig,
) -> Result<PostCleanOutcome> {
    config.validate()?;
    let deduped: Vec<Folder> = dataset
        .folders
        .par_iter()
        .map(|f| {
            let faces: Vec<(FaceId, &Embedding)> = f
                .faces
                .iter()
                .map(|id| Ok((id.clone(), crate::dataset::lookup(embeddings, id)?)))
                .collect::<Result<_>>()?;
            Ok(Folder::new(f.subject_id.clone(), dedup_subject(&faces, config)?))
        })
        .collect::<Result<_>>()?;
    let deduplicated = Dataset::new(deduped);

    let centroids: Vec<Centroid> = deduplicated
        .folders
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| {
            Ok(Centroid {
                subject_id: f.subject_id.clone(),
                vector: f.centroid(embeddings)?,
                member_count: f.len(),
            })
        })
        .collect::<Result<_>>()?;
    let kept: std::collections::HashSet<_> = remove_test_overlap(&centroids, test_centroids, config)
        .into_iter()
        .map(|c| &c.subject_id)
        .collect();
    let overlap_removed = Dataset::new(
        deduplicated
            .folders
            .iter()
            .filter(|f| kept.contains(&f.subject_id))
            .cloned()
            .collect(),
    );
    let final_dataset = enforce_min_faces(&overlap_removed, config);
    Ok(PostCleanOutcome {
        deduplicated,
        overlap_removed,
        final_dataset,
    })
}
