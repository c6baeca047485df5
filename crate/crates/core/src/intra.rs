//! Intra-folder cleaning: density clustering inside one folder, keeping only
//! the dominant identity's cluster.

use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingMap, FaceId, Folder};
use crate::embedding::{centroid, cosine_unchecked, Embedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntraCleanConfig {
    /// Neighborhood radius in cosine distance (`1 - cosine`).
    pub eps: f64,
    /// Neighborhood size, counting the point itself, that makes a core point.
    pub min_pts: usize,
    /// The largest cluster must have at least this many faces to be kept.
    pub min_dominant_size: usize,
}

impl Default for IntraCleanConfig {
    fn default() -> Self {
        IntraCleanConfig {
            eps: 0.3,
            min_pts: 2,
            min_dominant_size: 3,
        }
    }
}

impl IntraCleanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 2.0) {
            return Err(Error::InvalidConfig(format!(
                "intra.eps must lie in (0, 2), got {}",
                self.eps
            )));
        }
        if self.min_pts < 1 {
            return Err(Error::InvalidConfig("intra.min_pts must be >= 1".into()));
        }
        if self.min_dominant_size < 3 {
            return Err(Error::InvalidConfig(
                "intra.min_dominant_size must be >= 3".into(),
            ));
        }
        Ok(())
    }
}

/// Per-point cluster assignment. `None` is noise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<Option<usize>>,
    pub core: Vec<bool>,
}

impl ClusterLabeling {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |&m| m + 1)
    }

    /// Member indices of each cluster, indexed by cluster id.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }

    /// Labels renumbered in order of first appearance, so two labelings that
    /// differ only by cluster ids compare equal.
    pub fn canonical(&self) -> Vec<Option<usize>> {
        let mut map = std::collections::HashMap::new();
        self.labels
            .iter()
            .map(|l| {
                l.map(|c| {
                    let next = map.len();
                    *map.entry(c).or_insert(next)
                })
            })
            .collect()
    }
}

/// A folder-level clusterer. DBSCAN is the shipped implementation; any
/// other clusterer producing a [`ClusterLabeling`] plugs into
/// [`clean_folder`] unchanged.
pub trait Clusterer: Sync {
    fn cluster(&self, embeddings: &[&Embedding]) -> Result<ClusterLabeling>;
}

/// DBSCAN over cosine distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dbscan {
    pub eps: f64,
    pub min_pts: usize,
}

impl Dbscan {
    pub fn new(config: &IntraCleanConfig) -> Self {
        Dbscan {
            eps: config.eps,
            min_pts: config.min_pts,
        }
    }

    fn neighborhoods(&self, points: &[&Embedding]) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut hoods: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if cosine_unchecked(points[i], points[j]).distance() <= self.eps {
                    hoods[i].push(j);
                    hoods[j].push(i);
                }
            }
        }
        for h in &mut hoods {
            h.sort_unstable();
        }
        hoods
    }
}

impl Clusterer for Dbscan {
    fn cluster(&self, points: &[&Embedding]) -> Result<ClusterLabeling> {
        let first = points.first().ok_or(Error::EmptyInput("dbscan points"))?;
        if let Some(bad) = points.iter().find(|p| p.dim() != first.dim()) {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                actual: bad.dim(),
            });
        }
        let hoods = self.neighborhoods(points);
        let core: Vec<bool> = hoods.iter().map(|h| h.len() >= self.min_pts).collect();
        let mut labels: Vec<Option<usize>> = vec![None; points.len()];
        let mut next_cluster = 0;
        let mut frontier = Vec::new();
        for seed in 0..points.len() {
            if labels[seed].is_some() || !core[seed] {
                continue;
            }
            labels[seed] = Some(next_cluster);
            frontier.push(seed);
            while let Some(p) = frontier.pop() {
                for &q in &hoods[p] {
                    if labels[q].is_none() {
                        labels[q] = Some(next_cluster);
                        if core[q] {
                            frontier.push(q);
                        }
                    }
                }
            }
            next_cluster += 1;
        }
        Ok(ClusterLabeling { labels, core })
    }
}

/// Convenience wrapper: DBSCAN with `config`'s parameters.
pub fn dbscan(points: &[&Embedding], config: &IntraCleanConfig) -> Result<ClusterLabeling> {
    Dbscan::new(config).cluster(points)
}

/// Mean cosine of members to their renormalized centroid.
fn cohesion(members: &[usize], points: &[&Embedding]) -> Result<f64> {
    let c = centroid(members.iter().map(|&i| points[i]))?;
    Ok(members
        .iter()
        .map(|&i| cosine_unchecked(points[i], &c).value())
        .sum::<f64>()
        / members.len() as f64)
}

/// Indices of the dominant cluster: the largest one, if it reaches
/// `min_dominant_size`. Equal-size candidates are ranked by cohesion, then by
/// their lexicographically smallest face id.
pub fn select_dominant(
    labeling: &ClusterLabeling,
    points: &[&Embedding],
    face_ids: &[FaceId],
    config: &IntraCleanConfig,
) -> Result<Vec<usize>> {
    debug_assert_eq!(labeling.len(), points.len());
    debug_assert_eq!(labeling.len(), face_ids.len());
    let clusters = labeling.clusters();
    let Some(largest) = clusters.iter().map(Vec::len).max() else {
        return Ok(Vec::new());
    };
    if largest < config.min_dominant_size {
        return Ok(Vec::new());
    }
    let mut candidates: Vec<&Vec<usize>> =
        clusters.iter().filter(|c| c.len() == largest).collect();
    if candidates.len() == 1 {
        return Ok(candidates.pop().unwrap().clone());
    }
    let mut best: Option<(f64, &FaceId, &Vec<usize>)> = None;
    for c in candidates {
        let score = cohesion(c, points)?;
        let min_face = c.iter().map(|&i| &face_ids[i]).min().unwrap();
        let better = match &best {
            None => true,
            Some((s, f, _)) => score > *s || (score == *s && min_face < *f),
        };
        if better {
            best = Some((score, min_face, c));
        }
    }
    Ok(best.map(|(_, _, c)| c.clone()).unwrap_or_default())
}

/// Clusters one folder and keeps its dominant identity. Faces are processed
/// in face-id order, so the result does not depend on the input order.
pub fn clean_folder(
    folder: &Folder,
    embeddings: &EmbeddingMap,
    clusterer: &dyn Clusterer,
    config: &IntraCleanConfig,
) -> Result<Folder> {
    if folder.is_empty() {
        return Err(Error::EmptyInput("folder"));
    }
    let mut faces = folder.faces.clone();
    faces.sort();
    let points = Folder::new(folder.subject_id.clone(), faces.clone()).embeddings(embeddings)?;
    let labeling = clusterer.cluster(&points)?;
    let mut keep: Vec<FaceId> = select_dominant(&labeling, &points, &faces, config)?
        .into_iter()
        .map(|i| faces[i].clone())
        .collect();
    keep.sort();
    Ok(Folder::new(folder.subject_id.clone(), keep))
}
