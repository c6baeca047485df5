//! Intra- and inter-class similarity histograms over [-1, 1].

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EmbeddingMap};
use crate::embedding::{cosine_unchecked, Embedding};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityHistograms {
    pub bin_edges: Vec<f64>,
    pub intra_counts: Vec<u64>,
    pub inter_counts: Vec<u64>,
}

impl SimilarityHistograms {
    pub fn empty(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidConfig("histogram bin count must be >= 1".into()));
        }
        Ok(SimilarityHistograms {
            bin_edges: (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect(),
            intra_counts: vec![0; bins],
            inter_counts: vec![0; bins],
        })
    }

    pub fn bin_count(&self) -> usize {
        self.intra_counts.len()
    }

    /// Bin holding `s`; 1.0 falls into the last bin.
    pub fn bin_of(&self, s: f64) -> usize {
        let bins = self.bin_count();
        (((s + 1.0) / 2.0 * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    }

    pub fn intra_total(&self) -> u64 {
        self.intra_counts.iter().sum()
    }

    pub fn inter_total(&self) -> u64 {
        self.inter_counts.iter().sum()
    }
}

fn add_pairs(hist: &SimilarityHistograms, points: &[&Embedding]) -> Vec<u64> {
    let mut counts = vec![0u64; hist.bin_count()];
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            counts[hist.bin_of(cosine_unchecked(points[i], points[j]).value())] += 1;
        }
    }
    counts
}

fn merge(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Histograms over `sample` folders chosen by `seed`: every within-folder
/// face pair, and every pair of folder centroids.
pub fn similarity_histograms(
    dataset: &Dataset,
    embeddings: &EmbeddingMap,
    sample_size: usize,
    bins: usize,
    seed: u64,
) -> Result<SimilarityHistograms> {
    let mut hist = SimilarityHistograms::empty(bins)?;
    if sample_size == 0 {
        return Err(Error::InvalidConfig("histogram sample must be >= 1".into()));
    }
    let total = dataset.folders.len();
    if sample_size > total {
        return Err(Error::InvalidConfig(format!(
            "histogram sample {sample_size} exceeds folder count {total}"
        )));
    }
    let mut chosen: Vec<usize> = if sample_size == total {
        (0..total).collect()
    } else {
        sample(&mut crate::synth::substream(seed, 0), total, sample_size).into_vec()
    };
    chosen.sort_unstable();

    let folders: Vec<Vec<&Embedding>> = chosen
        .iter()
        .map(|&i| dataset.folders[i].embeddings(embeddings))
        .collect::<Result<_>>()?;
    hist.intra_counts = folders
        .par_iter()
        .map(|f| add_pairs(&hist, f))
        .reduce(|| vec![0; bins], merge);

    let centroids: Vec<Embedding> = folders
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| crate::embedding::centroid(f.iter().copied()))
        .collect::<Result<_>>()?;
    let refs: Vec<&Embedding> = centroids.iter().collect();
    hist.inter_counts = (0..refs.len())
        .into_par_iter()
        .map(|i| {
            let mut counts = vec![0u64; bins];
            for j in (i + 1)..refs.len() {
                counts[hist.bin_of(cosine_unchecked(refs[i], refs[j]).value())] += 1;
            }
            counts
        })
        .reduce(|| vec![0; bins], merge);
    Ok(hist)
}

/// Shared mass of the two normalized histograms: 1 for identical shapes,
/// 0 for disjoint supports.
pub fn histogram_overlap(h: &SimilarityHistograms) -> Result<f64> {
    let (ni, ne) = (h.intra_total(), h.inter_total());
    if ni == 0 {
        return Err(Error::EmptyInput("intra-class histogram"));
    }
    if ne == 0 {
        return Err(Error::EmptyInput("inter-class histogram"));
    }
    let overlap = h
        .intra_counts
        .iter()
        .zip(&h.inter_counts)
        .map(|(&a, &b)| (a as f64 / ni as f64).min(b as f64 / ne as f64))
        .sum::<f64>();
    Ok(overlap.min(1.0))
}
