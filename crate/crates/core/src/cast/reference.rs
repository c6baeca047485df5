//! Embedder implementations: a generative reference family driven by
//! synthetic ground truth, and lookup tables of precomputed embeddings.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Embedder;
use crate::dataset::{Dataset, EmbeddingMap, FaceId};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::synth::{nuisance_basis, purity, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Identity weight of the initial teacher.
    pub alpha0: f64,
    /// Smallest cleaned set, in subjects, that `fit` accepts.
    pub min_fit_subjects: usize,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            alpha0: 0.6,
            min_fit_subjects: 10,
        }
    }
}

/// `embed(f) = normalize(alpha * x_f + (1 - alpha) * h_f * P z_f)` where
/// `x_f` is the face's appearance, `h_f` its hardness, `z_f` its pose code
/// and `P` the nuisance basis. Each fit sets
/// `alpha = alpha0 + (1 - alpha0) * purity` of the data it was fit on.
#[derive(Debug, Clone)]
pub struct ReferenceEmbedder {
    appearance: Arc<EmbeddingMap>,
    truth: Arc<GroundTruth>,
    basis: Arc<Vec<Vec<f64>>>,
    config: ReferenceConfig,
    alpha: f64,
    generation: usize,
}

impl ReferenceEmbedder {
    pub fn new(appearance: Arc<EmbeddingMap>, truth: Arc<GroundTruth>, config: ReferenceConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.alpha0) {
            return Err(Error::InvalidConfig(format!(
                "reference.alpha0 must lie in [0, 1], got {}",
                config.alpha0
            )));
        }
        let basis = Arc::new(nuisance_basis(&truth.nuisance));
        Ok(ReferenceEmbedder {
            appearance,
            truth,
            basis,
            alpha: config.alpha0,
            config,
            generation: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn embed_one(&self, face: &FaceId) -> Result<Embedding> {
        let missing = || Error::Embedder(format!("no latent data for face `{face}`"));
        let x = self.appearance.get(face).ok_or_else(missing)?;
        let t = self.truth.faces.get(face).ok_or_else(missing)?;
        let mut v: Vec<f64> = x.as_slice().iter().map(|&c| self.alpha * f64::from(c)).collect();
        let weight = (1.0 - self.alpha) * f64::from(t.hardness);
        for (row, &z) in self.basis.iter().zip(&t.pose) {
            let w = weight * f64::from(z);
            for (acc, b) in v.iter_mut().zip(row) {
                *acc += w * b;
            }
        }
        Embedding::from_f64(&v).map_err(|e| Error::Embedder(format!("face `{face}`: {e}")))
    }
}

impl Embedder for ReferenceEmbedder {
    fn name(&self) -> String {
        format!("reference-g{}-alpha{:.4}", self.generation, self.alpha)
    }

    fn dimension(&self) -> usize {
        self.truth.nuisance.dimension
    }

    fn generation(&self) -> usize {
        self.generation
    }

    fn embed(&self, faces: &[FaceId]) -> Result<Vec<Embedding>> {
        faces.iter().map(|f| self.embed_one(f)).collect()
    }

    fn fit(&self, cleaned: &Dataset) -> Result<Box<dyn Embedder>> {
        let subjects = cleaned.folders.iter().filter(|f| !f.is_empty()).count();
        if subjects < self.config.min_fit_subjects {
            return Err(Error::Embedder(format!(
                "fit needs at least {} subjects, got {subjects}",
                self.config.min_fit_subjects
            )));
        }
        let p = purity(cleaned, &self.truth)?.unwrap_or(0.0);
        let a0 = self.config.alpha0;
        Ok(Box::new(ReferenceEmbedder {
            alpha: a0 + (1.0 - a0) * p,
            generation: self.generation + 1,
            ..self.clone()
        }))
    }
}

/// One embedding table per generation; generations past the last table
/// keep using it.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    tables: Arc<Vec<EmbeddingMap>>,
    dimension: usize,
    generation: usize,
}

impl PrecomputedEmbedder {
    pub fn new(tables: Vec<EmbeddingMap>) -> Result<Self> {
        let dimension = tables
            .iter()
            .flat_map(|t| t.values())
            .map(Embedding::dim)
            .next()
            .ok_or(Error::EmptyInput("embedding tables"))?;
        for t in &tables {
            if let Some(e) = t.values().find(|e| e.dim() != dimension) {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: e.dim(),
                });
            }
        }
        Ok(PrecomputedEmbedder {
            tables: Arc::new(tables),
            dimension,
            generation: 0,
        })
    }

    fn table(&self) -> &EmbeddingMap {
        &self.tables[self.generation.min(self.tables.len() - 1)]
    }
}

impl Embedder for PrecomputedEmbedder {
    fn name(&self) -> String {
        format!("precomputed-g{}", self.generation)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn generation(&self) -> usize {
        self.generation
    }

    fn embed(&self, faces: &[FaceId]) -> Result<Vec<Embedding>> {
        let table = self.table();
        faces
            .iter()
            .map(|f| {
                table
                    .get(f)
                    .cloned()
                    .ok_or_else(|| Error::Embedder(format!("no embedding for face `{f}` in generation {}", self.generation)))
            })
            .collect()
    }

    fn fit(&self, _cleaned: &Dataset) -> Result<Box<dyn Embedder>> {
        Ok(Box::new(PrecomputedEmbedder {
            generation: self.generation + 1,
            ..self.clone()
        }))
    }
}
