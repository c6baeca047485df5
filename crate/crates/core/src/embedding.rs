//! Unit-norm embedding vectors and the similarity primitives every cleaning
//! and evaluation stage is built on.
//!
//! Components are stored as `f32`; every reduction (dot products, means,
//! norms) accumulates in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default embedding width produced by the face models this toolkit targets.
pub const DEFAULT_DIMENSION: usize = 512;

/// Slack allowed on a dot product of two unit vectors before clamping.
const SIMILARITY_SLACK: f64 = 1e-6;

/// Centroid means with a norm below this are rejected.
const MIN_CENTROID_NORM: f64 = 1e-6;

/// A finite, L2-normalized vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps components that are already unit-norm, e.g. rows read back from
    /// an embedding file. Fails if the norm is off by more than `1e-3`.
    pub fn from_unit(components: Vec<f32>) -> Result<Self> {
        check_finite(&components)?;
        let norm = sum_squares(&components).sqrt();
        if (norm - 1.0).abs() > 1e-3 {
            return Err(Error::EmbeddingFile(format!(
                "vector norm {norm:.6} is not unit"
            )));
        }
        Ok(Embedding(components))
    }

    /// Normalizes an `f64` vector; used where embeddings are composed in
    /// extended precision.
    pub fn from_f64(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInput("embedding"));
        }
        if let Some(i) = raw.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateEmbedding);
        }
        Ok(Embedding(raw.iter().map(|x| (x / norm) as f32).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&x| f64::from(x)).collect()
    }

    /// Standard basis vector `e_axis` in `dim` dimensions.
    pub fn basis(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dimension {dim}");
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Embedding(v)
    }
}

impl AsRef<[f32]> for Embedding {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Cosine similarity of two unit vectors, clamped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Similarity(f64);

impl Similarity {
    pub fn new(value: f64) -> Self {
        Similarity(value.clamp(-1.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Cosine distance `1 - s`, in `[0, 2]`.
    pub fn distance(self) -> f64 {
        1.0 - self.0
    }
}

impl From<Similarity> for f64 {
    fn from(s: Similarity) -> f64 {
        s.0
    }
}

fn check_finite(v: &[f32]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

fn sum_squares(v: &[f32]) -> f64 {
    dot_raw(v, v)
}

/// `f64`-accumulated dot product over eight independent lanes.
#[inline]
pub fn dot_raw(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [0.0f64; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let (rest_a, rest_b) = (chunks_a.remainder(), chunks_b.remainder());
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for k in 0..8 {
            lanes[k] += f64::from(ca[k]) * f64::from(cb[k]);
        }
    }
    let mut sum = lanes.iter().sum::<f64>();
    for (x, y) in rest_a.iter().zip(rest_b) {
        sum += f64::from(*x) * f64::from(*y);
    }
    sum
}

/// Scales `raw` to unit L2 norm.
pub fn normalize(raw: &[f32]) -> Result<Embedding> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("embedding"));
    }
    check_finite(raw)?;
    let norm = sum_squares(raw).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(Embedding(
        raw.iter().map(|&x| (f64::from(x) / norm) as f32).collect(),
    ))
}

/// Cosine similarity of two embeddings of equal dimension.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<Similarity> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(cosine_unchecked(a, b))
}

/// [`cosine`] without the dimension check, for hot loops over data already
/// validated to share one dimension.
#[inline]
pub fn cosine_unchecked(a: &Embedding, b: &Embedding) -> Similarity {
    let dot = dot_raw(&a.0, &b.0);
    debug_assert!(
        dot.abs() <= 1.0 + SIMILARITY_SLACK + 1e-4,
        "dot product {dot} of unit vectors out of range"
    );
    Similarity::new(dot)
}

/// Renormalized arithmetic mean of `members`.
pub fn centroid<'a, I>(members: I) -> Result<Embedding>
where
    I: IntoIterator<Item = &'a Embedding>,
{
    let mut iter = members.into_iter();
    let first = iter.next().ok_or(Error::EmptyInput("centroid members"))?;
    let dim = first.dim();
    let mut sum: Vec<f64> = first.to_f64();
    let mut count = 1usize;
    for m in iter {
        if m.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: m.dim(),
            });
        }
        for (acc, &x) in sum.iter_mut().zip(&m.0) {
            *acc += f64::from(x);
        }
        count += 1;
    }
    let n = count as f64;
    let norm = sum.iter().map(|x| (x / n) * (x / n)).sum::<f64>().sqrt();
    if norm < MIN_CENTROID_NORM {
        return Err(Error::DegenerateCentroid(norm));
    }
    Ok(Embedding(
        sum.iter().map(|x| (x / n / norm) as f32).collect(),
    ))
}

/// A subject's centroid together with the number of faces it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub subject_id: crate::dataset::SubjectId,
    pub vector: Embedding,
    pub member_count: usize,
}
