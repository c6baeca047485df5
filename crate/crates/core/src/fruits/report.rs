//! Per-slice verification reports and cross-model normalization.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::face::TestFace;
use super::metrics::{fnmr_at_fmr, Curve, OperatingPoint, ScoreSet};
use super::pairs::{enumerate_pairs, Pair, PairSlice};
use crate::dataset::EmbeddingMap;
use crate::embedding::cosine;
use crate::error::{Error, Result};

/// Scores a face pair; higher means more likely the same identity.
pub trait PairScorer: Sync {
    fn name(&self) -> String;
    fn score(&self, a: &TestFace, b: &TestFace) -> std::result::Result<f64, String>;
}

/// Scores 1 for same-identity pairs and 0 otherwise.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectMatcher;

impl PairScorer for PerfectMatcher {
    fn name(&self) -> String {
        "perfect".into()
    }

    fn score(&self, a: &TestFace, b: &TestFace) -> std::result::Result<f64, String> {
        Ok(if a.identity_id == b.identity_id { 1.0 } else { 0.0 })
    }
}

/// Cosine similarity of stored embeddings.
#[derive(Debug, Clone)]
pub struct EmbeddingMatcher {
    pub name: String,
    pub table: EmbeddingMap,
}

impl PairScorer for EmbeddingMatcher {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn score(&self, a: &TestFace, b: &TestFace) -> std::result::Result<f64, String> {
        let get = |f: &TestFace| {
            self.table
                .get(&f.face_id)
                .ok_or_else(|| format!("no embedding for face `{}`", f.face_id))
        };
        cosine(get(a)?, get(b)?)
            .map(|s| s.value())
            .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub slices: Vec<PairSlice>,
    pub fmr_targets: Vec<f64>,
    /// Score at most this many impostor pairs per slice, chosen by seed.
    pub impostor_sample: Option<usize>,
    pub seed: u64,
    pub curve_points: usize,
    pub curve_min_fmr: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            slices: PairSlice::standard(),
            fmr_targets: vec![1e-5, 1e-4, 1e-3],
            impostor_sample: None,
            seed: 0,
            curve_points: 25,
            curve_min_fmr: 1e-6,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slices.is_empty() {
            return Err(Error::InvalidConfig("eval.slices must not be empty".into()));
        }
        if self.fmr_targets.is_empty() {
            return Err(Error::InvalidConfig("eval.fmr_targets must not be empty".into()));
        }
        if let Some(t) = self.fmr_targets.iter().find(|&&t| !(t > 0.0 && t <= 1.0)) {
            return Err(Error::InvalidConfig(format!("eval.fmr_targets entry {t} outside (0, 1]")));
        }
        if self.impostor_sample == Some(0) {
            return Err(Error::InvalidConfig("eval.impostor_sample must be >= 1".into()));
        }
        Ok(())
    }
}

/// Key used for a target FMR in reports, e.g. `1e-5`.
pub fn target_key(target: f64) -> String {
    format!("{target:e}")
}

const PAIR_RULE: &str = "genuine and impostor pairs are all unordered pairs of distinct faces \
admitted by the slice; cross-age-k keeps pairs with an age gap of at least k years and \
cross-scene keeps controlled-wild pairs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceReport {
    pub slice: PairSlice,
    pub face_count: usize,
    pub genuine_count: u64,
    pub impostor_count: u64,
    pub scored_genuine: u64,
    pub scored_impostor: u64,
    /// Whether impostors were subsampled.
    pub subsampled: bool,
    pub fnmr_at: BTreeMap<String, OperatingPoint>,
    pub curve: Option<Curve>,
    /// Why metrics are missing, if they are.
    pub undefined: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationReport {
    pub model: String,
    pub face_count: usize,
    pub pair_rule: String,
    pub impostor_sample: Option<usize>,
    pub seed: u64,
    pub slices: Vec<SliceReport>,
}

fn score_all(matcher: &dyn PairScorer, pairs: &[Pair<'_>]) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .map(|p| {
            let fail = |reason: String| Error::Matcher {
                a: p.a.face_id.0.clone(),
                b: p.b.face_id.0.clone(),
                reason,
            };
            let s = matcher.score(p.a, p.b).map_err(fail)?;
            if s.is_finite() {
                Ok(s)
            } else {
                Err(fail(format!("non-finite score {s}")))
            }
        })
        .collect()
}

pub fn verify_report(
    matcher: &dyn PairScorer,
    faces: &[TestFace],
    config: &VerifyConfig,
) -> Result<VerificationReport> {
    config.validate()?;
    let mut slices = Vec::with_capacity(config.slices.len());
    for (slice_index, &slice) in config.slices.iter().enumerate() {
        let e = enumerate_pairs(faces, slice)?;
        let counts = e.counts();
        let genuine: Vec<Pair<'_>> = e.genuine().collect();
        let (impostor, subsampled): (Vec<Pair<'_>>, bool) = match config.impostor_sample {
            Some(k) if (k as u64) < counts.impostor => {
                let mut rng = crate::synth::substream(config.seed, slice_index as u64);
                let mut ranks = sample(&mut rng, counts.impostor as usize, k).into_vec();
                ranks.sort_unstable();
                let mut wanted = ranks.into_iter().peekable();
                let picked = e
                    .impostor()
                    .enumerate()
                    .filter_map(|(rank, p)| {
                        if wanted.peek() == Some(&rank) {
                            wanted.next();
                            Some(p)
                        } else {
                            None
                        }
                    })
                    .collect();
                (picked, true)
            }
            _ => (e.impostor().collect(), false),
        };
        let genuine_scores = score_all(matcher, &genuine)?;
        let impostor_scores = score_all(matcher, &impostor)?;

        let mut report = SliceReport {
            slice,
            face_count: e.faces().len(),
            genuine_count: counts.genuine,
            impostor_count: counts.impostor,
            scored_genuine: genuine_scores.len() as u64,
            scored_impostor: impostor_scores.len() as u64,
            subsampled,
            fnmr_at: BTreeMap::new(),
            curve: None,
            undefined: None,
        };
        if genuine_scores.is_empty() || impostor_scores.is_empty() {
            report.undefined = Some(
                if genuine_scores.is_empty() { "no genuine pairs" } else { "no impostor pairs" }.into(),
            );
        } else {
            let scores = ScoreSet::new(genuine_scores, impostor_scores)?;
            for &t in &config.fmr_targets {
                report.fnmr_at.insert(target_key(t), fnmr_at_fmr(&scores, t)?);
            }
            if config.curve_points >= 2 {
                report.curve = Some(Curve::sample(&scores, config.curve_min_fmr, config.curve_points)?);
            }
        }
        log::debug!("slice {slice}: {} genuine, {} impostor", counts.genuine, counts.impostor);
        slices.push(report);
    }
    Ok(VerificationReport {
        model: matcher.name(),
        face_count: faces.len(),
        pair_rule: PAIR_RULE.into(),
        impostor_sample: config.impostor_sample,
        seed: config.seed,
        slices,
    })
}

/// FNMR of several models at one slice and target, with values normalized
/// to [0.5, 1] where 1 marks the best model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizedEntry {
    pub slice: PairSlice,
    pub target: String,
    pub fnmr: Vec<f64>,
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelComparison {
    pub models: Vec<String>,
    pub entries: Vec<NormalizedEntry>,
}

fn normalize_fnmr(best: f64, this: f64) -> f64 {
    if this <= 0.0 {
        1.0
    } else {
        (0.5 + 0.5 * best / this).clamp(0.5, 1.0)
    }
}

/// Normalizes every slice and target reported by all models.
pub fn compare_models(reports: &[VerificationReport]) -> ModelComparison {
    let mut entries = Vec::new();
    if let Some(first) = reports.first() {
        for slice in &first.slices {
            for target in slice.fnmr_at.keys() {
                let values: Option<Vec<f64>> = reports
                    .iter()
                    .map(|r| {
                        r.slices
                            .iter()
                            .find(|s| s.slice == slice.slice)
                            .and_then(|s| s.fnmr_at.get(target))
                            .map(|op| op.fnmr)
                    })
                    .collect();
                let Some(fnmr) = values else { continue };
                let best = fnmr.iter().copied().fold(f64::INFINITY, f64::min);
                entries.push(NormalizedEntry {
                    slice: slice.slice,
                    target: target.clone(),
                    normalized: fnmr.iter().map(|&v| normalize_fnmr(best, v)).collect(),
                    fnmr,
                });
            }
        }
    }
    ModelComparison {
        models: reports.iter().map(|r| r.model.clone()).collect(),
        entries,
    }
}
