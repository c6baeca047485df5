//! FMR, FNMR and FNMR at a target FMR.
//!
//! FMR counts impostor scores at or above the threshold, FNMR counts genuine
//! scores strictly below it. Candidate thresholds are the distinct observed
//! scores plus `+inf`, which is reported as `threshold: None`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_scores(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Fraction of impostor scores `>= t`.
pub fn fmr(impostor: &[f64], t: f64) -> Result<f64> {
    check_scores(impostor, "impostor scores")?;
    let accepted = impostor.iter().filter(|&&s| s >= t).count();
    Ok(accepted as f64 / impostor.len() as f64)
}

/// Fraction of genuine scores `< t`.
pub fn fnmr(genuine: &[f64], t: f64) -> Result<f64> {
    check_scores(genuine, "genuine scores")?;
    let rejected = genuine.iter().filter(|&&s| s < t).count();
    Ok(rejected as f64 / genuine.len() as f64)
}

/// Genuine and impostor scores, each sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(mut genuine: Vec<f64>, mut impostor: Vec<f64>) -> Result<Self> {
        check_scores(&genuine, "genuine scores")?;
        check_scores(&impostor, "impostor scores")?;
        genuine.sort_by(f64::total_cmp);
        impostor.sort_by(f64::total_cmp);
        Ok(ScoreSet { genuine, impostor })
    }

    pub fn genuine(&self) -> &[f64] {
        &self.genuine
    }

    pub fn impostor(&self) -> &[f64] {
        &self.impostor
    }

    fn fmr_at(&self, t: f64) -> f64 {
        let below = self.impostor.partition_point(|&s| s < t);
        (self.impostor.len() - below) as f64 / self.impostor.len() as f64
    }

    fn fnmr_at(&self, t: f64) -> f64 {
        self.genuine.partition_point(|&s| s < t) as f64 / self.genuine.len() as f64
    }

    /// Distinct scores of both kinds, ascending.
    pub fn candidates(&self) -> Vec<f64> {
        let mut all = Vec::with_capacity(self.genuine.len() + self.impostor.len());
        let (mut i, mut j) = (0, 0);
        while i < self.genuine.len() || j < self.impostor.len() {
            let take_genuine =
                j == self.impostor.len() || (i < self.genuine.len() && self.genuine[i] <= self.impostor[j]);
            let next = if take_genuine {
                i += 1;
                self.genuine[i - 1]
            } else {
                j += 1;
                self.impostor[j - 1]
            };
            if all.last() != Some(&next) {
                all.push(next);
            }
        }
        all
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// `None` stands for `+inf`: nothing is accepted.
    pub threshold: Option<f64>,
    pub fmr: f64,
    pub fnmr: f64,
}

/// The smallest candidate threshold whose FMR does not exceed `target`.
pub fn fnmr_at_fmr(scores: &ScoreSet, target: f64) -> Result<OperatingPoint> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidConfig(format!("target FMR must lie in (0, 1], got {target}")));
    }
    let candidates = scores.candidates();
    // FMR is non-increasing in the threshold
    let first = candidates.partition_point(|&t| scores.fmr_at(t) > target);
    Ok(match candidates.get(first) {
        Some(&t) => OperatingPoint {
            threshold: Some(t),
            fmr: scores.fmr_at(t),
            fnmr: scores.fnmr_at(t),
        },
        None => OperatingPoint {
            threshold: None,
            fmr: 0.0,
            fnmr: 1.0,
        },
    })
}

/// FMR-FNMR trade-off sampled at log-spaced FMR targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub target_fmr: Vec<f64>,
    pub fmr: Vec<f64>,
    pub fnmr: Vec<f64>,
    pub threshold: Vec<Option<f64>>,
}

impl Curve {
    /// `points` targets spaced evenly in log10 from `min_fmr` to 1.
    pub fn sample(scores: &ScoreSet, min_fmr: f64, points: usize) -> Result<Self> {
        if !(min_fmr > 0.0 && min_fmr < 1.0) || points < 2 {
            return Err(Error::InvalidConfig(
                "curve needs min_fmr in (0, 1) and at least 2 points".into(),
            ));
        }
        let lo = min_fmr.log10();
        let mut curve = Curve {
            target_fmr: Vec::with_capacity(points),
            fmr: Vec::with_capacity(points),
            fnmr: Vec::with_capacity(points),
            threshold: Vec::with_capacity(points),
        };
        for k in 0..points {
            let target = 10f64.powf(lo - lo * k as f64 / (points - 1) as f64).min(1.0);
            let op = fnmr_at_fmr(scores, target)?;
            curve.target_fmr.push(target);
            curve.fmr.push(op.fmr);
            curve.fnmr.push(op.fnmr);
            curve.threshold.push(op.threshold);
        }
        Ok(curve)
    }
}
