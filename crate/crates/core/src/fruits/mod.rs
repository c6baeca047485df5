//! Verification evaluation under inference-time budgets: attribute-sliced
//! pair enumeration, FNMR at fixed FMR, and latency tracks.

mod face;
pub mod metrics;
pub mod pairs;
pub mod report;
pub mod timing;

pub use face::{Attributes, Gender, Race, Scenario, TestFace};
pub use metrics::{fmr, fnmr, fnmr_at_fmr, Curve, OperatingPoint, ScoreSet};
pub use pairs::{enumerate_pairs, impostor_count_all, pairs_total, Pair, PairCounts, PairEnumeration, PairSlice};
pub use report::{
    compare_models, verify_report, EmbeddingMatcher, ModelComparison, PairScorer, PerfectMatcher,
    SliceReport, VerificationReport, VerifyConfig,
};
pub use timing::{classify_track, measure_pipeline, Stage, StageTiming, TimingConfig, TimingReport, Track, TrackBudget};
