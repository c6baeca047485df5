//! Embedding-space cleaning of noisy face datasets and verification
//! evaluation under inference-time budgets.
//!
//! The cleaning loop ([`cast::run_cast`]) alternates per-folder DBSCAN
//! ([`intra`]), cross-folder centroid merging ([`inter`]) and re-fitting of
//! the embedder, then purifies the result ([`post`]). The evaluation side
//! ([`fruits`]) enumerates attribute-sliced verification pairs, computes
//! FNMR at fixed FMR and classifies pipelines into latency tracks.

pub mod cast;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod embfile;
pub mod error;
pub mod fruits;
pub mod inter;
pub mod intra;
pub mod manifest;
pub mod post;
pub mod synth;

pub use cast::{run_cast, CastConfig, CastOutcome, CastReport, Embedder, StageName, StageStats};
pub use config::ToolConfig;
pub use dataset::{Dataset, EmbeddingMap, FaceId, Folder, SubjectId};
pub use embedding::{centroid, cosine, normalize, Centroid, Embedding, Similarity};
pub use embfile::EmbeddingMatrix;
pub use error::{Error, Result};
pub use inter::{InterAction, InterCleanConfig};
pub use intra::IntraCleanConfig;
pub use manifest::{Manifest, ManifestRecord};
pub use post::PostCleanConfig;
pub use synth::{GroundTruth, SynthConfig};
