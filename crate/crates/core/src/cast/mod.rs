//! The iterative self-training cleaning loop.
//!
//! Every iteration re-embeds the original raw dataset with the current
//! teacher, cleans it within and across folders, and fits the next teacher
//! on the result. Post-cleaning runs once, after the last iteration, with
//! the final student.

mod histogram;
mod reference;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use histogram::{histogram_overlap, similarity_histograms, SimilarityHistograms, DEFAULT_BINS};
pub use reference::{PrecomputedEmbedder, ReferenceConfig, ReferenceEmbedder};

use crate::dataset::{Dataset, EmbeddingMap, FaceId, Folder};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::inter::{resolve_folders, ActionKind, InterAction, InterCleanConfig};
use crate::intra::{clean_folder, Dbscan, IntraCleanConfig};
use crate::post::{post_clean, PostCleanConfig};

/// A face embedding model of one generation.
pub trait Embedder: Send + Sync {
    fn name(&self) -> String;
    fn dimension(&self) -> usize;
    fn generation(&self) -> usize;
    /// One embedding per face, in order. Deterministic for a generation.
    fn embed(&self, faces: &[FaceId]) -> Result<Vec<Embedding>>;
    /// The next-generation model trained on `cleaned`.
    fn fit(&self, cleaned: &Dataset) -> Result<Box<dyn Embedder>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CastConfig {
    pub iterations: usize,
    pub intra: IntraCleanConfig,
    pub inter: InterCleanConfig,
    pub post: PostCleanConfig,
    pub histogram_bins: usize,
    /// Folders sampled for histograms; all when unset.
    pub histogram_sample: Option<usize>,
    pub seed: u64,
}

impl Default for CastConfig {
    fn default() -> Self {
        CastConfig {
            iterations: 3,
            intra: IntraCleanConfig::default(),
            inter: InterCleanConfig::default(),
            post: PostCleanConfig::default(),
            histogram_bins: DEFAULT_BINS,
            histogram_sample: None,
            seed: 0,
        }
    }
}

impl CastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("cast.iterations must be >= 1".into()));
        }
        if self.histogram_bins < 1 {
            return Err(Error::InvalidConfig("cast.histogram_bins must be >= 1".into()));
        }
        if self.histogram_sample == Some(0) {
            return Err(Error::InvalidConfig("cast.histogram_sample must be >= 1".into()));
        }
        self.intra.validate()?;
        self.inter.validate()?;
        self.post.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageName {
    Raw,
    Intra,
    Inter,
    Deduplicated,
    OverlapRemoved,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageStats {
    pub stage: StageName,
    pub identity_count: usize,
    pub face_count: usize,
}

impl StageStats {
    pub fn of(stage: StageName, dataset: &Dataset) -> Self {
        StageStats {
            stage,
            identity_count: dataset.folders.iter().filter(|f| !f.is_empty()).count(),
            face_count: dataset.face_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationReport {
    pub iteration: usize,
    pub teacher: String,
    pub stages: Vec<StageStats>,
    pub merges: usize,
    pub deletions: usize,
    pub histograms: SimilarityHistograms,
    /// `None` when either histogram is empty.
    pub histogram_overlap: Option<f64>,
}

impl IterationReport {
    pub fn stage(&self, name: StageName) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CastReport {
    pub iterations: Vec<IterationReport>,
    pub post: Vec<StageStats>,
    pub final_embedder: String,
    pub test_identities: usize,
}

impl CastReport {
    /// Broken count orderings: within each iteration inter <= intra <= raw,
    /// and every post stage <= the last iteration's inter stage.
    pub fn shape_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let check = |out: &mut Vec<String>, what: String, small: Option<&StageStats>, big: Option<&StageStats>| {
            match (small, big) {
                (Some(s), Some(b)) if s.face_count <= b.face_count && s.identity_count <= b.identity_count => {}
                (Some(s), Some(b)) => out.push(format!(
                    "{what}: {:?} ({} ids, {} faces) exceeds {:?} ({} ids, {} faces)",
                    s.stage, s.identity_count, s.face_count, b.stage, b.identity_count, b.face_count
                )),
                _ => out.push(format!("{what}: missing stage")),
            }
        };
        for it in &self.iterations {
            let raw = it.stage(StageName::Raw);
            let intra = it.stage(StageName::Intra);
            let inter = it.stage(StageName::Inter);
            check(&mut out, format!("iteration {}", it.iteration), intra, raw);
            check(&mut out, format!("iteration {}", it.iteration), inter, intra);
        }
        let last = self.iterations.last().and_then(|it| it.stage(StageName::Inter));
        for p in &self.post {
            check(&mut out, "post".into(), Some(p), last);
        }
        out
    }
}

pub struct CastOutcome {
    pub report: CastReport,
    /// The post-cleaned dataset.
    pub cleaned: Dataset,
    /// Inter-clean output of every iteration.
    pub per_iteration: Vec<Dataset>,
    pub actions: Vec<Vec<InterAction>>,
    pub final_embedder: Box<dyn Embedder>,
}

impl std::fmt::Debug for CastOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CastOutcome")
            .field("report", &self.report)
            .field("final_embedder", &self.final_embedder.name())
            .finish_non_exhaustive()
    }
}

/// Embeds every face of `dataset`, parallel over folders.
pub fn embed_dataset(embedder: &dyn Embedder, dataset: &Dataset) -> Result<EmbeddingMap> {
    let dim = embedder.dimension();
    let parts: Vec<Vec<(FaceId, Embedding)>> = dataset
        .folders
        .par_iter()
        .map(|f| {
            let embs = embedder.embed(&f.faces)?;
            if embs.len() != f.faces.len() {
                return Err(Error::Embedder(format!(
                    "returned {} embeddings for {} faces of `{}`",
                    embs.len(),
                    f.faces.len(),
                    f.subject_id
                )));
            }
            if let Some(e) = embs.iter().find(|e| e.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: e.dim(),
                });
            }
            Ok(f.faces.iter().cloned().zip(embs).collect())
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

struct IterationResult {
    report: IterationReport,
    cleaned: Dataset,
    actions: Vec<InterAction>,
}

fn run_iteration(
    iteration: usize,
    raw: &Dataset,
    teacher: &dyn Embedder,
    config: &CastConfig,
) -> Result<IterationResult> {
    let embeddings = embed_dataset(teacher, raw)?;
    let dbscan = Dbscan::new(&config.intra);
    let intra: Vec<Folder> = raw
        .folders
        .par_iter()
        .filter(|f| !f.is_empty())
        .map(|f| clean_folder(f, &embeddings, &dbscan, &config.intra))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|f| !f.is_empty())
        .collect();
    let intra = Dataset::new(intra);
    if intra.face_count() == 0 {
        return Err(Error::PipelineCollapsed(iteration));
    }
    let (inter, actions) = resolve_folders(&intra.folders, &embeddings, &config.inter)?;
    let cleaned = Dataset::new(inter);
    if cleaned.face_count() == 0 {
        return Err(Error::PipelineCollapsed(iteration));
    }

    let sample = config
        .histogram_sample
        .unwrap_or(usize::MAX)
        .min(cleaned.folders.len());
    let histograms = similarity_histograms(&cleaned, &embeddings, sample, config.histogram_bins, config.seed)?;
    let overlap = histogram_overlap(&histograms).ok();
    let stages = vec![
        StageStats::of(StageName::Raw, raw),
        StageStats::of(StageName::Intra, &intra),
        StageStats::of(StageName::Inter, &cleaned),
    ];
    log::info!(
        "iteration {iteration}: raw {} / intra {} / inter {} faces, overlap {:?}",
        stages[0].face_count,
        stages[1].face_count,
        stages[2].face_count,
        overlap
    );
    Ok(IterationResult {
        report: IterationReport {
            iteration,
            teacher: teacher.name(),
            stages,
            merges: actions.iter().filter(|a| a.kind == ActionKind::Merge).count(),
            deletions: actions.iter().filter(|a| a.kind == ActionKind::Delete).count(),
            histograms,
            histogram_overlap: overlap,
        },
        cleaned,
        actions,
    })
}

/// Runs the full loop. `test_identities` groups evaluation faces by
/// identity, one folder each, for overlap removal; it may be empty.
pub fn run_cast(
    raw: &Dataset,
    teacher: Box<dyn Embedder>,
    test_identities: &Dataset,
    config: &CastConfig,
) -> Result<CastOutcome> {
    config.validate()?;
    if raw.face_count() == 0 {
        return Err(Error::EmptyInput("raw dataset"));
    }
    let dim = teacher.dimension();
    let mut teacher = teacher;
    let mut iterations = Vec::with_capacity(config.iterations);
    let mut per_iteration = Vec::with_capacity(config.iterations);
    let mut actions = Vec::with_capacity(config.iterations);
    for iteration in 1..=config.iterations {
        let result = run_iteration(iteration, raw, teacher.as_ref(), config).map_err(|e| match e {
            Error::PipelineCollapsed(_) => e,
            other => other.in_iteration(iteration),
        })?;
        let student = teacher
            .fit(&result.cleaned)
            .map_err(|e| e.in_iteration(iteration))?;
        if student.dimension() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: student.dimension(),
            }
            .in_iteration(iteration));
        }
        teacher = student;
        iterations.push(result.report);
        per_iteration.push(result.cleaned);
        actions.push(result.actions);
    }

    let last = per_iteration.last().expect("iterations >= 1");
    let mut embeddings = embed_dataset(teacher.as_ref(), last)?;
    let test_embeddings = embed_dataset(teacher.as_ref(), test_identities)?;
    let test_centroids: Vec<Embedding> = test_identities
        .folders
        .iter()
        .filter(|f| !f.is_empty())
        .map(|f| f.centroid(&test_embeddings))
        .collect::<Result<_>>()?;
    embeddings.extend(test_embeddings);
    let post = post_clean(last, &embeddings, &test_centroids, &config.post)?;
    let post_stats = vec![
        StageStats::of(StageName::Deduplicated, &post.deduplicated),
        StageStats::of(StageName::OverlapRemoved, &post.overlap_removed),
        StageStats::of(StageName::Final, &post.final_dataset),
    ];
    log::info!(
        "post-clean: {} identities, {} faces",
        post_stats[2].identity_count,
        post_stats[2].face_count
    );
    Ok(CastOutcome {
        report: CastReport {
            iterations,
            post: post_stats,
            final_embedder: teacher.name(),
            test_identities: test_centroids.len(),
        },
        cleaned: post.final_dataset,
        per_iteration,
        actions,
        final_embedder: teacher,
    })
}
