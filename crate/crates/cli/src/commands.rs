use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use castfruits_core::cast::{
    run_cast, CastReport, Embedder, PrecomputedEmbedder, ReferenceEmbedder, StageName,
};
use castfruits_core::fruits::{
    compare_models, measure_pipeline, verify_report, EmbeddingMatcher, ModelComparison, PairScorer,
    PerfectMatcher, Stage, TimingReport, VerificationReport,
};
use castfruits_core::inter::write_log;
use castfruits_core::synth::{generate, score_cleaning, CleaningScores, GroundTruth};
use castfruits_core::{Dataset, EmbeddingMap, EmbeddingMatrix, FaceId, Manifest, ToolConfig};
use serde::{Deserialize, Serialize};

use crate::artifacts::{emit, read_json, write_json, Artifacts, Workdir};

pub struct Ctx {
    pub workdir: Workdir,
    pub config: ToolConfig,
    pub out: Option<PathBuf>,
}

fn load_manifest_and_matrix(manifest: &Path, matrix: &Path) -> Result<(Manifest, EmbeddingMatrix)> {
    let m = Manifest::read(manifest)?;
    let e = EmbeddingMatrix::read(matrix)?;
    m.check_rows(e.len())?;
    Ok((m, e))
}

pub struct SynthOptions {
    pub dir: String,
}

pub fn synth(ctx: &Ctx, opts: &SynthOptions) -> Result<()> {
    let out = generate(&ctx.config.synth)?;
    let dir = ctx.workdir.subdir(&opts.dir)?;
    let rel = |name: &str| dir.join(name);
    let a = Artifacts {
        raw_manifest: Some(rel("raw.jsonl")),
        raw_embeddings: Some(rel("raw.emb")),
        test_manifest: Some(rel("test.jsonl")),
        test_embeddings: Some(rel("test.emb")),
        truth: Some(rel("truth.json")),
        ..Default::default()
    };
    let w = &ctx.workdir;
    out.raw.write(w.resolve(rel("raw.jsonl")))?;
    out.raw_embeddings.write(w.resolve(rel("raw.emb")))?;
    out.test.write(w.resolve(rel("test.jsonl")))?;
    out.test_embeddings.write(w.resolve(rel("test.emb")))?;
    write_json(&out.truth, &w.resolve(rel("truth.json")))?;
    log::info!(
        "synth: {} folders, {} faces, {} test faces",
        out.raw.dataset()?.folders.len(),
        out.raw.len(),
        out.test.len()
    );
    emit(&a, ctx.out.as_deref(), w)
}

pub struct CleanOptions {
    pub input: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub embeddings: Vec<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub test_embeddings: Option<PathBuf>,
    pub dir: String,
}

/// Cleaning quality per iteration and after post-cleaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleaningSummary {
    pub iterations: Vec<CleaningScores>,
    #[serde(rename = "final")]
    pub final_scores: CleaningScores,
}

pub fn clean(ctx: &Ctx, opts: &CleanOptions) -> Result<()> {
    let w = &ctx.workdir;
    let mut a = Artifacts::load(opts.input.as_deref(), w)?;
    if opts.manifest.is_some() {
        a.raw_manifest = opts.manifest.clone();
    }
    if let Some(e) = opts.embeddings.first() {
        a.raw_embeddings = Some(e.clone());
        a.truth = None;
    }
    if opts.test_manifest.is_some() {
        a.test_manifest = opts.test_manifest.clone();
    }
    if opts.test_embeddings.is_some() {
        a.test_embeddings = opts.test_embeddings.clone();
    }

    let raw_path = w.require("raw manifest", &a.raw_manifest)?;
    let raw_emb_path = w.require("raw embeddings", &a.raw_embeddings)?;
    let (raw_manifest, raw_matrix) = load_manifest_and_matrix(&raw_path, &raw_emb_path)?;
    let raw = raw_manifest.dataset()?;

    let test = match (&a.test_manifest, &a.test_embeddings) {
        (Some(m), Some(e)) => Some(load_manifest_and_matrix(&w.resolve(m), &w.resolve(e))?),
        (None, None) => None,
        _ => bail!("test manifest and test embeddings must be given together"),
    };
    let test_dataset = match &test {
        Some((m, _)) => m.dataset()?,
        None => Dataset::default(),
    };
    let test_table: EmbeddingMap = match &test {
        Some((m, e)) => m.embeddings(e)?,
        None => EmbeddingMap::new(),
    };

    let truth: Option<Arc<GroundTruth>> = match &a.truth {
        Some(p) => Some(Arc::new(read_json(&w.resolve(p))?)),
        None => None,
    };
    let teacher: Box<dyn Embedder> = match &truth {
        Some(truth) => {
            let mut appearance = raw_manifest.embeddings(&raw_matrix)?;
            appearance.extend(test_table.clone());
            Box::new(ReferenceEmbedder::new(Arc::new(appearance), truth.clone(), ctx.config.reference)?)
        }
        None => {
            let mut files = opts.embeddings.clone();
            if files.is_empty() {
                files.push(raw_emb_path.clone());
            }
            let tables = files
                .iter()
                .map(|f| {
                    let m = EmbeddingMatrix::read(w.resolve(f))?;
                    let mut t = raw_manifest.embeddings(&m)?;
                    t.extend(test_table.clone());
                    Ok(t)
                })
                .collect::<Result<Vec<_>>>()?;
            Box::new(PrecomputedEmbedder::new(tables)?)
        }
    };

    let outcome = run_cast(&raw, teacher, &test_dataset, &ctx.config.cast)?;
    let dir = w.subdir(&opts.dir)?;
    let rows: HashMap<&FaceId, u64> = raw_manifest
        .records
        .iter()
        .map(|r| (&r.face_id, r.embedding_row))
        .collect();
    let row = |f: &FaceId| rows[f];

    for (i, (d, actions)) in outcome.per_iteration.iter().zip(&outcome.actions).enumerate() {
        let m = dir.join(format!("iteration-{}.jsonl", i + 1));
        Manifest::from_dataset(d, row)?.write(w.resolve(&m))?;
        let l = dir.join(format!("iteration-{}.actions.jsonl", i + 1));
        let file = std::fs::File::create(w.resolve(&l)).with_context(|| format!("creating {}", l.display()))?;
        write_log(actions, std::io::BufWriter::new(file))?;
        a.iteration_manifests.push(m);
        a.iteration_actions.push(l);
    }
    let cleaned = dir.join("cleaned.jsonl");
    Manifest::from_dataset(&outcome.cleaned, row)?.write(w.resolve(&cleaned))?;
    a.cleaned_manifest = Some(cleaned);
    let report = dir.join("report.json");
    write_json(&outcome.report, &w.resolve(&report))?;
    a.cast_report = Some(report);

    if let Some(truth) = &truth {
        let summary = CleaningSummary {
            iterations: outcome
                .per_iteration
                .iter()
                .map(|d| score_cleaning(d, truth))
                .collect::<castfruits_core::Result<_>>()?,
            final_scores: score_cleaning(&outcome.cleaned, truth)?,
        };
        let p = dir.join("scores.json");
        write_json(&summary, &w.resolve(&p))?;
        a.cleaning_scores = Some(p);
    }

    if let Some((m, _)) = &test {
        // records are in canonical order already, so row i is record i
        let ids: Vec<FaceId> = m.records.iter().map(|r| r.face_id.clone()).collect();
        let embs = outcome.final_embedder.embed(&ids)?;
        let matrix = EmbeddingMatrix::from_rows(outcome.final_embedder.dimension(), embs.iter())?;
        let mut records = m.records.clone();
        for (i, r) in records.iter_mut().enumerate() {
            r.embedding_row = i as u64;
        }
        let sm = dir.join("test-student.jsonl");
        let se = dir.join("test-student.emb");
        Manifest::new(records)?.write(w.resolve(&sm))?;
        matrix.write(w.resolve(&se))?;
        a.student_test_manifest = Some(sm);
        a.student_test_embeddings = Some(se);
    }
    emit(&a, ctx.out.as_deref(), w)
}

pub struct EvalOptions {
    pub input: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub test_embeddings: Option<PathBuf>,
    pub matchers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub models: Vec<VerificationReport>,
    pub comparison: ModelComparison,
}

fn embedding_matcher(name: &str, manifest: &Path, matrix: &Path) -> Result<EmbeddingMatcher> {
    let (m, e) = load_manifest_and_matrix(manifest, matrix)?;
    Ok(EmbeddingMatcher {
        name: name.into(),
        table: m.embeddings(&e)?,
    })
}

pub fn eval(ctx: &Ctx, opts: &EvalOptions) -> Result<()> {
    let w = &ctx.workdir;
    let mut a = Artifacts::load(opts.input.as_deref(), w)?;
    if opts.test_manifest.is_some() {
        a.test_manifest = opts.test_manifest.clone();
        a.student_test_manifest = None;
        a.student_test_embeddings = None;
    }
    if opts.test_embeddings.is_some() {
        a.test_embeddings = opts.test_embeddings.clone();
    }
    let test_path = w.require("test manifest", &a.test_manifest)?;
    let faces = Manifest::read(&test_path)?.test_faces()?;

    let matchers: Vec<String> = if opts.matchers.is_empty() {
        vec![if a.student_test_embeddings.is_some() {
            "student".into()
        } else if a.test_embeddings.is_some() {
            "embeddings".into()
        } else {
            "perfect".into()
        }]
    } else {
        opts.matchers.clone()
    };
    let mut scorers: Vec<Box<dyn PairScorer>> = Vec::new();
    for name in &matchers {
        let scorer: Box<dyn PairScorer> = match name.as_str() {
            "perfect" => Box::new(PerfectMatcher),
            "student" => Box::new(embedding_matcher(
                "student",
                &w.require("student test manifest", &a.student_test_manifest)?,
                &w.require("student test embeddings", &a.student_test_embeddings)?,
            )?),
            "embeddings" => Box::new(embedding_matcher(
                "embeddings",
                &test_path,
                &w.require("test embeddings", &a.test_embeddings)?,
            )?),
            other => match other.strip_prefix("file:") {
                Some(p) => Box::new(embedding_matcher(other, &test_path, &w.resolve(p))?),
                None => bail!("unknown matcher `{other}` (expected perfect, student, embeddings or file:PATH)"),
            },
        };
        scorers.push(scorer);
    }
    let models = scorers
        .iter()
        .map(|s| verify_report(s.as_ref(), &faces, &ctx.config.eval).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport {
        comparison: compare_models(&models),
        models,
    };
    emit(&report, ctx.out.as_deref(), w)
}

pub struct BenchOptions {
    pub stages: Vec<String>,
}

fn parse_stage(spec: &str) -> Result<(String, f64)> {
    let (name, ms) = spec
        .rsplit_once(':')
        .ok_or_else(|| anyhow!("stage `{spec}` must look like NAME:MILLISECONDS"))?;
    let ms: f64 = ms.parse().with_context(|| format!("stage `{spec}`: bad duration"))?;
    if !(ms.is_finite() && ms >= 0.0) {
        bail!("stage `{spec}`: duration must be a non-negative number");
    }
    Ok((name.to_string(), ms))
}

/// Times stub stages that sleep for the given durations.
pub fn bench(ctx: &Ctx, opts: &BenchOptions) -> Result<()> {
    let specs = opts
        .stages
        .iter()
        .map(|s| parse_stage(s))
        .collect::<Result<Vec<_>>>()?;
    let mut stages: Vec<Stage<'_>> = specs
        .iter()
        .map(|(name, ms)| {
            let d = Duration::from_secs_f64(ms / 1e3);
            Stage::new(name.clone(), move || {
                std::thread::sleep(d);
                Ok(())
            })
        })
        .collect();
    let report: TimingReport = measure_pipeline(&mut stages, &ctx.config.bench)?;
    emit(&report, ctx.out.as_deref(), &ctx.workdir)
}

pub struct StatsOptions {
    pub input: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsRow {
    /// `None` for post-cleaning stages.
    pub iteration: Option<usize>,
    pub stage: StageName,
    pub identity_count: usize,
    pub face_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsReport {
    pub rows: Vec<StatsRow>,
    pub histogram_overlap: Vec<Option<f64>>,
    pub shape_ok: bool,
    pub violations: Vec<String>,
    pub scores: Option<CleaningSummary>,
}

pub fn stats(ctx: &Ctx, opts: &StatsOptions) -> Result<()> {
    let w = &ctx.workdir;
    let mut a = Artifacts::load(opts.input.as_deref(), w)?;
    if opts.report.is_some() {
        a.cast_report = opts.report.clone();
        a.cleaning_scores = None;
    }
    let report: CastReport = read_json(&w.require("cleaning report", &a.cast_report)?)?;
    let mut rows = Vec::new();
    for it in &report.iterations {
        rows.extend(it.stages.iter().map(|s| StatsRow {
            iteration: Some(it.iteration),
            stage: s.stage,
            identity_count: s.identity_count,
            face_count: s.face_count,
        }));
    }
    rows.extend(report.post.iter().map(|s| StatsRow {
        iteration: None,
        stage: s.stage,
        identity_count: s.identity_count,
        face_count: s.face_count,
    }));
    let violations = report.shape_violations();
    let scores = match &a.cleaning_scores {
        Some(p) => Some(read_json(&w.resolve(p))?),
        None => None,
    };
    let out = StatsReport {
        rows,
        histogram_overlap: report.iterations.iter().map(|i| i.histogram_overlap).collect(),
        shape_ok: violations.is_empty(),
        violations,
        scores,
    };
    emit(&out, ctx.out.as_deref(), w)
}
