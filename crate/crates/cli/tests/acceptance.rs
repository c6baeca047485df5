//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use castfruits_core::cast::{ReferenceConfig, ReferenceEmbedder, StageName, StageStats};
use castfruits_core::fruits::{
    classify_track, enumerate_pairs, fmr, fnmr, fnmr_at_fmr, Attributes, Gender, PairSlice, Race,
    Scenario, ScoreSet, TestFace, Track, VerificationReport,
};
use castfruits_core::intra::{dbscan, IntraCleanConfig};
use castfruits_core::synth::{appearance_map, generate, score_cleaning, SynthConfig};
use castfruits_core::{run_cast, CastConfig, CastReport, Embedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PAIR_BUDGET: Duration = Duration::from_secs(1);
const DBSCAN_BUDGET: Duration = Duration::from_secs(30);
const FNMR_BUDGET: Duration = Duration::from_secs(10);
const CAST_BUDGET: Duration = Duration::from_secs(120);
const MONOTONE_BUDGET: Duration = Duration::from_secs(5);

const MIN_PURITY: f64 = 0.95;
const MIN_MERGE_RECALL: f64 = 0.90;
const MIN_DUP_REMOVAL: f64 = 0.95;
const MIN_FACE_RECALL: f64 = 0.85;

type Verdict = Result<String, String>;

fn within(elapsed: Duration, budget: Duration) -> Result<(), String> {
    if elapsed < budget {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, budget {budget:?}"))
    }
}

// Pair counts

fn face(id: usize, identity: String, gender: Gender) -> TestFace {
    TestFace::new(
        format!("q{id:06}"),
        identity,
        Attributes {
            age: (id % 70) as u32 + 10,
            gender,
            race: Race::ALL[id % 4],
            scenario: if id.is_multiple_of(3) { Scenario::Controlled } else { Scenario::Wild },
        },
    )
}

/// A test set whose gender groups have exactly the requested face and
/// same-identity pair totals.
fn table_faces(groups: &[(Gender, u64, u64)]) -> Vec<TestFace> {
    let mut faces = Vec::new();
    for &(gender, n, genuine) in groups {
        for (k, size) in oracles::identity_sizes(n, genuine, 30).into_iter().enumerate() {
            let identity = format!("{}-{k:05}", gender.as_str());
            for _ in 0..size {
                let id = faces.len();
                faces.push(face(id, identity.clone(), gender));
            }
        }
    }
    faces
}

fn pair_identity() -> Verdict {
    const MALE: (Gender, u64, u64) = (Gender::Male, 22_846, 234_296);
    const FEMALE: (Gender, u64, u64) = (Gender::Female, 15_732, 193_463);
    let rows: [(PairSlice, u64, u64, u64); 3] = [
        (PairSlice::All, 38_578, 427_759, 743_683_994),
        (PairSlice::Gender(Gender::Male), MALE.1, MALE.2, 260_724_139),
        (PairSlice::Gender(Gender::Female), FEMALE.1, FEMALE.2, 123_546_583),
    ];
    let faces = table_faces(&[MALE, FEMALE]);

    let start = Instant::now();
    let mut counted = Vec::new();
    for (slice, ..) in rows {
        let e = enumerate_pairs(&faces, slice).map_err(|e| e.to_string())?;
        counted.push((e.faces().len() as u64, e.counts()));
    }
    let elapsed = start.elapsed();

    for ((slice, n, genuine, impostor), (got_n, c)) in rows.iter().zip(&counted) {
        let identity = oracles::choose2(*n as u128) - *genuine as u128;
        if identity != *impostor as u128 {
            return Err(format!("{slice}: C(n,2) - genuine = {identity}, expected {impostor}"));
        }
        if (*got_n, c.genuine, c.impostor) != (*n, *genuine, *impostor) {
            return Err(format!(
                "{slice}: counted {got_n} faces, {} genuine, {} impostor; want {n}, {genuine}, {impostor}",
                c.genuine, c.impostor
            ));
        }
    }
    within(elapsed, PAIR_BUDGET)?;
    Ok(format!("all/male/female rows exact, counted in {elapsed:.2?}"))
}

// DBSCAN

fn dbscan_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let dims = [2usize, 16, 512];
    let instances = 120;
    let start = Instant::now();
    let mut points_total = 0;
    for case in 0..instances {
        let dim = dims[case % dims.len()];
        let n = rng.random_range(1..=500);
        let eps = rng.random_range(0.02..0.6);
        let min_pts = rng.random_range(1..=6);
        let points = oracles::clustered_points(&mut rng, n, dim);
        let embs: Vec<Embedding> = points
            .iter()
            .map(|p| Embedding::from_unit(p.clone()).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        let refs: Vec<&Embedding> = embs.iter().collect();
        let config = IntraCleanConfig {
            eps,
            min_pts,
            ..Default::default()
        };
        let got = dbscan(&refs, &config).map_err(|e| e.to_string())?.canonical();
        let want = oracles::canonical(&oracles::naive_dbscan(&points, eps, min_pts));
        if got != want {
            return Err(format!("instance {case} (n={n}, D={dim}, eps={eps}, min_pts={min_pts}) differs"));
        }
        points_total += n;
    }
    let elapsed = start.elapsed();
    within(elapsed, DBSCAN_BUDGET)?;
    Ok(format!("{instances} instances, {points_total} points, in {elapsed:.2?}"))
}

// FNMR at FMR

/// Scores drawn from a small grid so ties are frequent, or from a continuum.
fn random_scores(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<f64> {
    let grid = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0) + shift;
            if grid {
                (x * 20.0).round() / 20.0
            } else {
                x
            }
        })
        .collect()
}

fn fnmr_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sets = 150;
    let start = Instant::now();
    let mut exhaustive_checked = 0;
    for case in 0..sets {
        let total = rng.random_range(2..=10_000);
        let g = rng.random_range(1..total);
        let shift = rng.random_range(0.0..0.8);
        let genuine = random_scores(&mut rng, g, shift);
        let impostor = random_scores(&mut rng, total - g, 0.0);
        let scores = ScoreSet::new(genuine.clone(), impostor.clone()).map_err(|e| e.to_string())?;
        let m = impostor.len() as f64;
        let mut targets = vec![1.0, 0.5, 0.1, 1e-2, 1e-3, 1e-4, 1e-5];
        targets.extend([1.0 / m, 0.5 / m, 2.0 / m].into_iter().filter(|t| *t <= 1.0));
        targets.push(rng.random_range(1e-6..1.0));
        let exhaustive = total <= 3_000;
        for t in targets {
            let op = fnmr_at_fmr(&scores, t).map_err(|e| e.to_string())?;
            let got = (op.threshold, op.fnmr);
            let want = oracles::sweep_fnmr_at_fmr(&genuine, &impostor, t);
            if got != want {
                return Err(format!("set {case} target {t}: got {got:?}, sweep {want:?}"));
            }
            if exhaustive {
                let brute = oracles::exhaustive_fnmr_at_fmr(&genuine, &impostor, t);
                if got != brute {
                    return Err(format!("set {case} target {t}: got {got:?}, exhaustive {brute:?}"));
                }
            }
        }
        exhaustive_checked += exhaustive as usize;
    }
    let elapsed = start.elapsed();
    within(elapsed, FNMR_BUDGET)?;
    Ok(format!(
        "{sets} sets ({exhaustive_checked} also by quadratic scan) in {elapsed:.2?}"
    ))
}

// CAST

/// Stage-count ordering, recomputed from the emitted stage counts.
fn check_shape(report: &CastReport) -> Result<(), String> {
    let le = |a: &StageStats, b: &StageStats| a.face_count <= b.face_count && a.identity_count <= b.identity_count;
    let find = |stages: &[StageStats], name: StageName| -> Result<StageStats, String> {
        stages
            .iter()
            .find(|s| s.stage == name)
            .copied()
            .ok_or_else(|| format!("missing {name:?} stage"))
    };
    if report.iterations.is_empty() {
        return Err("no iterations".into());
    }
    for it in &report.iterations {
        let raw = find(&it.stages, StageName::Raw)?;
        let intra = find(&it.stages, StageName::Intra)?;
        let inter = find(&it.stages, StageName::Inter)?;
        if !(le(&intra, &raw) && le(&inter, &intra)) {
            return Err(format!("iteration {}: {raw:?} {intra:?} {inter:?}", it.iteration));
        }
    }
    let last = find(&report.iterations.last().unwrap().stages, StageName::Inter)?;
    if report.post.is_empty() {
        return Err("no post-clean stages".into());
    }
    let mut prev = last;
    for p in &report.post {
        if !le(p, &last) || !le(p, &prev) {
            return Err(format!("post stage {p:?} exceeds {prev:?}"));
        }
        prev = *p;
    }
    Ok(())
}

struct CastRun {
    report: CastReport,
    summary: String,
    failures: Vec<String>,
    elapsed: Duration,
}

fn cast_run() -> Result<CastRun, String> {
    let start = Instant::now();
    let out = generate(&SynthConfig {
        identity_count: 952,
        dimension: 512,
        outlier_rate: 0.30,
        overlap_rate: 0.05,
        duplicate_rate: 0.02,
        seed: 7,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let raw = out.raw.dataset().map_err(|e| e.to_string())?;
    let test = out.test.dataset().map_err(|e| e.to_string())?;
    let teacher = ReferenceEmbedder::new(
        Arc::new(appearance_map(&out).map_err(|e| e.to_string())?),
        Arc::new(out.truth.clone()),
        ReferenceConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let config = CastConfig {
        iterations: 3,
        seed: 7,
        ..Default::default()
    };
    let outcome = run_cast(&raw, Box::new(teacher), &test, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let s = score_cleaning(&outcome.cleaned, &out.truth).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    let mut parts = vec![format!("{} folders", raw.folders.len())];
    for (name, value, floor) in [
        ("purity", s.purity, MIN_PURITY),
        ("merge_recall", s.merge_recall, MIN_MERGE_RECALL),
        ("dup_removal", s.dup_removal_rate, MIN_DUP_REMOVAL),
        ("face_recall", s.face_recall, MIN_FACE_RECALL),
    ] {
        match value {
            Some(v) => {
                parts.push(format!("{name}={v:.4}"));
                if v < floor {
                    failures.push(format!("{name} {v:.4} < {floor}"));
                }
            }
            None => failures.push(format!("{name} undefined")),
        }
    }
    if raw.folders.len() != 1000 {
        failures.push(format!("expected 1000 folders, got {}", raw.folders.len()));
    }
    parts.push(format!("{elapsed:.2?}"));
    if let Err(e) = within(elapsed, CAST_BUDGET) {
        failures.push(e);
    }
    Ok(CastRun {
        report: outcome.report,
        summary: parts.join(", "),
        failures,
        elapsed,
    })
}

fn cast_recovery(run: &Result<CastRun, String>) -> Verdict {
    let run = run.as_ref().map_err(Clone::clone)?;
    if run.failures.is_empty() {
        Ok(run.summary.clone())
    } else {
        Err(format!("{}; {}", run.failures.join("; "), run.summary))
    }
}

fn overlap_decreasing(run: &Result<CastRun, String>) -> Verdict {
    let run = run.as_ref().map_err(Clone::clone)?;
    let overlaps: Vec<Option<f64>> = run.report.iterations.iter().map(|it| it.histogram_overlap).collect();
    let shown = format!("{overlaps:?}");
    if overlaps.len() != 3 {
        return Err(format!("expected 3 iterations, got {shown}"));
    }
    let values: Vec<f64> = overlaps.iter().map(|o| o.ok_or("undefined overlap")).collect::<Result<_, _>>()?;
    if values.windows(2).all(|w| w[1] < w[0]) {
        Ok(format!("overlap {shown}"))
    } else {
        Err(format!("overlap not strictly decreasing: {shown}"))
    }
}

fn small_cast_reports() -> Result<Vec<(String, CastReport)>, String> {
    let mut reports = Vec::new();
    for (seed, identities, iterations, eps) in [(1u64, 40, 1, 0.3), (2, 60, 2, 0.2), (3, 80, 3, 0.4), (4, 30, 4, 0.3)] {
        let out = generate(&SynthConfig {
            identity_count: identities,
            dimension: 64,
            test_identity_count: 10,
            seed,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let teacher = ReferenceEmbedder::new(
            Arc::new(appearance_map(&out).map_err(|e| e.to_string())?),
            Arc::new(out.truth.clone()),
            ReferenceConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let mut config = CastConfig {
            iterations,
            seed,
            ..Default::default()
        };
        config.intra.eps = eps;
        let raw = out.raw.dataset().map_err(|e| e.to_string())?;
        let test = out.test.dataset().map_err(|e| e.to_string())?;
        let outcome = run_cast(&raw, Box::new(teacher), &test, &config).map_err(|e| e.to_string())?;
        reports.push((format!("seed {seed}"), outcome.report));
    }
    Ok(reports)
}

fn shape(run: &Result<CastRun, String>, cli: &Result<CliRuns, String>) -> Verdict {
    let mut reports: Vec<(String, CastReport)> = Vec::new();
    let run = run.as_ref().map_err(Clone::clone)?;
    reports.push(("large run".into(), run.report.clone()));
    reports.extend(small_cast_reports()?);
    let cli = cli.as_ref().map_err(Clone::clone)?;
    for (k, r) in cli.cast_reports.iter().enumerate() {
        reports.push((format!("cli run {}", k + 1), r.clone()));
    }
    for (name, r) in &reports {
        check_shape(r).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{} pipeline runs", reports.len()))
}

// Monotonicity

fn monotonicity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    let sets = 1_000;
    let start = Instant::now();
    for case in 0..sets {
        let g = rng.random_range(1..200);
        let m = rng.random_range(1..200);
        let genuine = random_scores(&mut rng, g, 0.3);
        let impostor = random_scores(&mut rng, m, 0.0);
        let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
        thresholds.extend((0..20).map(|_| rng.random_range(-1.5..1.5)));
        thresholds.extend([f64::NEG_INFINITY, f64::INFINITY]);
        thresholds.sort_by(f64::total_cmp);
        let mut prev: Option<(f64, f64)> = None;
        for &t in &thresholds {
            let a = fmr(&impostor, t).map_err(|e| e.to_string())?;
            let r = fnmr(&genuine, t).map_err(|e| e.to_string())?;
            if let Some((pa, pr)) = prev {
                if a > pa || r < pr {
                    return Err(format!("set {case} at {t}: fmr {pa}->{a}, fnmr {pr}->{r}"));
                }
            }
            prev = Some((a, r));
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, MONOTONE_BUDGET)?;
    Ok(format!("{sets} score sets in {elapsed:.2?}"))
}

// Tracks

fn tracks() -> Verdict {
    let cases = [
        (97.0, Track::Fruits100),
        (481.0, Track::Fruits500),
        (892.0, Track::Fruits1000),
        (1300.0, Track::OverBudget),
    ];
    for (ms, want) in cases {
        let got = classify_track(ms).map_err(|e| e.to_string())?.track;
        if got != want {
            return Err(format!("{ms} ms -> {got:?}, want {want:?}"));
        }
    }
    Ok("97/481/892/1300 ms classified".into())
}

// Determinism through the binary

struct CliRuns {
    cast_reports: Vec<CastReport>,
    identical: Result<String, String>,
}

fn run_step(dir: &Path, threads: &str, args: &[&str], stdin: &[u8]) -> Result<Vec<u8>, String> {
    let mut child = Command::new(env!("CARGO_BIN_EXE_castfruits"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .env("CAST_FRUITS_THREADS", threads)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    child.stdin.take().unwrap().write_all(stdin).map_err(|e| e.to_string())?;
    let out = child.wait_with_output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(out.stdout)
}

/// Every byte the pipeline emits: the three stdout streams and the report
/// files the descriptors point at.
type Artifacts = Vec<(String, Vec<u8>)>;

fn pipeline(threads: &str) -> Result<(Artifacts, CastReport), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let synth = run_step(dir, threads, &["--seed", "11", "synth", "--identities", "150", "--dimension", "128"], b"")?;
    let clean = run_step(dir, threads, &["--seed", "11", "clean"], &synth)?;
    let eval = run_step(dir, threads, &["--seed", "11", "eval"], &clean)?;
    let mut outputs = vec![
        ("synth stdout".to_string(), synth),
        ("clean stdout".to_string(), clean),
        ("eval stdout".to_string(), eval.clone()),
    ];
    for file in ["clean/report.json", "clean/scores.json", "clean/cleaned.jsonl", "clean/test-student.emb"] {
        let bytes = std::fs::read(dir.join(file)).map_err(|e| format!("{file}: {e}"))?;
        outputs.push((file.to_string(), bytes));
    }
    let report: CastReport =
        serde_json::from_slice(&outputs[3].1).map_err(|e| format!("report.json schema: {e}"))?;
    let eval_json: serde_json::Value = serde_json::from_slice(&eval).map_err(|e| e.to_string())?;
    let models = eval_json["models"].as_array().ok_or("eval report without models")?;
    for m in models {
        serde_json::from_value::<VerificationReport>(m.clone()).map_err(|e| format!("eval schema: {e}"))?;
    }
    Ok((outputs, report))
}

fn cli_runs() -> Result<CliRuns, String> {
    let (first, r1) = pipeline("4")?;
    let (second, r2) = pipeline("4")?;
    let (third, r3) = pipeline("1")?;
    let compare = |a: &Artifacts, b: &Artifacts, what: &str| -> Result<(), String> {
        for ((name, x), (_, y)) in a.iter().zip(b) {
            if x != y {
                return Err(format!("{name} differs between {what}"));
            }
        }
        Ok(())
    };
    let identical = compare(&first, &second, "two identical runs")
        .and_then(|_| compare(&first, &third, "4 and 1 threads"))
        .map(|_| {
            let bytes: usize = first.iter().map(|(_, b)| b.len()).sum();
            format!("{} artifacts, {bytes} bytes identical over 3 runs (4, 4, 1 threads)", first.len())
        });
    Ok(CliRuns {
        cast_reports: vec![r1, r2, r3],
        identical,
    })
}

fn determinism(cli: &Result<CliRuns, String>) -> Verdict {
    cli.as_ref().map_err(Clone::clone)?.identical.clone()
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(match p.downcast_ref::<String>() {
            Some(s) => format!("panicked: {s}"),
            None => match p.downcast_ref::<&str>() {
                Some(s) => format!("panicked: {s}"),
                None => "panicked".into(),
            },
        }),
    }
}

fn main() {
    let total = Instant::now();
    let mut results: Vec<(u8, &str, Verdict, Duration)> = Vec::new();
    let mut record = |id: u8, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let verdict = guarded(f);
        let elapsed = start.elapsed();
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} [{id}] {name}: {detail} ({elapsed:.2?})");
        results.push((id, name, verdict, elapsed));
    };

    record(1, "pair-count identity", &mut pair_identity);
    record(2, "dbscan oracle equivalence", &mut dbscan_equivalence);
    record(3, "fnmr@fmr oracle equivalence", &mut fnmr_equivalence);
    let cast = guarded(cast_run);
    if let Ok(run) = &cast {
        println!("     cast run finished in {:.2?}", run.elapsed);
    }
    record(4, "cast recovery", &mut || cast_recovery(&cast));
    record(5, "histogram overlap decreasing", &mut || overlap_decreasing(&cast));
    let cli = guarded(cli_runs);
    record(6, "stage count shape", &mut || shape(&cast, &cli));
    record(7, "metric monotonicity", &mut monotonicity);
    record(8, "track classification", &mut tracks);
    record(9, "pipeline determinism", &mut || determinism(&cli));

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.2?}",
        results.len() - failed,
        total.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
