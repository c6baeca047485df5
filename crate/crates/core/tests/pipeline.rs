mod oracles;

use std::sync::Arc;

use castfruits_core::cast::{
    histogram_overlap, run_cast, similarity_histograms, CastConfig, ReferenceConfig, ReferenceEmbedder, StageName,
};
use castfruits_core::inter::{read_log, replay, write_log};
use castfruits_core::intra::clean_folder;
use castfruits_core::intra::{Dbscan, IntraCleanConfig};
use castfruits_core::synth::{appearance_map, generate, score_cleaning, FaceRange, SynthConfig};
use castfruits_core::{Dataset, EmbeddingMap, EmbeddingMatrix, FaceId, Folder, Manifest};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        identity_count: 80,
        dimension: 128,
        test_identity_count: 10,
        seed,
        ..Default::default()
    }
}

#[test]
fn histogram_totals_equal_pair_counts() {
    let out = generate(&SynthConfig {
        identity_count: 100,
        faces_per_identity: FaceRange { min: 1, max: 12 },
        dimension: 32,
        overlap_rate: 0.0,
        seed: 60,
        ..Default::default()
    })
    .unwrap();
    let ds = out.raw.dataset().unwrap();
    let table = out.raw.embeddings(&out.raw_embeddings).unwrap();
    assert_eq!(ds.folders.len(), 100);
    let h = similarity_histograms(&ds, &table, 100, 200, 1).unwrap();
    let intra: u128 = ds.folders.iter().map(|f| oracles::choose2(f.len() as u128)).sum();
    assert_eq!(h.intra_total() as u128, intra);
    assert_eq!(h.inter_total() as u128, oracles::choose2(100));
    assert_eq!(h.bin_edges.len(), 201);

    // every brute-force similarity lands in the bin the histogram used
    let mut want = vec![0u64; 200];
    for f in &ds.folders {
        for i in 0..f.len() {
            for j in (i + 1)..f.len() {
                let s = oracles::dot(table[&f.faces[i]].as_slice(), table[&f.faces[j]].as_slice()).clamp(-1.0, 1.0);
                want[(((s + 1.0) / 2.0 * 200.0).floor() as usize).min(199)] += 1;
            }
        }
    }
    assert_eq!(h.intra_counts, want);

    let sampled = similarity_histograms(&ds, &table, 30, 200, 9).unwrap();
    assert_eq!(sampled, similarity_histograms(&ds, &table, 30, 200, 9).unwrap());
    assert_eq!(sampled.inter_total() as u128, oracles::choose2(30));
    assert!(histogram_overlap(&sampled).unwrap() <= 1.0);
}

#[test]
fn injected_rates_are_recovered() {
    let cfg = SynthConfig {
        identity_count: 600,
        dimension: 16,
        overlap_rate: 0.1,
        test_identity_count: 0,
        seed: 61,
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let ds = out.raw.dataset().unwrap();
    assert!(ds.face_count() >= 10_000);
    let mut off_majority = 0usize;
    let mut dominant = 0usize;
    for f in &ds.folders {
        let ids: Vec<u32> = f.faces.iter().map(|x| out.truth.identity_of(x).unwrap()).collect();
        let mut counts = std::collections::HashMap::new();
        for &i in &ids {
            *counts.entry(i).or_insert(0usize) += 1;
        }
        let top = counts.values().max().copied().unwrap_or(0);
        off_majority += ids.len() - top;
        dominant += top;
    }
    let outlier = off_majority as f64 / ds.face_count() as f64;
    assert!((outlier - cfg.outlier_rate).abs() <= 0.02, "outlier fraction {outlier}");
    let dup = out.truth.duplicates.len() as f64 / (dominant - out.truth.duplicates.len()) as f64;
    assert!((dup - cfg.duplicate_rate).abs() <= 0.02, "duplicate fraction {dup}");
    let split = out.truth.true_merges.len() as f64 / cfg.identity_count as f64;
    assert!((split - cfg.overlap_rate).abs() <= 0.02);
    for (a, b) in &out.truth.true_merges {
        assert!(ds.folders.iter().any(|f| &f.subject_id == a));
        assert!(ds.folders.iter().any(|f| &f.subject_id == b));
    }
}

#[test]
fn hand_built_merge_is_scored() {
    let out = generate(&SynthConfig {
        identity_count: 3,
        outlier_rate: 0.0,
        duplicate_rate: 0.0,
        overlap_rate: 1.0 / 3.0,
        dimension: 8,
        test_identity_count: 0,
        seed: 62,
        ..Default::default()
    })
    .unwrap();
    let raw = out.raw.dataset().unwrap();
    assert_eq!(raw.folders.len(), 4);
    let (a, b) = out.truth.true_merges[0].clone();
    let mut merged = Vec::new();
    let mut rest = Vec::new();
    for f in &raw.folders {
        if f.subject_id == a || f.subject_id == b {
            merged.extend(f.faces.iter().cloned());
        } else {
            rest.push(f.clone());
        }
    }
    rest.push(Folder::new(a.clone(), merged));
    let s = score_cleaning(&Dataset::new(rest), &out.truth).unwrap();
    assert_eq!(s.merge_recall, Some(1.0));
    let s = score_cleaning(&raw, &out.truth).unwrap();
    assert_eq!(s.merge_recall, Some(0.0));
    for v in [s.purity, s.face_recall, s.merge_recall] {
        assert!(v.is_some_and(|x| (0.0..=1.0).contains(&x)));
    }
}

fn run(seed: u64) -> (castfruits_core::CastOutcome, castfruits_core::synth::SynthOutput) {
    let out = generate(&small_synth(seed)).unwrap();
    let teacher = ReferenceEmbedder::new(
        Arc::new(appearance_map(&out).unwrap()),
        Arc::new(out.truth.clone()),
        ReferenceConfig::default(),
    )
    .unwrap();
    let r = run_cast(
        &out.raw.dataset().unwrap(),
        Box::new(teacher),
        &out.test.dataset().unwrap(),
        &CastConfig {
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    (r, out)
}

#[test]
fn cast_is_deterministic_and_well_shaped() {
    let (a, out) = run(63);
    let (b, _) = run(63);
    assert_eq!(a.report, b.report);
    assert_eq!(a.cleaned, b.cleaned);
    let raw_faces = out.raw.len();
    for it in &a.report.iterations {
        let f = |s| it.stage(s).unwrap().face_count;
        assert_eq!(f(StageName::Raw), raw_faces);
        assert!(f(StageName::Inter) <= f(StageName::Intra));
        assert!(f(StageName::Intra) <= f(StageName::Raw));
    }
    let last = a.report.iterations.last().unwrap().stage(StageName::Inter).unwrap();
    for p in &a.report.post {
        assert!(p.face_count <= last.face_count && p.identity_count <= last.identity_count);
    }
    assert_eq!(a.report.test_identities, 10);
}

#[test]
fn action_logs_replay_to_iteration_output() {
    let (r, out) = run(64);
    let raw = out.raw.dataset().unwrap();
    // rebuild the last iteration's intra output with the teacher that produced it
    let teacher = ReferenceEmbedder::new(
        Arc::new(appearance_map(&out).unwrap()),
        Arc::new(out.truth.clone()),
        ReferenceConfig::default(),
    )
    .unwrap();
    let mut t: Box<dyn castfruits_core::Embedder> = Box::new(teacher);
    for d in &r.per_iteration[..r.per_iteration.len() - 1] {
        t = t.fit(d).unwrap();
    }
    let table = castfruits_core::cast::embed_dataset(t.as_ref(), &raw).unwrap();
    let dbscan = Dbscan::new(&IntraCleanConfig::default());
    let intra: Vec<Folder> = raw
        .folders
        .iter()
        .map(|f| clean_folder(f, &table, &dbscan, &IntraCleanConfig::default()).unwrap())
        .filter(|f| !f.is_empty())
        .collect();
    let log = r.actions.last().unwrap();
    let mut buf = Vec::new();
    write_log(log, &mut buf).unwrap();
    let parsed = read_log(&buf[..]).unwrap();
    assert_eq!(&parsed, log);
    let replayed = Dataset::new(replay(&intra, &parsed).unwrap());
    assert_eq!(&replayed, r.per_iteration.last().unwrap());
}

#[test]
fn clean_folder_ignores_face_order() {
    let out = generate(&small_synth(65)).unwrap();
    let table: EmbeddingMap = out.raw.embeddings(&out.raw_embeddings).unwrap();
    let ds = out.raw.dataset().unwrap();
    let dbscan = Dbscan::new(&IntraCleanConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    for f in ds.folders.iter().take(20) {
        let base = clean_folder(f, &table, &dbscan, &IntraCleanConfig::default()).unwrap();
        let mut faces: Vec<FaceId> = f.faces.clone();
        faces.shuffle(&mut rng);
        let shuffled = Folder::new(f.subject_id.clone(), faces);
        assert_eq!(clean_folder(&shuffled, &table, &dbscan, &IntraCleanConfig::default()).unwrap(), base);
    }
}

#[test]
fn synthetic_files_round_trip() {
    let out = generate(&small_synth(66)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("raw.jsonl");
    let e = dir.path().join("raw.emb");
    out.raw.write(&m).unwrap();
    out.raw_embeddings.write(&e).unwrap();
    let m2 = Manifest::read(&m).unwrap();
    let e2 = EmbeddingMatrix::read(&e).unwrap();
    assert_eq!(m2, out.raw);
    assert_eq!(e2, out.raw_embeddings);
    m2.check_rows(e2.len()).unwrap();
    let bytes = std::fs::read(&m).unwrap();
    m2.write(&m).unwrap();
    assert_eq!(std::fs::read(&m).unwrap(), bytes);

    let t = dir.path().join("test.jsonl");
    out.test.write(&t).unwrap();
    let faces = Manifest::read(&t).unwrap().test_faces().unwrap();
    assert_eq!(faces.len(), out.test.len());
}
