//! Seeded inputs shared by the kernel benchmarks.

use castfruits_core::embedding::Centroid;
use castfruits_core::fruits::{Attributes, Gender, Race, Scenario, TestFace};
use castfruits_core::{Embedding, SubjectId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform unit vectors.
pub fn unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Embedding> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            Embedding::from_f64(&raw).expect("nonzero gaussian draw")
        })
        .collect()
}

/// A folder-like cloud: most points near one center, the rest scattered.
pub fn folder_cloud(n: usize, dim: usize, outliers: f64, seed: u64) -> Vec<Embedding> {
    let mut rng = rng(seed);
    let center: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = center.iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..n)
        .map(|_| {
            let noise: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let raw: Vec<f64> = if rng.random_bool(outliers) {
                noise
            } else {
                center
                    .iter()
                    .zip(&noise)
                    .map(|(c, e)| c / norm + 0.35 * e / (dim as f64).sqrt())
                    .collect()
            };
            Embedding::from_f64(&raw).expect("nonzero draw")
        })
        .collect()
}

pub fn centroids(n: usize, dim: usize, seed: u64) -> Vec<Centroid> {
    unit_vectors(n, dim, seed)
        .into_iter()
        .enumerate()
        .map(|(i, vector)| Centroid {
            subject_id: SubjectId(format!("s{i:06}")),
            vector,
            member_count: 20,
        })
        .collect()
}

/// Genuine scores shifted above impostor scores.
pub fn scores(genuine: usize, impostor: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng(seed);
    let g = (0..genuine).map(|_| rng.random_range(0.2..1.0)).collect();
    let i = (0..impostor).map(|_| rng.random_range(-0.6..0.6)).collect();
    (g, i)
}

/// Test faces with identities of `per_identity` faces and mixed attributes.
pub fn test_faces(n: usize, per_identity: usize, seed: u64) -> Vec<TestFace> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            TestFace::new(
                format!("t{i:07}"),
                format!("id{:06}", i / per_identity),
                Attributes {
                    age: rng.random_range(5..90),
                    gender: Gender::ALL[rng.random_range(0..Gender::ALL.len())],
                    race: Race::ALL[rng.random_range(0..Race::ALL.len())],
                    scenario: if rng.random_bool(0.4) { Scenario::Controlled } else { Scenario::Wild },
                },
            )
        })
        .collect()
}
