//! Slow, obviously-correct reference implementations used by the oracle
//! tests and the acceptance suite.

#![allow(dead_code)]

use castfruits_core::fruits::{PairSlice, Scenario, TestFace};

/// Plain sequential dot product.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        s += a[i] as f64 * b[i] as f64;
    }
    s
}

/// DBSCAN from its graph definition: clusters are the connected components
/// of the core-core neighbor graph, numbered by their smallest core index;
/// a border point joins the lowest-numbered cluster holding a core neighbor.
pub fn naive_dbscan(points: &[Vec<f32>], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let adjacency: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 1.0 - dot(&points[i], &points[j]).clamp(-1.0, 1.0) <= eps)
                .collect()
        })
        .collect();
    let near = |i: usize, j: usize| adjacency[i][j];
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| i == j || near(i, j)).count() >= min_pts)
        .collect();

    // components by repeated relaxation of the smallest reachable core index
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i != j && core[i] && core[j] && near(i, j) && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| core[i]).map(|i| comp[i]).collect();
    roots.sort_unstable();
    roots.dedup();
    let cluster_of_root = |r: usize| roots.iter().position(|&x| x == r).unwrap();

    (0..n)
        .map(|i| {
            if core[i] {
                Some(cluster_of_root(comp[i]))
            } else {
                (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| cluster_of_root(comp[j]))
                    .min()
            }
        })
        .collect()
}

/// Relabels clusters in order of first appearance.
pub fn canonical(labels: &[Option<usize>]) -> Vec<Option<usize>> {
    let mut seen: Vec<usize> = Vec::new();
    labels
        .iter()
        .map(|l| {
            l.map(|c| match seen.iter().position(|&s| s == c) {
                Some(k) => k,
                None => {
                    seen.push(c);
                    seen.len() - 1
                }
            })
        })
        .collect()
}

pub fn naive_fmr(impostor: &[f64], t: f64) -> f64 {
    impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64
}

pub fn naive_fnmr(genuine: &[f64], t: f64) -> f64 {
    genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64
}

/// Evaluates every candidate threshold (distinct scores, then +inf) by a
/// linear sweep and returns the first whose FMR meets the target.
pub fn sweep_fnmr_at_fmr(genuine: &[f64], impostor: &[f64], target: f64) -> (Option<f64>, f64) {
    let mut g = genuine.to_vec();
    let mut m = impostor.to_vec();
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    m.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cands: Vec<f64> = g.iter().chain(&m).copied().collect();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    let (mut gi, mut mi) = (0usize, 0usize);
    for &t in &cands {
        while gi < g.len() && g[gi] < t {
            gi += 1;
        }
        while mi < m.len() && m[mi] < t {
            mi += 1;
        }
        let fmr = (m.len() - mi) as f64 / m.len() as f64;
        if fmr <= target {
            return (Some(t), gi as f64 / g.len() as f64);
        }
    }
    (None, 1.0)
}

/// The same search with per-candidate full counting; quadratic.
pub fn exhaustive_fnmr_at_fmr(genuine: &[f64], impostor: &[f64], target: f64) -> (Option<f64>, f64) {
    let mut cands: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    for t in cands {
        if naive_fmr(impostor, t) <= target {
            return (Some(t), naive_fnmr(genuine, t));
        }
    }
    (None, 1.0)
}

pub fn choose2(n: u128) -> u128 {
    n * n.saturating_sub(1) / 2
}

fn in_slice(slice: PairSlice, f: &TestFace) -> bool {
    match slice {
        PairSlice::Race(r) => f.attributes.race == r,
        PairSlice::Gender(g) => f.attributes.gender == g,
        PairSlice::Controlled => f.attributes.scenario == Scenario::Controlled,
        PairSlice::Wild => f.attributes.scenario == Scenario::Wild,
        _ => true,
    }
}

fn pair_ok(slice: PairSlice, a: &TestFace, b: &TestFace) -> bool {
    match slice {
        PairSlice::CrossAge(k) => (a.attributes.age as i64 - b.attributes.age as i64).abs() >= k as i64,
        PairSlice::CrossScene => {
            (a.attributes.scenario == Scenario::Controlled) != (b.attributes.scenario == Scenario::Controlled)
        }
        _ => true,
    }
}

/// `(genuine, impostor)` by visiting every unordered pair.
pub fn brute_pair_counts(faces: &[TestFace], slice: PairSlice) -> (u64, u64) {
    let (mut g, mut i) = (0, 0);
    for a in 0..faces.len() {
        for b in (a + 1)..faces.len() {
            let (x, y) = (&faces[a], &faces[b]);
            if in_slice(slice, x) && in_slice(slice, y) && pair_ok(slice, x, y) {
                if x.identity_id == y.identity_id {
                    g += 1;
                } else {
                    i += 1;
                }
            }
        }
    }
    (g, i)
}

/// Identity sizes with exactly `faces` faces and `genuine` same-identity
/// pairs: greedy blocks of at most `cap` faces, then singletons.
pub fn identity_sizes(faces: u64, genuine: u64, cap: u64) -> Vec<u64> {
    let mut sizes = Vec::new();
    let (mut left_faces, mut left_pairs) = (faces, genuine);
    while left_pairs > 0 {
        let mut s = cap;
        while choose2(s as u128) as u64 > left_pairs {
            s -= 1;
        }
        assert!(s >= 2 && s <= left_faces, "cannot realize {genuine} pairs over {faces} faces");
        sizes.push(s);
        left_faces -= s;
        left_pairs -= choose2(s as u128) as u64;
    }
    sizes.extend(std::iter::repeat_n(1, left_faces as usize));
    sizes
}

/// Near-duplicate removal by brute force: each component of the
/// `> threshold` graph keeps the point most similar to `centroid`, ties to
/// the smaller position.
pub fn exhaustive_dedup(points: &[Vec<f32>], centroid: &[f32], threshold: f64) -> Vec<usize> {
    let n = points.len();
    let linked: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&points[i], &points[j]).clamp(-1.0, 1.0) > threshold).collect())
        .collect();
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i != j && linked[i][j] && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut kept = Vec::new();
    let mut roots: Vec<usize> = comp.clone();
    roots.sort_unstable();
    roots.dedup();
    for r in roots {
        let best = (0..n)
            .filter(|&i| comp[i] == r)
            .max_by(|&a, &b| {
                dot(&points[a], centroid)
                    .partial_cmp(&dot(&points[b], centroid))
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        kept.push(best);
    }
    kept.sort_unstable();
    kept
}

/// Unit vectors around a few random centers with mixed spreads, plus a
/// sprinkle of uniform outliers.
pub fn clustered_points(rng: &mut impl rand::Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
    use rand_distr::{Distribution, StandardNormal};
    let unit = |v: Vec<f64>| -> Vec<f32> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| (x / norm) as f32).collect()
    };
    let gauss = |rng: &mut dyn rand::RngCore| -> Vec<f64> {
        (0..dim).map(|_| StandardNormal.sample(rng)).collect()
    };
    let centers: Vec<Vec<f64>> = (0..rng.random_range(1..=6)).map(|_| gauss(rng)).collect();
    let spread: f64 = rng.random_range(0.05..0.9);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                unit(gauss(rng))
            } else {
                let c = &centers[rng.random_range(0..centers.len())];
                let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                let g = gauss(rng);
                unit(
                    c.iter()
                        .zip(&g)
                        .map(|(a, b)| a / cn + spread * b / (dim as f64).sqrt())
                        .collect(),
                )
            }
        })
        .collect()
}
