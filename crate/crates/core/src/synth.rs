//! Seeded synthetic face datasets with ground truth.
//!
//! Each identity owns a random direction on the unit sphere; its faces are
//! drawn around it. Folders mimic search results: one dominant identity per
//! folder, polluted by outliers (faces of other identities or random
//! directions), some identities split over two folders, and some faces
//! planted again as near-duplicates.
//!
//! Every face also carries nuisance latents (a heavy-tailed `hardness` and a
//! low-rank `pose` code) that the reference embedder mixes in: weak teachers
//! confuse faces that share pose, strong teachers ignore it.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FaceId, SubjectId};
use crate::embedding::Embedding;
use crate::embfile::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::fruits::{Attributes, Gender, Race, Scenario};
use crate::manifest::{Manifest, ManifestRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub identity_count: usize,
    pub faces_per_identity: FaceRange,
    pub dimension: usize,
    /// Typical angle (radians) between a face and its identity direction.
    pub cluster_concentration: f64,
    pub outlier_rate: f64,
    /// Fraction of identities whose faces are split over two folders.
    pub overlap_rate: f64,
    /// Probability that a dominant face is planted again as a near-duplicate.
    pub duplicate_rate: f64,
    /// Angle (radians) between a planted duplicate and its source.
    pub duplicate_jitter: f64,
    /// Pareto scale of per-face hardness.
    pub hardness_scale: f64,
    /// Pareto shape of per-face hardness; smaller is heavier-tailed.
    pub hardness_shape: f64,
    /// Rank of the shared nuisance (pose) subspace.
    pub nuisance_rank: usize,
    pub test_identity_count: usize,
    pub test_faces_per_identity: FaceRange,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            identity_count: 100,
            faces_per_identity: FaceRange { min: 15, max: 25 },
            dimension: crate::embedding::DEFAULT_DIMENSION,
            cluster_concentration: 0.45,
            outlier_rate: 0.3,
            overlap_rate: 0.05,
            duplicate_rate: 0.02,
            duplicate_jitter: 0.1,
            hardness_scale: 0.6,
            hardness_shape: 0.5,
            nuisance_rank: 4,
            test_identity_count: 40,
            test_faces_per_identity: FaceRange { min: 4, max: 8 },
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.identity_count < 2 {
            return bad(format!("synth.identity_count must be >= 2, got {}", self.identity_count));
        }
        if self.dimension < 2 {
            return bad(format!("synth.dimension must be >= 2, got {}", self.dimension));
        }
        for (name, r) in [
            ("outlier_rate", self.outlier_rate),
            ("overlap_rate", self.overlap_rate),
            ("duplicate_rate", self.duplicate_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("synth.{name} must lie in [0, 1], got {r}"));
            }
        }
        for (name, r) in [("faces_per_identity", self.faces_per_identity), ("test_faces_per_identity", self.test_faces_per_identity)] {
            if r.min == 0 || r.min > r.max {
                return bad(format!("synth.{name} must satisfy 1 <= min <= max, got {}..={}", r.min, r.max));
            }
        }
        if !(self.cluster_concentration > 0.0 && self.cluster_concentration < std::f64::consts::FRAC_PI_2) {
            return bad("synth.cluster_concentration must lie in (0, pi/2)".into());
        }
        if !(self.duplicate_jitter >= 0.0 && self.duplicate_jitter < std::f64::consts::FRAC_PI_2) {
            return bad("synth.duplicate_jitter must lie in [0, pi/2)".into());
        }
        if !(self.hardness_scale > 0.0 && self.hardness_shape > 0.0) {
            return bad("synth.hardness_scale and synth.hardness_shape must be positive".into());
        }
        if self.nuisance_rank == 0 || self.nuisance_rank > self.dimension {
            return bad(format!(
                "synth.nuisance_rank must lie in [1, dimension], got {}",
                self.nuisance_rank
            ));
        }
        Ok(())
    }

    fn split_count(&self) -> usize {
        (self.overlap_rate * self.identity_count as f64).round() as usize
    }
}

/// Latent description of one generated face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTruth {
    pub identity: u32,
    /// Raw folder the face was generated into; `None` for test faces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folder: Option<SubjectId>,
    pub hardness: f32,
    pub pose: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFolder {
    pub subject_id: SubjectId,
    pub dominant_identity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NuisanceSpec {
    pub dimension: usize,
    pub rank: usize,
    pub basis_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub faces: BTreeMap<FaceId, FaceTruth>,
    pub folders: Vec<PlantedFolder>,
    /// Folder pairs that hold the same identity.
    pub true_merges: Vec<(SubjectId, SubjectId)>,
    /// `(source, duplicate)` face pairs.
    pub duplicates: Vec<(FaceId, FaceId)>,
    pub nuisance: NuisanceSpec,
}

impl GroundTruth {
    pub fn identity_of(&self, face: &FaceId) -> Result<u32> {
        self.faces
            .get(face)
            .map(|t| t.identity)
            .ok_or_else(|| Error::UnknownFace(face.0.clone()))
    }

    fn dominant_by_folder(&self) -> HashMap<&SubjectId, u32> {
        self.folders
            .iter()
            .map(|f| (&f.subject_id, f.dominant_identity))
            .collect()
    }

    /// Whether a face belongs to the dominant identity of the raw folder it
    /// was generated into.
    pub fn is_dominant(&self, face: &FaceId) -> bool {
        let Some(t) = self.faces.get(face) else {
            return false;
        };
        let Some(folder) = &t.folder else {
            return false;
        };
        self.folders
            .iter()
            .any(|f| &f.subject_id == folder && f.dominant_identity == t.identity)
    }
}

/// Everything [`generate`] produces.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub raw: Manifest,
    pub raw_embeddings: EmbeddingMatrix,
    pub test: Manifest,
    pub test_embeddings: EmbeddingMatrix,
    pub truth: GroundTruth,
}

const STREAM_GLOBAL: u64 = 0;
const STREAM_IDENTITY: u64 = 1 << 32;
const STREAM_FOLDER: u64 = 2 << 32;
const STREAM_TEST: u64 = 3 << 32;
const STREAM_BASIS: u64 = 4 << 32;

pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_gaussian(rng: &mut impl Rng, dim: usize) -> Embedding {
    loop {
        if let Ok(e) = Embedding::from_f64(&gaussian(rng, dim)) {
            return e;
        }
    }
}

/// `normalize(center + sigma * g)` with `g` standard normal.
fn jitter(rng: &mut impl Rng, center: &Embedding, sigma: f64) -> Embedding {
    let g = gaussian(rng, center.dim());
    let v: Vec<f64> = center
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(&c, n)| f64::from(c) + sigma * n)
        .collect();
    Embedding::from_f64(&v).unwrap_or_else(|_| center.clone())
}

/// Orthonormal basis of the nuisance subspace, as `rank` rows of length
/// `dimension`.
pub fn nuisance_basis(spec: &NuisanceSpec) -> Vec<Vec<f64>> {
    let mut rng = substream(spec.basis_seed, STREAM_BASIS);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(spec.rank);
    while basis.len() < spec.rank {
        let mut v = gaussian(&mut rng, spec.dimension);
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

struct Builder<'a> {
    config: &'a SynthConfig,
    sigma: f64,
    hardness: Pareto<f64>,
    identities: Vec<Embedding>,
    next_face: usize,
    next_distractor: u32,
    raw_records: Vec<ManifestRecord>,
    raw_rows: EmbeddingMatrix,
    truth: GroundTruth,
}

impl Builder<'_> {
    fn latents(&self, rng: &mut ChaCha8Rng) -> (f32, Vec<f32>) {
        let h = self.hardness.sample(rng) as f32;
        let pose = unit_gaussian(rng, self.config.nuisance_rank).into_inner();
        (h, pose)
    }

    fn push_face(
        &mut self,
        folder: &SubjectId,
        identity: u32,
        appearance: &Embedding,
        latents: (f32, Vec<f32>),
    ) -> FaceId {
        let face_id = FaceId(format!("f{:08}", self.next_face));
        self.next_face += 1;
        let row = self.raw_rows.push(appearance).expect("dimension fixed") as u64;
        self.raw_records.push(ManifestRecord {
            face_id: face_id.clone(),
            subject_id: folder.clone(),
            attributes: None,
            embedding_row: row,
        });
        self.truth.faces.insert(
            face_id.clone(),
            FaceTruth {
                identity,
                folder: Some(folder.clone()),
                hardness: latents.0,
                pose: latents.1,
            },
        );
        face_id
    }

    fn fill_folder(&mut self, folder_index: usize, subject: &SubjectId, dominant: u32) {
        let cfg = self.config;
        let mut rng = substream(cfg.seed, STREAM_FOLDER + folder_index as u64);
        let n = rng.random_range(cfg.faces_per_identity.min..=cfg.faces_per_identity.max);
        let dup_sigma = cfg.duplicate_jitter.tan() / (cfg.dimension as f64).sqrt();
        for _ in 0..n {
            let outlier = rng.random::<f64>() < cfg.outlier_rate;
            let (identity, appearance) = if !outlier {
                (dominant, jitter(&mut rng, &self.identities[dominant as usize], self.sigma))
            } else if rng.random_bool(0.5) {
                let other = rng.random_range(0..cfg.identity_count as u32 - 1);
                let other = if other >= dominant { other + 1 } else { other };
                (other, jitter(&mut rng, &self.identities[other as usize], self.sigma))
            } else {
                let id = self.next_distractor;
                self.next_distractor += 1;
                (id, unit_gaussian(&mut rng, cfg.dimension))
            };
            let latents = self.latents(&mut rng);
            let source = self.push_face(subject, identity, &appearance, latents.clone());
            if !outlier && rng.random::<f64>() < cfg.duplicate_rate {
                let copy = jitter(&mut rng, &appearance, dup_sigma);
                let dup = self.push_face(subject, identity, &copy, latents);
                self.truth.duplicates.push((source, dup));
            }
        }
    }
}

/// Generates a raw training dataset, a labeled test set and ground truth.
/// Output is a pure function of `config`.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let dim = config.dimension;
    let sigma = config.cluster_concentration.tan() / (dim as f64).sqrt();
    let identities: Vec<Embedding> = (0..config.identity_count)
        .map(|i| unit_gaussian(&mut substream(config.seed, STREAM_IDENTITY + i as u64), dim))
        .collect();

    let mut global = substream(config.seed, STREAM_GLOBAL);
    let split: HashSet<usize> = sample(&mut global, config.identity_count, config.split_count())
        .into_iter()
        .collect();

    let test_base = config.identity_count as u32;
    let mut b = Builder {
        config,
        sigma,
        hardness: Pareto::new(config.hardness_scale, config.hardness_shape)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        identities,
        next_face: 0,
        next_distractor: test_base + config.test_identity_count as u32,
        raw_records: Vec::new(),
        raw_rows: EmbeddingMatrix::new(dim),
        truth: GroundTruth {
            faces: BTreeMap::new(),
            folders: Vec::new(),
            true_merges: Vec::new(),
            duplicates: Vec::new(),
            nuisance: NuisanceSpec {
                dimension: dim,
                rank: config.nuisance_rank,
                basis_seed: config.seed,
            },
        },
    };

    let mut folder_index = 0usize;
    for identity in 0..config.identity_count {
        let copies = if split.contains(&identity) { 2 } else { 1 };
        let mut made = Vec::with_capacity(copies);
        for _ in 0..copies {
            let subject = SubjectId(format!("s{folder_index:06}"));
            b.truth.folders.push(PlantedFolder {
                subject_id: subject.clone(),
                dominant_identity: identity as u32,
            });
            b.fill_folder(folder_index, &subject, identity as u32);
            made.push(subject);
            folder_index += 1;
        }
        if let [first, second] = &made[..] {
            b.truth.true_merges.push((first.clone(), second.clone()));
        }
    }

    let mut test_records = Vec::new();
    let mut test_rows = EmbeddingMatrix::new(dim);
    let mut test_face = 0usize;
    for t in 0..config.test_identity_count {
        let mut rng = substream(config.seed, STREAM_TEST + t as u64);
        let direction = unit_gaussian(&mut rng, dim);
        let gender = Gender::ALL[rng.random_range(0..Gender::ALL.len())];
        let race = Race::ALL[rng.random_range(0..Race::ALL.len())];
        let base_age: u32 = rng.random_range(18..=70);
        let label = SubjectId(format!("id{t:05}"));
        let n = rng.random_range(config.test_faces_per_identity.min..=config.test_faces_per_identity.max);
        for _ in 0..n {
            let appearance = jitter(&mut rng, &direction, sigma);
            let attributes = Attributes {
                age: base_age + rng.random_range(0..=25),
                gender,
                race,
                scenario: if rng.random_bool(0.5) { Scenario::Controlled } else { Scenario::Wild },
            };
            let (hardness, pose) = b.latents(&mut rng);
            let face_id = FaceId(format!("t{test_face:06}"));
            test_face += 1;
            let row = test_rows.push(&appearance)? as u64;
            test_records.push(ManifestRecord {
                face_id: face_id.clone(),
                subject_id: label.clone(),
                attributes: Some(attributes),
                embedding_row: row,
            });
            b.truth.faces.insert(
                face_id,
                FaceTruth {
                    identity: test_base + t as u32,
                    folder: None,
                    hardness,
                    pose,
                },
            );
        }
    }

    Ok(SynthOutput {
        raw: Manifest::new(b.raw_records)?,
        raw_embeddings: b.raw_rows,
        test: Manifest::new(test_records)?,
        test_embeddings: test_rows,
        truth: b.truth,
    })
}

/// Cleaning quality against ground truth. Rates with an empty denominator
/// are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningScores {
    pub purity: Option<f64>,
    pub face_recall: Option<f64>,
    pub merge_recall: Option<f64>,
    pub dup_removal_rate: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Most frequent true identity among `faces`; ties go to the smaller id.
fn majority(identities: impl Iterator<Item = u32>) -> Option<(u32, usize)> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for id in identities {
        *counts.entry(id).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best, (id, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((id, n)),
        })
}

/// Fraction of faces matching their folder's majority identity.
pub fn purity(dataset: &Dataset, truth: &GroundTruth) -> Result<Option<f64>> {
    let mut matching = 0;
    let mut total = 0;
    for folder in &dataset.folders {
        let ids: Vec<u32> = folder
            .faces
            .iter()
            .map(|f| truth.identity_of(f))
            .collect::<Result<_>>()?;
        if let Some((_, n)) = majority(ids.iter().copied()) {
            matching += n;
            total += ids.len();
        }
    }
    Ok(ratio(matching, total))
}

pub fn score_cleaning(cleaned: &Dataset, truth: &GroundTruth) -> Result<CleaningScores> {
    let purity = purity(cleaned, truth)?;
    let owner = cleaned.subject_index();

    let dominant = truth.dominant_by_folder();
    let is_dominant = |_: &FaceId, t: &FaceTruth| {
        t.folder
            .as_ref()
            .and_then(|folder| dominant.get(folder))
            .is_some_and(|&d| d == t.identity)
    };
    let generated_dominant = truth.faces.iter().filter(|(f, t)| is_dominant(f, t)).count();
    let retained_dominant = owner
        .keys()
        .filter(|f| truth.faces.get(**f).is_some_and(|t| is_dominant(f, t)))
        .count();

    // output folders holding dominant faces of each raw folder
    let mut landed: HashMap<&SubjectId, HashSet<&SubjectId>> = HashMap::new();
    for (face, out_folder) in &owner {
        let t = &truth.faces[*face];
        if is_dominant(face, t) {
            landed
                .entry(t.folder.as_ref().unwrap())
                .or_default()
                .insert(*out_folder);
        }
    }
    let resolved = truth
        .true_merges
        .iter()
        .filter(|(a, b)| match (landed.get(a), landed.get(b)) {
            (Some(x), Some(y)) => !x.is_disjoint(y),
            _ => false,
        })
        .count();
    let removed = truth
        .duplicates
        .iter()
        .filter(|(a, b)| !(owner.contains_key(a) && owner.contains_key(b)))
        .count();

    Ok(CleaningScores {
        purity,
        face_recall: ratio(retained_dominant, generated_dominant),
        merge_recall: ratio(resolved, truth.true_merges.len()),
        dup_removal_rate: ratio(removed, truth.duplicates.len()),
    })
}

/// Appearance embeddings of all generated faces, training and test.
pub fn appearance_map(output: &SynthOutput) -> Result<crate::dataset::EmbeddingMap> {
    let mut map = output.raw.embeddings(&output.raw_embeddings)?;
    map.extend(output.test.embeddings(&output.test_embeddings)?);
    Ok(map)
}
