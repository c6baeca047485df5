//! Attribute-sliced 1:1 pair enumeration.
//!
//! A slice first restricts the face set (gender, race, scenario) and then
//! optionally constrains pairs (age gap, cross-scenario). Streams visit
//! pairs in sorted `(face_id, face_id)` order; counts are combinatorial and
//! never materialize pairs.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::face::{Gender, Race, Scenario, TestFace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairSlice {
    All,
    /// Pairs whose ages differ by at least this many years.
    CrossAge(u32),
    Race(Race),
    Gender(Gender),
    Controlled,
    Wild,
    /// One controlled and one wild face.
    CrossScene,
}

impl PairSlice {
    pub const CROSS_AGE_10: PairSlice = PairSlice::CrossAge(10);
    pub const CROSS_AGE_20: PairSlice = PairSlice::CrossAge(20);

    /// The slices reported for a standard test set.
    pub fn standard() -> Vec<PairSlice> {
        let mut v = vec![PairSlice::All, PairSlice::CROSS_AGE_10, PairSlice::CROSS_AGE_20];
        v.extend(Race::ALL.iter().map(|&r| PairSlice::Race(r)));
        v.extend(Gender::ALL.iter().map(|&g| PairSlice::Gender(g)));
        v.extend([PairSlice::Controlled, PairSlice::Wild, PairSlice::CrossScene]);
        v
    }

    fn admits(self, face: &TestFace) -> bool {
        let a = &face.attributes;
        match self {
            PairSlice::All | PairSlice::CrossAge(_) | PairSlice::CrossScene => true,
            PairSlice::Race(r) => a.race == r,
            PairSlice::Gender(g) => a.gender == g,
            PairSlice::Controlled => a.scenario == Scenario::Controlled,
            PairSlice::Wild => a.scenario == Scenario::Wild,
        }
    }

    fn pairs_with(self, a: &TestFace, b: &TestFace) -> bool {
        match self {
            PairSlice::CrossAge(k) => a.attributes.age.abs_diff(b.attributes.age) >= k,
            PairSlice::CrossScene => a.attributes.scenario != b.attributes.scenario,
            _ => true,
        }
    }
}

impl fmt::Display for PairSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairSlice::All => f.write_str("all"),
            PairSlice::CrossAge(k) => write!(f, "cross-age-{k}"),
            PairSlice::Race(r) => write!(f, "race:{r}"),
            PairSlice::Gender(g) => write!(f, "gender:{g}"),
            PairSlice::Controlled => f.write_str("controlled"),
            PairSlice::Wild => f.write_str("wild"),
            PairSlice::CrossScene => f.write_str("cross-scene"),
        }
    }
}

impl FromStr for PairSlice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "all" => return Ok(PairSlice::All),
            "controlled" => return Ok(PairSlice::Controlled),
            "wild" => return Ok(PairSlice::Wild),
            "cross-scene" => return Ok(PairSlice::CrossScene),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("cross-age-") {
            return k
                .parse()
                .map(PairSlice::CrossAge)
                .map_err(|_| format!("bad age gap in slice `{s}`"));
        }
        if let Some(r) = s.strip_prefix("race:") {
            return r.parse().map(PairSlice::Race);
        }
        if let Some(g) = s.strip_prefix("gender:") {
            return g.parse().map(PairSlice::Gender);
        }
        Err(format!("unknown slice `{s}`"))
    }
}

impl Serialize for PairSlice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PairSlice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    pub genuine: u64,
    pub impostor: u64,
}

/// `n choose 2`.
pub fn pairs_total(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Impostor pairs among `n` faces with `genuine` same-identity pairs.
pub fn impostor_count_all(n: u64, genuine: u64) -> Result<u64> {
    pairs_total(n).checked_sub(genuine).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "{genuine} genuine pairs exceed the {} pairs among {n} faces",
            pairs_total(n)
        ))
    })
}

#[derive(Debug, Clone, Copy)]
pub struct Pair<'a> {
    pub a: &'a TestFace,
    pub b: &'a TestFace,
    pub genuine: bool,
}

/// Faces admitted by one slice, in face_id order.
#[derive(Debug, Clone)]
pub struct PairEnumeration<'a> {
    slice: PairSlice,
    faces: Vec<&'a TestFace>,
}

pub fn enumerate_pairs(faces: &[TestFace], slice: PairSlice) -> Result<PairEnumeration<'_>> {
    let mut seen = HashSet::with_capacity(faces.len());
    for f in faces {
        if !seen.insert(&f.face_id) {
            return Err(Error::DuplicateFace(f.face_id.0.clone()));
        }
    }
    let mut admitted: Vec<&TestFace> = faces.iter().filter(|f| slice.admits(f)).collect();
    admitted.sort_by(|a, b| a.face_id.cmp(&b.face_id));
    Ok(PairEnumeration {
        slice,
        faces: admitted,
    })
}

/// Pairs `(i, j)` with `ages[j] - ages[i] >= k` over `ages` sorted ascending.
fn age_gap_pairs(ages: &mut [u32], k: u32) -> u64 {
    if k == 0 {
        return pairs_total(ages.len() as u64);
    }
    ages.sort_unstable();
    let mut total = 0u64;
    let mut j = 0usize;
    for i in 0..ages.len() {
        let bound = ages[i].saturating_add(k);
        j = j.max(i + 1);
        while j < ages.len() && ages[j] < bound {
            j += 1;
        }
        total += (ages.len() - j) as u64;
    }
    total
}

impl<'a> PairEnumeration<'a> {
    pub fn slice(&self) -> PairSlice {
        self.slice
    }

    pub fn faces(&self) -> &[&'a TestFace] {
        &self.faces
    }

    /// Pair counts in O(n log n).
    pub fn counts(&self) -> PairCounts {
        let mut by_identity: HashMap<&str, Vec<&TestFace>> = HashMap::new();
        for f in &self.faces {
            by_identity.entry(f.identity_id.as_str()).or_default().push(f);
        }
        let count = |faces: &[&TestFace]| -> u64 {
            match self.slice {
                PairSlice::CrossAge(k) => {
                    let mut ages: Vec<u32> = faces.iter().map(|f| f.attributes.age).collect();
                    age_gap_pairs(&mut ages, k)
                }
                PairSlice::CrossScene => {
                    let c = faces
                        .iter()
                        .filter(|f| f.attributes.scenario == Scenario::Controlled)
                        .count() as u64;
                    c * (faces.len() as u64 - c)
                }
                _ => pairs_total(faces.len() as u64),
            }
        };
        let total = count(&self.faces);
        let genuine: u64 = by_identity.values().map(|g| count(g)).sum();
        PairCounts {
            genuine,
            impostor: total - genuine,
        }
    }

    /// All slice pairs in sorted face_id order.
    pub fn pairs(&self) -> impl Iterator<Item = Pair<'a>> + '_ {
        let faces = &self.faces;
        let slice = self.slice;
        (0..faces.len()).flat_map(move |i| {
            ((i + 1)..faces.len()).filter_map(move |j| {
                let (a, b) = (faces[i], faces[j]);
                slice.pairs_with(a, b).then(|| Pair {
                    a,
                    b,
                    genuine: a.identity_id == b.identity_id,
                })
            })
        })
    }

    pub fn genuine(&self) -> impl Iterator<Item = Pair<'a>> + '_ {
        self.pairs().filter(|p| p.genuine)
    }

    pub fn impostor(&self) -> impl Iterator<Item = Pair<'a>> + '_ {
        self.pairs().filter(|p| !p.genuine)
    }
}
