//! JSON-lines manifests: one record per face, pointing into an `EMB1`
//! embedding file by row.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, EmbeddingMap, FaceId, SubjectId};
use crate::embfile::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::fruits::{Attributes, TestFace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub face_id: FaceId,
    pub subject_id: SubjectId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Attributes>,
    pub embedding_row: u64,
}

/// Attributes as they appear on disk, before enum validation, so a bad value
/// can be reported against its face.
#[derive(Deserialize)]
struct RawAttributes {
    age: i64,
    gender: String,
    race: String,
    scenario: String,
}

#[derive(Deserialize)]
struct RawRecord {
    face_id: String,
    subject_id: String,
    #[serde(default)]
    attributes: Option<RawAttributes>,
    embedding_row: u64,
}

impl RawRecord {
    fn validate(self) -> Result<ManifestRecord> {
        let attributes = match self.attributes {
            None => None,
            Some(raw) => {
                let bad = |reason: String| Error::InvalidAttribute {
                    face_id: self.face_id.clone(),
                    reason,
                };
                let age = u32::try_from(raw.age)
                    .map_err(|_| bad(format!("invalid age {}", raw.age)))?;
                Some(Attributes {
                    age,
                    gender: raw.gender.parse().map_err(bad)?,
                    race: raw.race.parse().map_err(bad)?,
                    scenario: raw.scenario.parse().map_err(bad)?,
                })
            }
        };
        Ok(ManifestRecord {
            face_id: FaceId(self.face_id),
            subject_id: SubjectId(self.subject_id),
            attributes,
            embedding_row: self.embedding_row,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(mut records: Vec<ManifestRecord>) -> Result<Self> {
        check_unique(&records)?;
        sort_canonical(&mut records);
        Ok(Manifest { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| Error::MalformedLine {
                line: line_no,
                reason: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord =
                serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            records.push(raw.validate()?);
        }
        Manifest::new(records)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }

    /// Writes records in canonical `(subject_id, face_id)` order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut sorted: Vec<&ManifestRecord> = self.records.iter().collect();
        sorted.sort_by(|a, b| (&a.subject_id, &a.face_id).cmp(&(&b.subject_id, &b.face_id)));
        for r in sorted {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n").map_err(|e| Error::io("<manifest>", e))?;
        }
        w.flush().map_err(|e| Error::io("<manifest>", e))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
    }

    /// Fails on the first record whose row is outside `rows`.
    pub fn check_rows(&self, rows: usize) -> Result<()> {
        for r in &self.records {
            if r.embedding_row >= rows as u64 {
                return Err(Error::RowOutOfBounds {
                    face_id: r.face_id.0.clone(),
                    row: r.embedding_row,
                    rows: rows as u64,
                });
            }
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::from_assignments(
            self.records
                .iter()
                .map(|r| (r.subject_id.clone(), r.face_id.clone())),
        )
    }

    /// Resolves every record's row into an embedding map.
    pub fn embeddings(&self, matrix: &EmbeddingMatrix) -> Result<EmbeddingMap> {
        self.check_rows(matrix.len())?;
        self.records
            .iter()
            .map(|r| Ok((r.face_id.clone(), matrix.embedding(r.embedding_row as usize)?)))
            .collect()
    }

    /// Test faces; every record must carry attributes. The subject id is the
    /// identity label.
    pub fn test_faces(&self) -> Result<Vec<TestFace>> {
        self.records
            .iter()
            .map(|r| {
                let attributes = r.attributes.ok_or_else(|| Error::InvalidAttribute {
                    face_id: r.face_id.0.clone(),
                    reason: "missing attributes".into(),
                })?;
                Ok(TestFace {
                    face_id: r.face_id.clone(),
                    identity_id: r.subject_id.0.clone(),
                    attributes,
                })
            })
            .collect()
    }

    /// Records for the faces of `dataset`, with subjects taken from the
    /// dataset and rows assigned by `row_of`.
    pub fn from_dataset(
        dataset: &Dataset,
        mut row_of: impl FnMut(&FaceId) -> u64,
    ) -> Result<Self> {
        let records = dataset
            .faces()
            .map(|(s, f)| ManifestRecord {
                face_id: f.clone(),
                subject_id: s.clone(),
                attributes: None,
                embedding_row: row_of(f),
            })
            .collect();
        Manifest::new(records)
    }
}

fn check_unique(records: &[ManifestRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(&r.face_id) {
            return Err(Error::DuplicateFace(r.face_id.0.clone()));
        }
    }
    Ok(())
}

fn sort_canonical(records: &mut [ManifestRecord]) {
    records.sort_by(|a, b| (&a.subject_id, &a.face_id).cmp(&(&b.subject_id, &b.face_id)));
}
