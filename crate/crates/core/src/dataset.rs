//! Folder-structured datasets: each folder is a putative identity holding the
//! faces a search returned for it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::{centroid, Embedding};
use crate::error::{Error, Result};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a single face image.
    FaceId
);
string_id!(
    /// Identifier of a folder / subject.
    SubjectId
);

/// Embeddings keyed by face.
pub type EmbeddingMap = HashMap<FaceId, Embedding>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Folder {
    pub subject_id: SubjectId,
    pub faces: Vec<FaceId>,
}

impl Folder {
    pub fn new(subject_id: impl Into<SubjectId>, faces: Vec<FaceId>) -> Self {
        Folder {
            subject_id: subject_id.into(),
            faces,
        }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Embeddings of this folder's faces, in face order.
    pub fn embeddings<'a>(&self, table: &'a EmbeddingMap) -> Result<Vec<&'a Embedding>> {
        self.faces.iter().map(|f| lookup(table, f)).collect()
    }

    pub fn centroid(&self, table: &EmbeddingMap) -> Result<Embedding> {
        centroid(self.embeddings(table)?)
    }
}

pub(crate) fn lookup<'a>(table: &'a EmbeddingMap, face: &FaceId) -> Result<&'a Embedding> {
    table
        .get(face)
        .ok_or_else(|| Error::UnknownFace(face.0.clone()))
}

/// A set of folders. Canonical form keeps folders sorted by subject id and
/// faces sorted within each folder.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub folders: Vec<Folder>,
}

impl Dataset {
    pub fn new(folders: Vec<Folder>) -> Self {
        Dataset { folders }
    }

    /// Groups `(subject, face)` pairs into folders, in canonical order.
    pub fn from_assignments<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (SubjectId, FaceId)>,
    {
        let mut seen = HashSet::new();
        let mut grouped: BTreeMap<SubjectId, Vec<FaceId>> = BTreeMap::new();
        for (subject, face) in pairs {
            if !seen.insert(face.clone()) {
                return Err(Error::DuplicateFace(face.0));
            }
            grouped.entry(subject).or_default().push(face);
        }
        let folders = grouped
            .into_iter()
            .map(|(subject_id, mut faces)| {
                faces.sort();
                Folder { subject_id, faces }
            })
            .collect();
        Ok(Dataset { folders })
    }

    pub fn canonicalize(&mut self) {
        for f in &mut self.folders {
            f.faces.sort();
        }
        self.folders.retain(|f| !f.faces.is_empty());
        self.folders.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    }

    pub fn identity_count(&self) -> usize {
        self.folders.iter().filter(|f| !f.is_empty()).count()
    }

    pub fn face_count(&self) -> usize {
        self.folders.iter().map(Folder::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.face_count() == 0
    }

    pub fn faces(&self) -> impl Iterator<Item = (&SubjectId, &FaceId)> {
        self.folders
            .iter()
            .flat_map(|f| f.faces.iter().map(move |face| (&f.subject_id, face)))
    }

    /// Face to owning subject.
    pub fn subject_index(&self) -> HashMap<&FaceId, &SubjectId> {
        self.faces().map(|(s, f)| (f, s)).collect()
    }
}
