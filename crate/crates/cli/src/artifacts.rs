//! The JSON descriptor passed between commands on stdout/stdin, and path
//! handling relative to the working directory.

use std::io::{IsTerminal, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Files produced so far by a pipeline. Paths are relative to the workdir.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Artifacts {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cast_report: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cleaned_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub iteration_manifests: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub iteration_actions: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cleaning_scores: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub student_test_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub student_test_embeddings: Option<PathBuf>,
}

impl Artifacts {
    /// Reads a descriptor from `path`, `-` for stdin, or stdin when it is
    /// piped and no path is given. Returns an empty descriptor otherwise.
    pub fn load(path: Option<&Path>, workdir: &Workdir) -> Result<Self> {
        let text = match path {
            Some(p) if p == Path::new("-") => read_stdin()?,
            Some(p) => {
                let p = workdir.resolve(p);
                std::fs::read_to_string(&p).with_context(|| format!("reading descriptor {}", p.display()))?
            }
            None if !std::io::stdin().is_terminal() => read_stdin()?,
            None => return Ok(Artifacts::default()),
        };
        if text.trim().is_empty() {
            return Ok(Artifacts::default());
        }
        serde_json::from_str(&text).context("parsing pipeline descriptor")
    }
}

fn read_stdin() -> Result<String> {
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s).context("reading stdin")?;
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct Workdir(PathBuf);

impl Workdir {
    pub fn new(root: PathBuf) -> Self {
        Workdir(root)
    }

    pub fn resolve(&self, p: impl AsRef<Path>) -> PathBuf {
        let p = p.as_ref();
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.0.join(p)
        }
    }

    /// Creates `dir` under the workdir and returns its relative path.
    pub fn subdir(&self, dir: &str) -> Result<PathBuf> {
        let abs = self.resolve(dir);
        std::fs::create_dir_all(&abs).with_context(|| format!("creating {}", abs.display()))?;
        Ok(PathBuf::from(dir))
    }

    pub fn require(&self, what: &str, p: &Option<PathBuf>) -> Result<PathBuf> {
        match p {
            Some(p) => Ok(self.resolve(p)),
            None => bail!("no {what} given (pass a flag or pipe a descriptor)"),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes a JSON document to `out` (relative to the workdir) or stdout.
pub fn emit<T: Serialize>(value: &T, out: Option<&Path>, workdir: &Workdir) -> Result<()> {
    let text = to_json(value)?;
    match out {
        Some(p) => {
            let p = workdir.resolve(p);
            std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
