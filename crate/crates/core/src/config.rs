//! File configuration: one TOML document with a section per tool.
//!
//! ```toml
//! [cast]
//! iterations = 3
//! intra.eps = 0.3
//! inter.merge_threshold = 0.7
//! post.min_faces_per_identity = 3
//!
//! [synth]
//! identity_count = 952
//! ```
//!
//! Every key is optional; missing keys take their defaults and unknown keys
//! are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cast::{CastConfig, ReferenceConfig};
use crate::error::{Error, Result};
use crate::fruits::{TimingConfig, VerifyConfig};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub cast: CastConfig,
    pub reference: ReferenceConfig,
    pub synth: SynthConfig,
    pub eval: VerifyConfig,
    pub bench: TimingConfig,
}

impl ToolConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }

    /// Applies one seed to every seeded section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.cast.seed = seed;
        self.synth.seed = seed;
        self.eval.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.cast.validate()?;
        self.synth.validate()?;
        self.eval.validate()
    }
}
