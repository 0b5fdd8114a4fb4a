use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::data::{SplitSpec, SynthConfig};
use crate::imgproc::PipelineConfig;
use crate::nnet::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Everything a command needs, as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub synth: SynthConfig,
    pub paths: Paths,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            train: TrainConfig::reference(),
            split: SplitSpec::default(),
            synth: SynthConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Recursively overlay `patch` onto `base`. Objects merge key by key; any
/// other value replaces what was there.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl CliConfig {
    /// Overlay a partial JSON document on the defaults. Nested objects only
    /// replace the keys they mention, so `{"train": {"epochs": 3}}` keeps the
    /// default optimizer.
    pub fn from_json_overrides(patch: Value) -> Result<Self, CliError> {
        if !patch.is_object() {
            return Err(CliError::Usage("config must be a JSON object".into()));
        }
        let mut base = serde_json::to_value(Self::default()).expect("default config serializes");
        merge(&mut base, patch);
        let cfg: Self = serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let v: Value = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Self::from_json_overrides(v)
    }

    /// Defaults, or defaults overlaid with the file at `path`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::from_json_str(&text)
            }
        }
    }

    /// The `--seed` flag drives every random stream.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.split.seed = seed;
        self.synth.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.split.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.synth.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
