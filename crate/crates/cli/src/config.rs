//! Run configuration: a TOML (or JSON) file, then command-line overrides.
//! The effective configuration is echoed as one JSON line, which is itself
//! a valid `--config` file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use medthink::data::synth::{Grid, SynthOptions};
use medthink::model::ModelConfig;
use medthink::training::TrainConfig;
use medthink_annotate::{CleaningConfig, PromptTemplate};

use crate::error::{CliError, CliResult, Exit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_train: usize,
    pub n_test: usize,
    pub open_fraction: f64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { n_train: 1000, n_test: 250, open_fraction: 0.0, grid_rows: 4, grid_cols: 4 }
    }
}

impl SynthSection {
    pub fn options(&self) -> SynthOptions {
        SynthOptions {
            grid: Grid { rows: self.grid_rows, cols: self.grid_cols },
            open_fraction: self.open_fraction,
        }
    }
}

/// Model shape; the vocabulary size comes from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub n_max: usize,
    pub m: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    /// Taken from the first training image when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_side: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let t = ModelConfig::toy(1);
        Self {
            d: t.d,
            n_max: t.n_max,
            m: t.m,
            enc_layers: t.enc_layers,
            dec_layers: t.dec_layers,
            heads: t.heads,
            image_side: None,
        }
    }
}

impl ModelSection {
    pub fn model_config(&self, vocab_size: usize, image_side: usize, seed: u64) -> ModelConfig {
        ModelConfig {
            vocab_size,
            d: self.d,
            n_max: self.n_max,
            m: self.m,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            heads: self.heads,
            image_side: self.image_side.unwrap_or(image_side),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    /// Chat-completions endpoint; the offline mock is used when empty.
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub prompt: PromptTemplate,
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: "default".into(),
            timeout_secs: 60,
            prompt: PromptTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// Seeds the corpus, model initialization, shuffling and the mock generator.
    pub seed: u64,
    pub synth: SynthSection,
    pub model: ModelSection,
    /// `train.seed` always follows the top-level seed.
    pub train: TrainConfig,
    pub generator: GeneratorSection,
    pub cleaning: CleaningConfig,
}

impl CliConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let exit = if e.kind() == std::io::ErrorKind::NotFound { Exit::MissingFile } else { Exit::Failure };
            CliError::new(exit, format!("{}: {e}", path.display()))
        })?;
        let bad = |m: String| CliError::new(Exit::BadConfig, format!("{}: {m}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| bad(e.message().to_string()))
        }
    }

    pub fn echo_line(&self, command: &str) -> String {
        format!("config {command}: {}", serde_json::to_string(self).expect("config serializes"))
    }
}
