//! Dataset schema, tokenizer, statistics and the synthetic corpus.

pub mod fixtures;
mod image;
mod manifest;
mod stats;
pub mod synth;
pub mod vocab;

pub use image::{Image, ImageRef};
pub use manifest::{load_manifest, Manifest, ManifestHeader, QType, Split, VqaSample, SCHEMA_VERSION};
pub use stats::{dataset_stats, StatsReport, StatsRow};
pub use synth::{synth_corpus, synth_generate, Grid, SynthOptions};
pub use vocab::{normalize, normalize_answer, tokenize, Encoded, Vocab};

use std::path::Path;

use crate::error::Result;

/// Vocabulary over every question, answer and rationale in `samples`.
pub fn build_vocab(samples: &[VqaSample], min_count: usize) -> Result<Vocab> {
    let texts = samples
        .iter()
        .flat_map(|s| [Some(s.question.as_str()), Some(s.answer.as_str()), s.rationale.as_deref()])
        .flatten();
    Vocab::build(texts, min_count)
}

/// Resolves every sample's image, file references relative to `base`.
pub fn load_images(samples: &[VqaSample], base: &Path) -> Result<Vec<Image>> {
    samples.iter().map(|s| s.image.load(base)).collect()
}
