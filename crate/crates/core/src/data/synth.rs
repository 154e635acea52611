//! Seeded synthetic VQA corpus.
//!
//! Each image is a small grid split into four quadrants. Every quadrant
//! independently holds a lesion marker (intensity 255) with probability one
//! half; a few dimmer distractor cells are scattered on top of empty cells.
//! Distractors never sum to a lesion's brightness within one quadrant.
//! Questions ask whether a named quadrant holds a lesion, so every answer is
//! a function of the grid alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::image::{Image, ImageRef};
use super::manifest::{Manifest, ManifestHeader, QType, Split, VqaSample};
use crate::error::{Error, Result};

pub const LESION: u8 = 255;
pub const DISTRACTORS: [u8; 3] = [32, 48, 64];
pub const REGIONS: [&str; 4] = ["upper left", "upper right", "lower left", "lower right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { rows: 4, cols: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub grid: Grid,
    /// Fraction of open-end "where" questions.
    pub open_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            open_fraction: 0.0,
        }
    }
}

/// Quadrant name of a cell.
pub fn region_of(grid: Grid, row: usize, col: usize) -> &'static str {
    let upper = row < grid.rows / 2;
    let left = col < grid.cols / 2;
    match (upper, left) {
        (true, true) => REGIONS[0],
        (true, false) => REGIONS[1],
        (false, true) => REGIONS[2],
        (false, false) => REGIONS[3],
    }
}

/// 80/20 split from a hash of the id.
pub fn split_for_id(id: &str) -> Split {
    let digest = Sha256::digest(id.as_bytes());
    let bucket = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")) % 5;
    if bucket == 0 {
        Split::Test
    } else {
        Split::Train
    }
}

fn quadrant_cells(grid: Grid, region: usize) -> impl Iterator<Item = (usize, usize)> {
    let (h, w) = (grid.rows / 2, grid.cols / 2);
    let (r0, c0) = ((region / 2) * h, (region % 2) * w);
    (0..h).flat_map(move |r| (0..w).map(move |c| (r0 + r, c0 + c)))
}

fn item(seed: u64, index: u64, opts: &SynthOptions) -> VqaSample {
    let grid = opts.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);

    let mut image = Image::blank(grid.rows, grid.cols);
    let (h, w) = (grid.rows / 2, grid.cols / 2);
    let mut present = [false; 4];
    for (region, slot) in present.iter_mut().enumerate() {
        if rng.random_bool(0.5) {
            *slot = true;
            let cell = rng.random_range(0..h * w);
            let (r, c) = quadrant_cells(grid, region).nth(cell).expect("cell inside quadrant");
            image.set(r, c, LESION);
        }
    }
    let cells = grid.rows * grid.cols;
    for _ in 0..rng.random_range(0..=3usize) {
        let cell = rng.random_range(0..cells);
        let (r, c) = (cell / grid.cols, cell % grid.cols);
        if image.get(r, c) == 0 {
            image.set(r, c, DISTRACTORS[rng.random_range(0..DISTRACTORS.len())]);
        }
    }

    let id = format!("synth-{seed}-{index:06}");
    let split = split_for_id(&id);
    if rng.random_bool(opts.open_fraction.clamp(0.0, 1.0)) {
        let found: Vec<&str> = (0..4).filter(|&q| present[q]).map(|q| REGIONS[q]).collect();
        let (answer, rationale) = if found.is_empty() {
            ("none".to_string(), "No cell is as bright as a lesion marker.".to_string())
        } else {
            let list = found.join(" and ");
            (list.clone(), format!("Lesion markers are the brightest cells and appear in the {list} region."))
        };
        return VqaSample {
            id,
            image: ImageRef::Inline(image),
            question: "Which regions contain a lesion?".into(),
            answer,
            rationale: Some(rationale),
            qtype: QType::Open,
            split,
            category: None,
        };
    }

    let asked_index = rng.random_range(0..4);
    let asked = REGIONS[asked_index];
    let here = present[asked_index];
    let template = rng.random_range(0..3u8);
    let seen = if here {
        format!("A lesion marker appears in the {asked} region")
    } else {
        format!("No lesion marker appears in the {asked} region")
    };
    let (question, answer, rationale) = match template {
        0 | 1 => {
            let question = if template == 0 {
                format!("Is the lesion in the {asked} region?")
            } else {
                format!("Is there a lesion in the {asked} region?")
            };
            let answer = if here { "yes" } else { "no" };
            (question, answer, format!("{seen}, therefore {answer}."))
        }
        _ => {
            let question = format!("Is the {asked} region normal?");
            let (state, answer) = if here { ("abnormal", "no") } else { ("normal", "yes") };
            (question, answer, format!("{seen}, so it is {state}, therefore {answer}."))
        }
    };
    VqaSample {
        id,
        image: ImageRef::Inline(image),
        question,
        answer: answer.into(),
        rationale: Some(rationale),
        qtype: QType::Closed,
        split,
        category: Some(asked.into()),
    }
}

fn check_grid(grid: Grid) -> Result<()> {
    if grid.rows < 2 || grid.cols < 2 || !grid.rows.is_multiple_of(2) || !grid.cols.is_multiple_of(2) {
        return Err(Error::contract(format!(
            "grid must have even dimensions of at least 2, got {}x{}",
            grid.rows, grid.cols
        )));
    }
    Ok(())
}

/// `n_items` samples; item `i` depends only on `(seed, i)`.
pub fn synth_generate(seed: u64, n_items: usize, opts: &SynthOptions) -> Result<Vec<VqaSample>> {
    if n_items == 0 {
        return Err(Error::contract("n_items must be at least 1"));
    }
    check_grid(opts.grid)?;
    Ok((0..n_items as u64).map(|i| item(seed, i, opts)).collect())
}

/// Walks the item stream until exactly `n_train` train and `n_test` test
/// samples have been collected.
pub fn synth_corpus(seed: u64, n_train: usize, n_test: usize, opts: &SynthOptions) -> Result<Vec<VqaSample>> {
    check_grid(opts.grid)?;
    let (mut train, mut test) = (0, 0);
    let mut out = Vec::with_capacity(n_train + n_test);
    let mut index = 0u64;
    while train < n_train || test < n_test {
        let s = item(seed, index, opts);
        index += 1;
        match s.split {
            Split::Train if train < n_train => train += 1,
            Split::Test if test < n_test => test += 1,
            _ => continue,
        }
        out.push(s);
    }
    Ok(out)
}

pub fn synth_manifest(samples: Vec<VqaSample>) -> Result<Manifest> {
    Manifest::new(ManifestHeader::new("synthetic"), samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let a = synth_manifest(synth_generate(7, 50, &SynthOptions::default()).unwrap()).unwrap();
        let b = synth_manifest(synth_generate(7, 50, &SynthOptions::default()).unwrap()).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = synth_manifest(synth_generate(8, 50, &SynthOptions::default()).unwrap()).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
    }

    #[test]
    fn single_item_is_valid() {
        let s = synth_generate(1, 1, &SynthOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        synth_manifest(s).unwrap();
        assert!(synth_generate(1, 0, &SynthOptions::default()).is_err());
    }

    #[test]
    fn items_are_prefix_stable() {
        let short = synth_generate(3, 10, &SynthOptions::default()).unwrap();
        let long = synth_generate(3, 40, &SynthOptions::default()).unwrap();
        assert_eq!(short[..], long[..10]);
    }

    #[test]
    fn corpus_has_exact_split_counts() {
        let c = synth_corpus(11, 40, 10, &SynthOptions::default()).unwrap();
        assert_eq!(c.iter().filter(|s| s.split == Split::Train).count(), 40);
        assert_eq!(c.iter().filter(|s| s.split == Split::Test).count(), 10);
    }

    #[test]
    fn answers_are_roughly_balanced() {
        let c = synth_generate(5, 2000, &SynthOptions::default()).unwrap();
        let yes = c.iter().filter(|s| s.answer == "yes").count();
        assert!((800..1200).contains(&yes), "{yes}");
        let test = c.iter().filter(|s| s.split == Split::Test).count();
        assert!((320..480).contains(&test), "{test}");
    }

    #[test]
    fn odd_grids_are_rejected() {
        let opts = SynthOptions {
            grid: Grid { rows: 3, cols: 4 },
            ..Default::default()
        };
        assert!(synth_generate(1, 1, &opts).is_err());
    }
}
