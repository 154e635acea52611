use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Single-channel 8-bit pixel grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    grid: Vec<Vec<u8>>,
}

impl TryFrom<GridRepr> for Image {
    type Error = String;

    fn try_from(g: GridRepr) -> Result<Self, String> {
        let width = g.grid.first().map_or(0, Vec::len);
        if width == 0 || g.grid.iter().any(|r| r.len() != width) {
            return Err("grid must be a non-empty rectangle".into());
        }
        Ok(Image {
            height: g.grid.len(),
            width,
            pixels: g.grid.into_iter().flatten().collect(),
        })
    }
}

impl From<Image> for GridRepr {
    fn from(img: Image) -> Self {
        GridRepr {
            grid: img.pixels.chunks(img.width).map(<[u8]>::to_vec).collect(),
        }
    }
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::Geometry {
                expected: format!("{height}x{width} pixels"),
                actual: format!("{} pixels", pixels.len()),
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn blank(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    /// Content hash, used to group questions that share an inline image.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.height as u64).to_le_bytes());
        h.update((self.width as u64).to_le_bytes());
        h.update(&self.pixels);
        hex::encode(&h.finalize()[..8])
    }
}

/// Where a sample's pixels come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageRef {
    File(String),
    Inline(Image),
}

impl ImageRef {
    /// Stable identity: the path for files, a content hash for inline grids.
    pub fn key(&self) -> String {
        match self {
            ImageRef::File(p) => p.clone(),
            ImageRef::Inline(img) => format!("inline:{}", img.digest()),
        }
    }

    /// Resolves to pixels, reading file references relative to `base`.
    pub fn load(&self, base: &Path) -> Result<Image> {
        match self {
            ImageRef::Inline(img) => Ok(img.clone()),
            ImageRef::File(p) => {
                let path = base.join(p);
                let decoded = image::open(&path)
                    .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?
                    .to_luma8();
                let (w, h) = decoded.dimensions();
                Image::new(h as usize, w as usize, decoded.into_raw())
            }
        }
    }

    pub fn inline(&self) -> Option<&Image> {
        match self {
            ImageRef::Inline(img) => Some(img),
            ImageRef::File(_) => None,
        }
    }
}
