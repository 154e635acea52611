use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape hyperparameters of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Hidden dimension.
    pub d: usize,
    /// Maximum text length, shared by encoder input and decoder prefix.
    pub n_max: usize,
    /// Number of image patches; must be a perfect square.
    pub m: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    /// Images are `image_side × image_side` pixels.
    pub image_side: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Small configuration for the synthetic corpus.
    pub fn toy(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            d: 32,
            n_max: 32,
            m: 4,
            enc_layers: 1,
            dec_layers: 1,
            heads: 4,
            image_side: 4,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.d == 0 || self.heads == 0 {
            return fail("vocab_size, d and heads must be positive".into());
        }
        if !self.d.is_multiple_of(self.heads) {
            return fail(format!("d={} is not divisible by heads={}", self.d, self.heads));
        }
        if self.n_max < 2 {
            return fail(format!("n_max must be at least 2, got {}", self.n_max));
        }
        if self.m == 0 || self.enc_layers == 0 || self.dec_layers == 0 {
            return fail("m, enc_layers and dec_layers must be positive".into());
        }
        let side = self.patches_per_side();
        if side * side != self.m {
            return fail(format!("m={} is not a perfect square", self.m));
        }
        if self.image_side == 0 || !self.image_side.is_multiple_of(side) {
            return fail(format!(
                "image_side={} cannot be split into {side}x{side} patches",
                self.image_side
            ));
        }
        Ok(())
    }

    pub fn patches_per_side(&self) -> usize {
        (self.m as f64).sqrt().round() as usize
    }

    pub fn patch_side(&self) -> usize {
        self.image_side / self.patches_per_side().max(1)
    }

    pub fn patch_pixels(&self) -> usize {
        self.patch_side() * self.patch_side()
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.d
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Closed-form number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let (d, f, v) = (self.d, self.ffn_dim(), self.vocab_size);
        let norm = 2 * d;
        let attn = 4 * d * d;
        let ffn = d * f + f + f * d + d;
        let embeddings = v * d + self.n_max * d;
        let visual = self.patch_pixels() * d + d + self.m * d;
        let encoder = self.enc_layers * (2 * norm + attn + ffn) + norm;
        let fusion = 3 * d * d + 2 * d * d;
        let decoder = self.dec_layers * (3 * norm + 2 * attn + ffn) + norm;
        let head = d * v;
        embeddings + visual + encoder + fusion + decoder + head
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(ModelConfig::toy(40).validate().is_ok());
        let mut c = ModelConfig::toy(40);
        c.heads = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(40);
        c.m = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(40);
        c.n_max = 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(40);
        c.image_side = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(40);
        c.m = 1;
        assert!(c.validate().is_ok());
        assert_eq!(c.patch_pixels(), 16);
    }
}
