//! Parameter naming, shapes and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::numerics::Tensor;
use crate::scalar::Scalar;

pub(crate) const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Normal,
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormIds {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnIds {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FfnIds {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncoderBlock {
    pub norm1: NormIds,
    pub attn: AttnIds,
    pub norm2: NormIds,
    pub ffn: FfnIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderBlock {
    pub norm1: NormIds,
    pub self_attn: AttnIds,
    pub norm2: NormIds,
    pub cross_attn: AttnIds,
    pub norm3: NormIds,
    pub ffn: FfnIds,
}

/// Indices of every parameter tensor, in storage order.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub specs: Vec<ParamSpec>,
    pub token_embedding: usize,
    pub text_position: usize,
    pub patch_projection: usize,
    pub patch_bias: usize,
    pub patch_position: usize,
    pub encoder: Vec<EncoderBlock>,
    pub encoder_norm: NormIds,
    pub fusion_query: usize,
    pub fusion_key: usize,
    pub fusion_value: usize,
    pub gate_text: usize,
    pub gate_visual: usize,
    pub decoder: Vec<DecoderBlock>,
    pub decoder_norm: NormIds,
    pub output_projection: usize,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape: shape.to_vec(),
            init,
        });
        self.specs.len() - 1
    }

    fn norm(&mut self, prefix: &str, d: usize) -> NormIds {
        NormIds {
            gain: self.add(format!("{prefix}.gain"), &[d], Init::Ones),
            bias: self.add(format!("{prefix}.bias"), &[d], Init::Zeros),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIds {
        AttnIds {
            wq: self.add(format!("{prefix}.wq"), &[d, d], Init::Normal),
            wk: self.add(format!("{prefix}.wk"), &[d, d], Init::Normal),
            wv: self.add(format!("{prefix}.wv"), &[d, d], Init::Normal),
            wo: self.add(format!("{prefix}.wo"), &[d, d], Init::Normal),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIds {
        FfnIds {
            w1: self.add(format!("{prefix}.w1"), &[d, f], Init::Normal),
            b1: self.add(format!("{prefix}.b1"), &[f], Init::Zeros),
            w2: self.add(format!("{prefix}.w2"), &[f, d], Init::Normal),
            b2: self.add(format!("{prefix}.b2"), &[d], Init::Zeros),
        }
    }
}

impl Layout {
    pub fn new(c: &ModelConfig) -> Self {
        let (d, f) = (c.d, c.ffn_dim());
        let mut b = Builder { specs: Vec::new() };
        let token_embedding = b.add("embed.token".into(), &[c.vocab_size, d], Init::Normal);
        let text_position = b.add("embed.position".into(), &[c.n_max, d], Init::Normal);
        let patch_projection = b.add("visual.projection".into(), &[c.patch_pixels(), d], Init::Normal);
        let patch_bias = b.add("visual.bias".into(), &[d], Init::Zeros);
        let patch_position = b.add("visual.position".into(), &[c.m, d], Init::Normal);
        let encoder = (0..c.enc_layers)
            .map(|i| {
                let p = format!("encoder.{i}");
                EncoderBlock {
                    norm1: b.norm(&format!("{p}.norm1"), d),
                    attn: b.attn(&format!("{p}.attn"), d),
                    norm2: b.norm(&format!("{p}.norm2"), d),
                    ffn: b.ffn(&format!("{p}.ffn"), d, f),
                }
            })
            .collect();
        let encoder_norm = b.norm("encoder.norm", d);
        let fusion_query = b.add("fusion.query".into(), &[d, d], Init::Normal);
        let fusion_key = b.add("fusion.key".into(), &[d, d], Init::Normal);
        let fusion_value = b.add("fusion.value".into(), &[d, d], Init::Normal);
        let gate_text = b.add("fusion.gate_text".into(), &[d, d], Init::Normal);
        let gate_visual = b.add("fusion.gate_visual".into(), &[d, d], Init::Normal);
        let decoder = (0..c.dec_layers)
            .map(|i| {
                let p = format!("decoder.{i}");
                DecoderBlock {
                    norm1: b.norm(&format!("{p}.norm1"), d),
                    self_attn: b.attn(&format!("{p}.self_attn"), d),
                    norm2: b.norm(&format!("{p}.norm2"), d),
                    cross_attn: b.attn(&format!("{p}.cross_attn"), d),
                    norm3: b.norm(&format!("{p}.norm3"), d),
                    ffn: b.ffn(&format!("{p}.ffn"), d, f),
                }
            })
            .collect();
        let decoder_norm = b.norm("decoder.norm", d);
        let output_projection = b.add("output.projection".into(), &[d, c.vocab_size], Init::Normal);
        Self {
            specs: b.specs,
            token_embedding,
            text_position,
            patch_projection,
            patch_bias,
            patch_position,
            encoder,
            encoder_norm,
            fusion_query,
            fusion_key,
            fusion_value,
            gate_text,
            gate_visual,
            decoder,
            decoder_norm,
            output_projection,
        }
    }

    /// Seeded initialization: N(0, 0.02²) weights, unit norm gains, zero biases.
    pub fn init<S: Scalar>(&self, seed: u64) -> Vec<Tensor<S>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        self.specs
            .iter()
            .map(|spec| match spec.init {
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Ones => Tensor::full(&spec.shape, S::one()),
                Init::Normal => {
                    let mut t = Tensor::zeros(&spec.shape);
                    for x in t.data_mut() {
                        *x = S::of(normal.sample(&mut rng));
                    }
                    t
                }
            })
            .collect()
    }
}
