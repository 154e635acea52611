//! Text encoder, patch encoder, cross-attention, gated fusion and decoder.

mod config;
mod forward;
mod layout;

use std::path::Path;

use sha2::{Digest, Sha256};

pub use config::ModelConfig;
pub use forward::Graph;
use layout::Layout;

use crate::data::vocab::{BEGIN_ID, END_ID};
use crate::data::Image;
use crate::error::{Error, Result};
use crate::numerics::{NamedTensors, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Prefix reserved for non-model tensors stored alongside a model.
pub const AUX_PREFIX: &str = "aux.";

/// One teacher-forced training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<S> {
    /// Encoder token ids, `<s> … </s>`.
    pub input: Vec<u32>,
    /// `[m × patch_pixels]` flattened patches.
    pub patches: Tensor<S>,
    /// Decoder sequence `<s> … </s>`; predicts `target[1..]` from `target[..n-1]`.
    pub target: Vec<u32>,
}

/// Intermediate values of the fusion stage.
#[derive(Debug, Clone)]
pub struct FusionTrace<S> {
    pub text: Tensor<S>,
    pub image: Tensor<S>,
    pub weights: Tensor<S>,
    pub attended: Tensor<S>,
    pub gate: Tensor<S>,
    pub fused: Tensor<S>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NllLoss<S> {
    pub sum: S,
    pub mean: S,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct MedThinkModel<S> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Tensor<S>>,
}

impl<S: Scalar> MedThinkModel<S> {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = layout.init(config.seed);
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.params
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.layout.specs.iter().map(|s| s.name.as_str())
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.layout.specs.iter().position(|s| s.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<S>> {
        self.param_index(name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.param_index(name).map(move |i| &mut self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Places every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<S>) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    /// Places every parameter on `tape` without gradient tracking.
    pub fn bind_frozen(&self, tape: &mut Tape<S>) -> Vec<Var> {
        self.params.iter().map(|p| tape.constant(p.clone())).collect()
    }

    /// Splits an image into `m` square patches, row-major, scaled to [0, 1].
    pub fn patches(&self, image: &Image) -> Result<Tensor<S>> {
        let c = &self.config;
        if image.height() != c.image_side || image.width() != c.image_side {
            return Err(Error::Geometry {
                expected: format!("{0}x{0}", c.image_side),
                actual: format!("{}x{}", image.height(), image.width()),
            });
        }
        let (per_side, side) = (c.patches_per_side(), c.patch_side());
        let scale = S::one() / S::of(255.0);
        let mut data = Vec::with_capacity(c.m * c.patch_pixels());
        for pr in 0..per_side {
            for pc in 0..per_side {
                for r in 0..side {
                    for col in 0..side {
                        let px = image.get(pr * side + r, pc * side + col);
                        data.push(S::of(px as f64) * scale);
                    }
                }
            }
        }
        Tensor::new(vec![c.m, c.patch_pixels()], data)
    }

    fn with_graph<T>(&self, f: impl FnOnce(&mut Tape<S>, &Graph<'_, S>) -> Result<T>) -> Result<T> {
        let mut tape = Tape::new();
        let vars = self.bind_frozen(&mut tape);
        let graph = Graph::new(self, &vars)?;
        f(&mut tape, &graph)
    }

    /// F_T for a token sequence of length `n ≤ n_max`.
    pub fn encode_text(&self, ids: &[u32]) -> Result<Tensor<S>> {
        self.with_graph(|tape, g| {
            let v = g.text_features(tape, ids)?;
            Ok(tape.value(v).clone())
        })
    }

    /// F_I for an image of the configured geometry.
    pub fn encode_image(&self, image: &Image) -> Result<Tensor<S>> {
        let patches = self.patches(image)?;
        self.with_graph(|tape, g| {
            let p = tape.constant(patches);
            let v = g.image_features(tape, p)?;
            Ok(tape.value(v).clone())
        })
    }

    /// Returns `(H_attn, attention weights)`.
    pub fn cross_attention(&self, text: &Tensor<S>, image: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        self.with_graph(|tape, g| {
            let t = tape.constant(text.clone());
            let i = tape.constant(image.clone());
            let (h, w) = g.fusion_attention(tape, t, i)?;
            Ok((tape.value(h).clone(), tape.value(w).clone()))
        })
    }

    /// Returns `(F_fuse, λ)`.
    pub fn gated_fusion(&self, text: &Tensor<S>, attended: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
        self.with_graph(|tape, g| {
            let t = tape.constant(text.clone());
            let h = tape.constant(attended.clone());
            let (f, l) = g.gate(tape, t, h)?;
            Ok((tape.value(f).clone(), tape.value(l).clone()))
        })
    }

    /// Vocabulary logits for every prefix position, `[len(prefix) × vocab_size]`.
    pub fn decode_logits(&self, fused: &Tensor<S>, prefix: &[u32]) -> Result<Tensor<S>> {
        match prefix.first() {
            None => return Err(Error::contract("decoder prefix is empty")),
            Some(&first) if first != BEGIN_ID => {
                return Err(Error::contract("decoder prefix must start with the begin token"))
            }
            _ => {}
        }
        self.with_graph(|tape, g| {
            let f = tape.constant(fused.clone());
            let v = g.decoder_logits(tape, f, prefix)?;
            Ok(tape.value(v).clone())
        })
    }

    pub fn fusion_trace(&self, ids: &[u32], image: &Image) -> Result<FusionTrace<S>> {
        let patches = self.patches(image)?;
        self.with_graph(|tape, g| {
            let p = tape.constant(patches);
            let text = g.text_features(tape, ids)?;
            let img = g.image_features(tape, p)?;
            let (attended, weights) = g.fusion_attention(tape, text, img)?;
            let (fused, gate) = g.gate(tape, text, attended)?;
            Ok(FusionTrace {
                text: tape.value(text).clone(),
                image: tape.value(img).clone(),
                weights: tape.value(weights).clone(),
                attended: tape.value(attended).clone(),
                gate: tape.value(gate).clone(),
                fused: tape.value(fused).clone(),
            })
        })
    }

    /// Greedy argmax decoding from `<s>`. Returns generated ids (without the
    /// leading `<s>`), ending at the first `</s>`, after `max_len` tokens, or
    /// when the decoder reaches `n_max` positions. Ties pick the lowest id.
    pub fn greedy_decode(&self, input: &[u32], image: &Image, max_len: usize) -> Result<Vec<u32>> {
        let patches = self.patches(image)?;
        self.with_graph(|tape, g| {
            let p = tape.constant(patches);
            let fused = g.fuse(tape, input, p)?;
            let mark = tape.len();
            let mut prefix = vec![BEGIN_ID];
            let mut out = Vec::new();
            while out.len() < max_len {
                let logits = g.decoder_logits(tape, fused, &prefix)?;
                let next = argmax(tape.value(logits).row(prefix.len() - 1));
                tape.truncate(mark);
                out.push(next);
                if next == END_ID || prefix.len() == self.config.n_max {
                    break;
                }
                prefix.push(next);
            }
            Ok(out)
        })
    }

    /// Stores parameters under their layout names with the config as metadata.
    pub fn to_named_tensors(&self) -> NamedTensors<S> {
        let mut c = NamedTensors::new();
        c.push_meta("model_config", serde_json::to_string(&self.config).expect("config serializes"))
            .expect("static key");
        for (spec, t) in self.layout.specs.iter().zip(&self.params) {
            c.push(&spec.name, t.clone()).expect("layout names are unique");
        }
        c
    }

    /// Rebuilds a model, checking every name and shape against the stored config.
    /// Tensors prefixed with [`AUX_PREFIX`] are ignored.
    pub fn from_named_tensors(c: &NamedTensors<S>) -> Result<Self> {
        let raw = c
            .meta("model_config")
            .ok_or_else(|| Error::Checkpoint("missing model_config".into()))?;
        let config: ModelConfig =
            serde_json::from_str(raw).map_err(|e| Error::Checkpoint(format!("model_config: {e}")))?;
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = Vec::with_capacity(layout.specs.len());
        for spec in &layout.specs {
            let t = c
                .get(&spec.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", spec.name)))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, config expects {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
            params.push(t.clone());
        }
        for (name, _) in c.tensors() {
            if !name.starts_with(AUX_PREFIX) && !layout.specs.iter().any(|s| &s.name == name) {
                return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
            }
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_named_tensors().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_named_tensors(&NamedTensors::load(path)?)
    }

    /// SHA-256 over the config and every parameter's `f64` bytes.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config).expect("config serializes"));
        for t in &self.params {
            for x in t.data() {
                h.update(x.as_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Token-level negative log-likelihood over non-padded positions.
///
/// `mean` is the summed NLL divided by the non-pad count and `sum` is
/// `mean × count`, so the two agree exactly.
pub fn nll_loss<S: Scalar>(logits: &Tensor<S>, targets: &[u32], pad_mask: &[bool]) -> Result<NllLoss<S>> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let t: Vec<usize> = targets.iter().map(|&x| x as usize).collect();
    let raw = tape.nll_sum(l, &t, pad_mask)?;
    let count = pad_mask.iter().filter(|&&p| !p).count();
    let n = S::of(count as f64);
    let mean = tape.value(raw).data()[0] / n;
    Ok(NllLoss {
        sum: mean * n,
        mean,
        count,
    })
}


fn argmax<S: Scalar>(row: &[S]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}
