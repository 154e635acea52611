//! Computation graphs over bound parameters.

use super::layout::{AttnIds, FfnIds, NormIds};
use super::MedThinkModel;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Var};
use crate::scalar::Scalar;

/// Model parameters placed on a tape, in layout order.
pub struct Graph<'a, S> {
    model: &'a MedThinkModel<S>,
    vars: &'a [Var],
}

impl<'a, S: Scalar> Graph<'a, S> {
    pub fn new(model: &'a MedThinkModel<S>, vars: &'a [Var]) -> Result<Self> {
        if vars.len() != model.params().len() {
            return Err(Error::contract(format!(
                "graph needs {} parameter vars, got {}",
                model.params().len(),
                vars.len()
            )));
        }
        Ok(Self { model, vars })
    }

    fn p(&self, index: usize) -> Var {
        self.vars[index]
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        let c = self.model.config();
        if ids.is_empty() {
            return Err(Error::contract("token sequence is empty"));
        }
        if ids.len() > c.n_max {
            return Err(Error::Length {
                len: ids.len(),
                max: c.n_max,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= c.vocab_size) {
            return Err(Error::Vocabulary {
                id,
                vocab_size: c.vocab_size,
            });
        }
        Ok(())
    }

    fn embed(&self, tape: &mut Tape<S>, ids: &[u32]) -> Result<Var> {
        self.check_ids(ids)?;
        let l = &self.model.layout;
        let tokens: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let positions: Vec<usize> = (0..ids.len()).collect();
        let tok = tape.gather(self.p(l.token_embedding), &tokens)?;
        let pos = tape.gather(self.p(l.text_position), &positions)?;
        tape.add(tok, pos)
    }

    fn norm(&self, tape: &mut Tape<S>, x: Var, ids: NormIds) -> Result<Var> {
        tape.layer_norm(x, self.p(ids.gain), self.p(ids.bias))
    }

    fn ffn(&self, tape: &mut Tape<S>, x: Var, ids: FfnIds) -> Result<Var> {
        let h = tape.matmul(x, self.p(ids.w1))?;
        let h = tape.add_row(h, self.p(ids.b1))?;
        let h = tape.gelu(h);
        let h = tape.matmul(h, self.p(ids.w2))?;
        tape.add_row(h, self.p(ids.b2))
    }

    /// Multi-head scaled dot-product attention with an output projection.
    fn attention(&self, tape: &mut Tape<S>, xq: Var, xkv: Var, ids: AttnIds, causal: bool) -> Result<Var> {
        let c = self.model.config();
        let dh = c.head_dim();
        let q = tape.matmul(xq, self.p(ids.wq))?;
        let k = tape.matmul(xkv, self.p(ids.wk))?;
        let v = tape.matmul(xkv, self.p(ids.wv))?;
        let scale = S::one() / S::of(dh as f64).sqrt();
        let mut heads = Vec::with_capacity(c.heads);
        for h in 0..c.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let weights = if causal {
                tape.causal_softmax_rows(scores)?
            } else {
                tape.softmax_rows(scores)?
            };
            heads.push(tape.matmul(weights, vh)?);
        }
        let joined = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        tape.matmul(joined, self.p(ids.wo))
    }

    /// F_T: pre-norm transformer encoder over token plus position embeddings.
    pub fn text_features(&self, tape: &mut Tape<S>, ids: &[u32]) -> Result<Var> {
        let l = &self.model.layout;
        let mut x = self.embed(tape, ids)?;
        for block in &l.encoder {
            let h = self.norm(tape, x, block.norm1)?;
            let h = self.attention(tape, h, h, block.attn, false)?;
            x = tape.add(x, h)?;
            let h = self.norm(tape, x, block.norm2)?;
            let h = self.ffn(tape, h, block.ffn)?;
            x = tape.add(x, h)?;
        }
        self.norm(tape, x, l.encoder_norm)
    }

    /// F_I: linear projection of flattened patches plus patch positions.
    pub fn image_features(&self, tape: &mut Tape<S>, patches: Var) -> Result<Var> {
        let l = &self.model.layout;
        let c = self.model.config();
        let shape = tape.value(patches).shape();
        if shape != [c.m, c.patch_pixels()] {
            return Err(Error::Dimension {
                op: "image_features",
                lhs: vec![c.m, c.patch_pixels()],
                rhs: shape.to_vec(),
            });
        }
        let x = tape.matmul(patches, self.p(l.patch_projection))?;
        let x = tape.add_row(x, self.p(l.patch_bias))?;
        tape.add(x, self.p(l.patch_position))
    }

    /// Single-head cross-attention from text queries to image keys/values,
    /// scaled by 1/√d. Returns `(attended, weights)`.
    pub fn fusion_attention(&self, tape: &mut Tape<S>, text: Var, image: Var) -> Result<(Var, Var)> {
        let l = &self.model.layout;
        let d = self.model.config().d;
        let (td, id) = (tape.value(text).dims2()?, tape.value(image).dims2()?);
        if td.1 != d || id.1 != d {
            return Err(Error::Dimension {
                op: "cross_attention",
                lhs: vec![td.0, td.1],
                rhs: vec![id.0, id.1],
            });
        }
        let q = tape.matmul(text, self.p(l.fusion_query))?;
        let k = tape.matmul(image, self.p(l.fusion_key))?;
        let v = tape.matmul(image, self.p(l.fusion_value))?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, S::one() / S::of(d as f64).sqrt());
        let weights = tape.softmax_rows(scores)?;
        let attended = tape.matmul(weights, v)?;
        Ok((attended, weights))
    }

    /// λ = σ(F_T·W_l + H·W_v); F_fuse = (1 − λ)⊙F_T + λ⊙H. Returns `(fused, λ)`.
    pub fn gate(&self, tape: &mut Tape<S>, text: Var, attended: Var) -> Result<(Var, Var)> {
        let l = &self.model.layout;
        let (a, b) = (tape.value(text).shape(), tape.value(attended).shape());
        if a != b {
            return Err(Error::Dimension {
                op: "gated_fusion",
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        }
        let zt = tape.matmul(text, self.p(l.gate_text))?;
        let zv = tape.matmul(attended, self.p(l.gate_visual))?;
        let z = tape.add(zt, zv)?;
        let lambda = tape.sigmoid(z);
        let fused = tape.lerp(text, attended, lambda)?;
        Ok((fused, lambda))
    }

    /// Causal decoder over `prefix`, cross-attending to `fused` in every block.
    pub fn decoder_logits(&self, tape: &mut Tape<S>, fused: Var, prefix: &[u32]) -> Result<Var> {
        let l = &self.model.layout;
        if tape.value(fused).dims2()?.1 != self.model.config().d {
            return Err(Error::Dimension {
                op: "decode_logits",
                lhs: vec![self.model.config().d],
                rhs: tape.value(fused).shape().to_vec(),
            });
        }
        let mut x = self.embed(tape, prefix)?;
        for block in &l.decoder {
            let h = self.norm(tape, x, block.norm1)?;
            let h = self.attention(tape, h, h, block.self_attn, true)?;
            x = tape.add(x, h)?;
            let h = self.norm(tape, x, block.norm2)?;
            let h = self.attention(tape, h, fused, block.cross_attn, false)?;
            x = tape.add(x, h)?;
            let h = self.norm(tape, x, block.norm3)?;
            let h = self.ffn(tape, h, block.ffn)?;
            x = tape.add(x, h)?;
        }
        let x = self.norm(tape, x, l.decoder_norm)?;
        tape.matmul(x, self.p(l.output_projection))
    }

    /// Text and image through fusion; returns F_fuse.
    pub fn fuse(&self, tape: &mut Tape<S>, input: &[u32], patches: Var) -> Result<Var> {
        let text = self.text_features(tape, input)?;
        let image = self.image_features(tape, patches)?;
        let (attended, _) = self.fusion_attention(tape, text, image)?;
        let (fused, _) = self.gate(tape, text, attended)?;
        Ok(fused)
    }

    /// Summed token NLL of `example.target` under teacher forcing, with the
    /// number of scored tokens.
    pub fn example_loss(&self, tape: &mut Tape<S>, example: &super::Example<S>) -> Result<(Var, usize)> {
        if example.target.len() < 2 {
            return Err(Error::contract("target needs a begin token and at least one more token"));
        }
        let patches = tape.constant(example.patches.clone());
        let fused = self.fuse(tape, &example.input, patches)?;
        let n = example.target.len() - 1;
        let logits = self.decoder_logits(tape, fused, &example.target[..n])?;
        let targets: Vec<usize> = example.target[1..].iter().map(|&t| t as usize).collect();
        let sum = tape.nll_sum(logits, &targets, &vec![false; n])?;
        Ok((sum, n))
    }
}
