//! Reverse-mode differentiation over whole tensors.
//!
//! Every operation appends one node holding its output value and the
//! references it needs for its backward rule. `backward` walks the nodes in
//! reverse recording order and accumulates into each input's gradient slot,
//! once per use.

use super::tensor::{kernels, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, S),
    Softmax(Var),
    Sigmoid(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<S>,
        inv_std: Vec<S>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Lerp {
        a: Var,
        b: Var,
        t: Var,
    },
    Sum(Var),
    Nll {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<S>,
    },
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Ordered record of tensor operations.
#[derive(Debug, Clone, Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    /// Drops every node recorded after `len`, e.g. between decoding steps.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[S]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<S>> {
        self.nodes[v.0].value.take_grad()
    }

    fn push(&mut self, mut value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        value.clear_grad();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize)> {
        self.value(v).dims2()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    fn zip_with(&mut self, op_name: &'static str, a: Var, b: Var, op: Op<S>, f: impl Fn(S, S) -> S) -> Result<Var> {
        self.same_shape(op_name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`q` row vector to every row of a `p×q` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (p, q) = self.dims2(a)?;
        if self.value(row).len() != q {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: vec![p, q],
                rhs: self.value(row).shape().to_vec(),
            });
        }
        let r = self.value(row).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(q) {
            chunk.iter_mut().zip(&r).for_each(|(x, &y)| *x += y);
        }
        let out = Tensor::new(vec![p, q], data)?;
        let rg = self.rg(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, c: S) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).softmax_rows()?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Row softmax over a square score matrix where row `i` only sees columns `0..=i`.
    /// Masked entries are exactly zero.
    pub fn causal_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a)?;
        if r != c {
            return Err(Error::Dimension {
                op: "causal_softmax_rows",
                lhs: vec![r, c],
                rhs: vec![c, c],
            });
        }
        let mut data = self.value(a).data().to_vec();
        for i in 0..r {
            let row = &mut data[i * c..(i + 1) * c];
            kernels::softmax_in_place(&mut row[..=i]);
            row[i + 1..].iter_mut().for_each(|x| *x = S::zero());
        }
        let out = Tensor::new(vec![r, c], data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).sigmoid();
        let rg = self.rg(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(kernels::gelu);
        let rg = self.rg(&[a]);
        self.push(out, Op::Gelu(a), rg)
    }

    /// Per-row normalization followed by an affine map with `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (p, q) = self.dims2(x)?;
        for v in [gain, bias] {
            if self.value(v).len() != q {
                return Err(Error::Dimension {
                    op: "layer_norm",
                    lhs: vec![p, q],
                    rhs: self.value(v).shape().to_vec(),
                });
            }
        }
        let n = S::of(q as f64);
        let eps = S::of(LAYER_NORM_EPS);
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = Vec::with_capacity(p * q);
        let mut inv_std = Vec::with_capacity(p);
        let mut out = Vec::with_capacity(p * q);
        for row in xs.chunks(q) {
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let inv = S::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let out = Tensor::new(vec![p, q], out)?;
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    /// Selects rows of `table` by index.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.dims2(table)?;
        if ids.is_empty() {
            return Err(Error::contract("gather needs at least one index"));
        }
        let t = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Dimension {
                    op: "gather",
                    lhs: vec![rows, cols],
                    rhs: vec![id],
                });
            }
            data.extend_from_slice(&t[id * cols..(id + 1) * cols]);
        }
        let out = Tensor::new(vec![ids.len(), cols], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let (p, q) = self.dims2(x)?;
        if width == 0 || start + width > q {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: vec![p, q],
                rhs: vec![start, width],
            });
        }
        let xs = self.value(x).data();
        let data = xs
            .chunks(q)
            .flat_map(|row| row[start..start + width].iter().copied())
            .collect();
        let out = Tensor::new(vec![p, width], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::contract("concat_cols needs at least one part"))?;
        let p = self.dims2(first)?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &v in parts {
            let (r, c) = self.dims2(v)?;
            if r != p {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    lhs: vec![p],
                    rhs: vec![r, c],
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(p * total);
        for i in 0..p {
            for &v in parts {
                data.extend_from_slice(self.value(v).row(i));
            }
        }
        let out = Tensor::new(vec![p, total], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// `a + t ⊙ (b − a)`, kept inside `[min(a, b), max(a, b)]` elementwise.
    pub fn lerp(&mut self, a: Var, b: Var, t: Var) -> Result<Var> {
        self.same_shape("lerp", a, b)?;
        self.same_shape("lerp", a, t)?;
        let (ta, tb, tt) = (self.value(a), self.value(b), self.value(t));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .zip(tt.data())
            .map(|((&x, &y), &w)| (x + w * (y - x)).max(x.min(y)).min(x.max(y)))
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b, t]);
        Ok(self.push(out, Op::Lerp { a, b, t }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, skipping rows where `pad_mask` is true.
    pub fn nll_sum(&mut self, logits: Var, targets: &[usize], pad_mask: &[bool]) -> Result<Var> {
        let (n, v) = self.dims2(logits)?;
        if targets.len() != n || pad_mask.len() != n {
            return Err(Error::Dimension {
                op: "nll",
                lhs: vec![n, v],
                rhs: vec![targets.len(), pad_mask.len()],
            });
        }
        if pad_mask.iter().all(|&p| p) {
            return Err(Error::DegenerateBatch);
        }
        let xs = self.value(logits).data();
        let mut probs = Vec::with_capacity(n * v);
        let mut total = S::zero();
        for (i, row) in xs.chunks(v).enumerate() {
            let max = row.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
            let lse = row.iter().map(|&x| (x - max).exp()).sum::<S>().ln() + max;
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
            if !pad_mask[i] {
                let t = targets[i];
                if t >= v {
                    return Err(Error::Vocabulary {
                        id: t as u32,
                        vocab_size: v,
                    });
                }
                total += lse - row[t];
            }
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::Nll {
                logits,
                targets: targets.to_vec(),
                mask: pad_mask.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Accumulates d(root)/d(node) into every differentiable node reachable from `root`.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        self.nodes[root.0].value.accumulate_grad(&[S::one()]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[i].value.take_grad() else {
                continue;
            };
            let deltas = self.backward_rule(i, &g);
            self.nodes[i].value.accumulate_grad_owned(g);
            for (v, d) in deltas {
                if self.nodes[v.0].requires_grad {
                    self.nodes[v.0].value.accumulate_grad_owned(d);
                }
            }
        }
        Ok(())
    }

    fn backward_rule(&self, i: usize, g: &[S]) -> Vec<(Var, Vec<S>)> {
        let node = &self.nodes[i];
        let out = node.value.data();
        let zeros = |v: Var| vec![S::zero(); self.value(v).len()];
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (p, q) = self.value(*a).dims2().expect("checked at record");
                let r = self.value(*b).cols();
                let mut res = Vec::new();
                if needs(*a) {
                    let mut da = zeros(*a);
                    kernels::matmul_nt(g, self.value(*b).data(), &mut da, p, q, r);
                    res.push((*a, da));
                }
                if needs(*b) {
                    let mut db = zeros(*b);
                    kernels::matmul_tn(self.value(*a).data(), g, &mut db, p, q, r);
                    res.push((*b, db));
                }
                res
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).dims2().expect("checked at record");
                let mut da = vec![S::zero(); r * c];
                for x in 0..r {
                    for y in 0..c {
                        da[x * c + y] = g[y * r + x];
                    }
                }
                vec![(*a, da)]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Sub(a, b) => vec![(*a, g.to_vec()), (*b, g.iter().map(|&x| -x).collect())],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                vec![
                    (*a, g.iter().zip(vb).map(|(&x, &y)| x * y).collect()),
                    (*b, g.iter().zip(va).map(|(&x, &y)| x * y).collect()),
                ]
            }
            Op::AddRow(a, row) => {
                let q = self.value(*row).len();
                let mut dr = vec![S::zero(); q];
                for chunk in g.chunks(q) {
                    dr.iter_mut().zip(chunk).for_each(|(d, &x)| *d += x);
                }
                vec![(*a, g.to_vec()), (*row, dr)]
            }
            Op::Scale(a, c) => vec![(*a, g.iter().map(|&x| x * *c).collect())],
            Op::Softmax(a) => {
                let c = node.value.cols();
                let mut da = Vec::with_capacity(g.len());
                for (yr, gr) in out.chunks(c).zip(g.chunks(c)) {
                    let dot: S = yr.iter().zip(gr).map(|(&y, &gg)| y * gg).sum();
                    da.extend(yr.iter().zip(gr).map(|(&y, &gg)| y * (gg - dot)));
                }
                vec![(*a, da)]
            }
            Op::Sigmoid(a) => vec![(
                *a,
                g.iter()
                    .zip(out)
                    .map(|(&gg, &y)| gg * y * (S::one() - y))
                    .collect(),
            )],
            Op::Gelu(a) => vec![(
                *a,
                g.iter()
                    .zip(self.value(*a).data())
                    .map(|(&gg, &x)| gg * kernels::gelu_grad(x))
                    .collect(),
            )],
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let q = self.value(*gain).len();
                let n = S::of(q as f64);
                let gv = self.value(*gain).data();
                let mut dx = Vec::with_capacity(g.len());
                let mut dg = vec![S::zero(); q];
                let mut db = vec![S::zero(); q];
                for (r, (gr, hr)) in g.chunks(q).zip(xhat.chunks(q)).enumerate() {
                    let mut sum_dh = S::zero();
                    let mut sum_dh_h = S::zero();
                    for j in 0..q {
                        let dh = gr[j] * gv[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                        dg[j] += gr[j] * hr[j];
                        db[j] += gr[j];
                    }
                    let scale = inv_std[r] / n;
                    for j in 0..q {
                        let dh = gr[j] * gv[j];
                        dx.push(scale * (n * dh - sum_dh - hr[j] * sum_dh_h));
                    }
                }
                vec![(*x, dx), (*gain, dg), (*bias, db)]
            }
            Op::Gather { table, ids } => {
                let cols = self.value(*table).cols();
                let mut dt = zeros(*table);
                for (k, &id) in ids.iter().enumerate() {
                    dt[id * cols..(id + 1) * cols]
                        .iter_mut()
                        .zip(&g[k * cols..(k + 1) * cols])
                        .for_each(|(d, &x)| *d += x);
                }
                vec![(*table, dt)]
            }
            Op::SliceCols { x, start } => {
                let q = self.value(*x).cols();
                let w = node.value.cols();
                let mut dx = zeros(*x);
                for (r, gr) in g.chunks(w).enumerate() {
                    dx[r * q + start..r * q + start + w].copy_from_slice(gr);
                }
                vec![(*x, dx)]
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for &v in parts {
                    let w = self.value(v).cols();
                    let d = g
                        .chunks(total)
                        .flat_map(|row| row[offset..offset + w].iter().copied())
                        .collect();
                    offset += w;
                    res.push((v, d));
                }
                res
            }
            Op::Lerp { a, b, t } => {
                let (va, vb, vt) = (
                    self.value(*a).data(),
                    self.value(*b).data(),
                    self.value(*t).data(),
                );
                let mut da = Vec::with_capacity(g.len());
                let mut db = Vec::with_capacity(g.len());
                let mut dt = Vec::with_capacity(g.len());
                for k in 0..g.len() {
                    da.push(g[k] * (S::one() - vt[k]));
                    db.push(g[k] * vt[k]);
                    dt.push(g[k] * (vb[k] - va[k]));
                }
                vec![(*a, da), (*b, db), (*t, dt)]
            }
            Op::Sum(a) => vec![(*a, vec![g[0]; self.value(*a).len()])],
            Op::Nll {
                logits,
                targets,
                mask,
                probs,
            } => {
                let v = self.value(*logits).cols();
                let mut dl = vec![S::zero(); probs.len()];
                for (r, &t) in targets.iter().enumerate() {
                    if mask[r] {
                        continue;
                    }
                    let row = &mut dl[r * v..(r + 1) * v];
                    row.copy_from_slice(&probs[r * v..(r + 1) * v]);
                    row[t] -= S::one();
                    row.iter_mut().for_each(|x| *x *= g[0]);
                }
                vec![(*logits, dl)]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_t(data: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_t(&[1.0, 2.0, 3.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn fan_out_sums_both_contributions() {
        // f = sum(3x) + sum(x*x) => df/dx = 3 + 2x
        let mut tape = Tape::new();
        let x = tape.leaf(vec_t(&[0.5, -1.0]));
        let a = tape.scale(x, 3.0);
        let b = tape.mul(x, x).unwrap();
        let c = tape.add(a, b).unwrap();
        let s = tape.sum(c);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[4.0, 1.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_t(&[1.0]));
        let c = tape.constant(vec_t(&[5.0]));
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[5.0]);
        assert!(tape.grad(c).is_none());
    }

    #[test]
    fn reset_empties_the_tape() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(vec_t(&[1.0]));
        tape.sum(x);
        assert_eq!(tape.len(), 2);
        tape.reset();
        assert!(tape.is_empty());
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let mut tape = Tape::new();
        let x = tape.leaf(vec_t(&[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn causal_softmax_masks_exactly() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![1.0, 7.0], vec![0.0, 2f64.ln()]]));
        let y = tape.causal_softmax_rows(x).unwrap();
        let v = tape.value(y).data().to_vec();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1], 0.0);
        assert!((v[3] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nll_all_padded_is_degenerate() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::<f64>::zeros(&[2, 3]));
        assert!(matches!(
            tape.nll_sum(x, &[0, 1], &[true, true]),
            Err(Error::DegenerateBatch)
        ));
    }

    #[test]
    fn lerp_stays_between_endpoints() {
        let mut tape = Tape::new();
        let a = tape.leaf(vec_t(&[1.0, -3.0, 0.1]));
        let b = tape.leaf(vec_t(&[-1e-20, 5.0, 0.1]));
        let t = tape.leaf(vec_t(&[0.9999999, 0.3, 0.77]));
        let y = tape.lerp(a, b, t).unwrap();
        let out = tape.value(y).data();
        assert!(out[0] <= 1.0 && out[0] >= -1e-20);
        assert_eq!(out[2], 0.1);
    }
}
