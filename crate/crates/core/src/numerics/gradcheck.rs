//! Central finite-difference verification of tape gradients.

use rayon::prelude::*;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Perturbation half-width.
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tol: f64,
    /// Denominator floor so exactly-zero gradients compare absolutely.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            tol: 1e-5,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub index: usize,
    pub shape: Vec<usize>,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tol
    }
}

fn evaluate<S, F>(f: &F, params: &[Tensor<S>]) -> Result<S>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::contract("grad_check function must return a scalar"));
    }
    Ok(value.data()[0])
}

/// Compares tape gradients of the scalar function `f` against central
/// differences at every entry of every parameter.
pub fn grad_check<S, F>(f: F, params: &[Tensor<S>], opts: GradCheckOptions) -> Result<GradCheckReport>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[Var]) -> Result<Var> + Sync,
{
    // Written so that NaN is rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(opts.eps > 0.0) {
        return Err(Error::contract("grad_check eps must be positive"));
    }
    let first = evaluate(&f, params)?;
    let second = evaluate(&f, params)?;
    if first.as_f64().to_bits() != second.as_f64().to_bits() {
        return Err(Error::OracleInvalid(format!(
            "function is not deterministic: {first} then {second}"
        )));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| match tape.grad(v) {
            Some(g) => g.iter().map(|x| x.as_f64()).collect(),
            None => vec![0.0; p.len()],
        })
        .collect();

    let eps = S::of(opts.eps);
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(t, p)| (0..p.len()).map(move |k| (t, k)))
        .collect();
    let numeric_flat: Vec<f64> = coords
        .par_iter()
        .map(|&(t, k)| {
            let mut shifted = params.to_vec();
            let base = shifted[t].data()[k];
            shifted[t].data_mut()[k] = base + eps;
            let plus = evaluate(&f, &shifted)?;
            shifted[t].data_mut()[k] = base - eps;
            let minus = evaluate(&f, &shifted)?;
            Ok((plus - minus).as_f64() / (2.0 * opts.eps))
        })
        .collect::<Result<_>>()?;

    let mut offset = 0;
    let mut tensors = Vec::with_capacity(params.len());
    let mut overall = 0.0f64;
    for (index, p) in params.iter().enumerate() {
        let numeric = numeric_flat[offset..offset + p.len()].to_vec();
        offset += p.len();
        let mut max_rel = 0.0f64;
        let mut max_abs = 0.0f64;
        for (&a, &n) in analytic[index].iter().zip(&numeric) {
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(opts.floor);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(abs);
        }
        overall = overall.max(max_rel);
        tensors.push(TensorCheck {
            index,
            shape: p.shape().to_vec(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            analytic: analytic[index].clone(),
            numeric,
        });
    }
    Ok(GradCheckReport {
        tensors,
        max_rel_error: overall,
        tol: opts.tol,
    })
}
