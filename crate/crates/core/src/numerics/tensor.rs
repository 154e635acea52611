use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::contract(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); len],
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
            grad: None,
        }
    }

    pub fn scalar(value: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Self {
            shape: vec![rows.len(), cols],
            data,
            grad: None,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = S::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn take_grad(&mut self) -> Option<Vec<S>> {
        self.grad.take()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[S]) {
        debug_assert_eq!(delta.len(), self.data.len());
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, &b)| *a += b),
            None => self.grad = Some(delta.to_vec()),
        }
    }

    pub(crate) fn accumulate_grad_owned(&mut self, delta: Vec<S>) {
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(&delta).for_each(|(a, &b)| *a += b),
            None => self.grad = Some(delta),
        }
    }

    /// `(rows, cols)` for a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Dimension {
                op: "matrix",
                lhs: self.shape.clone(),
                rhs: vec![],
            }),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn row(&self, i: usize) -> &[S] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i * self.cols() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, x| m.max(x.abs()))
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            grad: None,
        }
    }

    /// Converts element type, e.g. `f64` -> `f32`.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| T::of(x.as_f64())).collect(),
            grad: None,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (p, q) = self.dims2()?;
        let (q2, r) = other.dims2()?;
        if q != q2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut out = vec![S::zero(); p * r];
        kernels::matmul(&self.data, &other.data, &mut out, p, q, r);
        Ok(Self {
            shape: vec![p, r],
            data: out,
            grad: None,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
            grad: None,
        })
    }

    pub fn softmax_rows(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = self.data.clone();
        for i in 0..r {
            kernels::softmax_in_place(&mut out[i * c..(i + 1) * c]);
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: out,
            grad: None,
        })
    }

    pub fn sigmoid(&self) -> Self {
        self.map(kernels::sigmoid)
    }
}

/// Raw slice kernels shared by eager tensor methods and tape backward rules.
pub(crate) mod kernels {
    use crate::scalar::Scalar;

    /// `out[p×r] += a[p×q] · b[q×r]`.
    pub fn matmul<S: Scalar>(a: &[S], b: &[S], out: &mut [S], p: usize, q: usize, r: usize) {
        for i in 0..p {
            let out_row = &mut out[i * r..(i + 1) * r];
            for k in 0..q {
                let aik = a[i * q + k];
                if aik == S::zero() {
                    continue;
                }
                let b_row = &b[k * r..(k + 1) * r];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bv;
                }
            }
        }
    }

    /// `out[p×q] += g[p×r] · b[q×r]ᵀ`.
    pub fn matmul_nt<S: Scalar>(g: &[S], b: &[S], out: &mut [S], p: usize, q: usize, r: usize) {
        for i in 0..p {
            let g_row = &g[i * r..(i + 1) * r];
            for k in 0..q {
                let b_row = &b[k * r..(k + 1) * r];
                let mut acc = S::zero();
                for (&x, &y) in g_row.iter().zip(b_row) {
                    acc += x * y;
                }
                out[i * q + k] += acc;
            }
        }
    }

    /// `out[q×r] += a[p×q]ᵀ · g[p×r]`.
    pub fn matmul_tn<S: Scalar>(a: &[S], g: &[S], out: &mut [S], p: usize, q: usize, r: usize) {
        for i in 0..p {
            let g_row = &g[i * r..(i + 1) * r];
            for k in 0..q {
                let aik = a[i * q + k];
                if aik == S::zero() {
                    continue;
                }
                let out_row = &mut out[k * r..(k + 1) * r];
                for (o, &gv) in out_row.iter_mut().zip(g_row) {
                    *o += aik * gv;
                }
            }
        }
    }

    pub fn softmax_in_place<S: Scalar>(row: &mut [S]) {
        let max = row.iter().fold(S::neg_infinity(), |m, &x| m.max(x));
        let mut sum = S::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }

    /// Logistic function clamped into the open unit interval.
    pub fn sigmoid<S: Scalar>(x: S) -> S {
        let y = if x >= S::zero() {
            S::one() / (S::one() + (-x).exp())
        } else {
            let e = x.exp();
            e / (S::one() + e)
        };
        y.max(S::min_positive_value()).min(S::below_one())
    }

    const GELU_C: f64 = 0.044715;

    /// Tanh approximation of GELU.
    pub fn gelu<S: Scalar>(x: S) -> S {
        let k = S::of((2.0 / std::f64::consts::PI).sqrt());
        let half = S::of(0.5);
        half * x * (S::one() + (k * (x + S::of(GELU_C) * x * x * x)).tanh())
    }

    pub fn gelu_grad<S: Scalar>(x: S) -> S {
        let k = S::of((2.0 / std::f64::consts::PI).sqrt());
        let c = S::of(GELU_C);
        let half = S::of(0.5);
        let u = k * (x + c * x * x * x);
        let t = u.tanh();
        let du = k * (S::one() + S::of(3.0) * c * x * x);
        half * (S::one() + t) + half * x * (S::one() - t * t) * du
    }
}
