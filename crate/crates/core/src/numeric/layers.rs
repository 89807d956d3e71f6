//! Forward and backward primitives for fully connected networks.

use super::matrix::{Matrix, Scalar};
use super::param::{Param, ParamSet};
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `y = x·w + b`, with `b` broadcast over rows.
pub fn affine_forward<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::dim("affine_forward(bias)", w.shape(), b.shape()));
    }
    let mut y = x.matmul(w)?;
    let bias = b.as_slice();
    for r in 0..y.rows() {
        for (v, &bv) in y.row_mut(r).iter_mut().zip(bias) {
            *v += bv;
        }
    }
    Ok(y)
}

pub struct AffineGrads<T: Scalar> {
    pub x: Matrix<T>,
    pub w: Matrix<T>,
    pub b: Matrix<T>,
}

pub fn affine_backward<T: Scalar>(
    x: &Matrix<T>,
    w: &Matrix<T>,
    upstream: &Matrix<T>,
) -> Result<AffineGrads<T>> {
    if upstream.rows() != x.rows() || upstream.cols() != w.cols() {
        return Err(Error::dim(
            "affine_backward",
            (x.rows(), w.cols()),
            upstream.shape(),
        ));
    }
    Ok(AffineGrads {
        x: upstream.matmul_nt(w)?,
        w: x.matmul_tn(upstream)?,
        b: upstream.column_sums(),
    })
}

pub fn relu<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Passes `upstream` where `x > 0`; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(x: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
    if x.shape() != upstream.shape() {
        return Err(Error::dim("relu_backward", x.shape(), upstream.shape()));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(upstream.as_slice())
        .map(|(&xv, &g)| if xv > T::ZERO { g } else { T::ZERO })
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data)
}

/// Inverted dropout. Returns the output and the scaled mask, so that
/// `y = x ⊙ mask` and the backward pass is `upstream ⊙ mask`.
pub fn dropout<T: Scalar>(
    x: &Matrix<T>,
    p: f64,
    mode: Mode,
    rng: &mut Rng,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Parameter(format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), Matrix::filled(x.rows(), x.cols(), T::ONE)));
    }
    let keep = T::from_f64(1.0 / (1.0 - p));
    let mask = Matrix::from_fn(x.rows(), x.cols(), |_, _| {
        if rng.bernoulli(p) {
            T::ZERO
        } else {
            keep
        }
    });
    let y = x.hadamard(&mask)?;
    Ok((y, mask))
}

pub fn dropout_backward<T: Scalar>(upstream: &Matrix<T>, mask: &Matrix<T>) -> Result<Matrix<T>> {
    upstream.hadamard(mask)
}

/// Glorot-uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// A fully connected layer holding `weight: in×out` and `bias: 1×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T: Scalar = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = glorot_bound(fan_in, fan_out);
        let w = Matrix::from_fn(fan_in, fan_out, |_, _| T::from_f64(rng.uniform(-bound, bound)));
        Self {
            weight: Param::new(format!("{name}.weight"), w),
            bias: Param::new(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    pub fn from_parts(weight: Param<T>, bias: Param<T>) -> Result<Self> {
        if bias.value.rows() != 1 || bias.value.cols() != weight.value.cols() {
            return Err(Error::dim(
                "Linear::from_parts",
                weight.value.shape(),
                bias.value.shape(),
            ));
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        affine_forward(x, &self.weight.value, &self.bias.value)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. `x`.
    pub fn backward(&mut self, x: &Matrix<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
        let g = affine_backward(x, &self.weight.value, upstream)?;
        self.weight.accumulate(&g.w)?;
        self.bias.accumulate(&g.b)?;
        Ok(g.x)
    }
}

impl<T: Scalar> ParamSet<T> for Linear<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
