use super::matrix::{Matrix, Scalar};
use crate::error::{Error, Result};

/// A named trainable tensor and its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Scalar = f32> {
    pub name: String,
    pub value: Matrix<T>,
    pub grad: Matrix<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Matrix<T>) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::ZERO);
    }

    /// Adds `g` into the gradient buffer.
    pub fn accumulate(&mut self, g: &Matrix<T>) -> Result<()> {
        self.grad.add_scaled(g, T::ONE)
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Anything that owns an ordered set of parameters.
///
/// The order returned by `params` and `params_mut` must agree; gradient
/// checks and checkpoints rely on it.
pub trait ParamSet<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

impl<T: Scalar> ParamSet<T> for Vec<Param<T>> {
    fn params(&self) -> Vec<&Param<T>> {
        self.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.iter_mut().collect()
    }
}

impl<T: Scalar> ParamSet<T> for Param<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![self]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![self]
    }
}

/// Plain SGD: `value -= eta * grad` for every entry of every parameter.
///
/// All gradients are validated before any value is touched, so a non-finite
/// gradient leaves the whole set unchanged.
pub fn sgd_step<T: Scalar>(params: &mut [&mut Param<T>], eta: T) -> Result<()> {
    if let Some(bad) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::NonFinite {
            name: bad.name.clone(),
        });
    }
    for p in params.iter_mut() {
        let Param { value, grad, .. } = &mut **p;
        value.add_scaled(grad, -eta)?;
    }
    Ok(())
}

/// Applies [`sgd_step`] to every parameter of `set`.
pub fn sgd_step_set<T: Scalar, S: ParamSet<T> + ?Sized>(set: &mut S, eta: T) -> Result<()> {
    sgd_step(&mut set.params_mut(), eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(name: &str, v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new(name, Matrix::filled(1, 1, v));
        p.grad = Matrix::filled(1, 1, g);
        p
    }

    #[test]
    fn direct_rule() {
        let mut p = scalar("t", 1.0, 0.5);
        sgd_step(&mut [&mut p], 0.1).unwrap();
        assert!((p.value.get(0, 0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_is_fixed_point() {
        let mut p = scalar("t", 3.25, 0.0);
        sgd_step(&mut [&mut p], 0.7).unwrap();
        assert_eq!(p.value.get(0, 0), 3.25);
    }

    #[test]
    fn two_small_steps_equal_one_double_step() {
        let mut a = scalar("a", 0.75, 0.5);
        let mut b = a.clone();
        sgd_step(&mut [&mut a], 0.125).unwrap();
        sgd_step(&mut [&mut a], 0.125).unwrap();
        sgd_step(&mut [&mut b], 0.25).unwrap();
        // Both routes are exact in binary floating point for these values.
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn non_finite_grad_names_param_and_leaves_values() {
        let mut ok = scalar("ok", 1.0, 1.0);
        let mut bad = scalar("enc.w", 1.0, f64::NAN);
        let err = sgd_step(&mut [&mut ok, &mut bad], 0.1).unwrap_err();
        assert!(err.to_string().contains("enc.w"));
        assert_eq!(ok.value.get(0, 0), 1.0);
    }
}
