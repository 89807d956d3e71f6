//! Central finite differences as a gradient oracle.

use super::matrix::Matrix;
use super::param::ParamSet;

/// Denominator floor for [`relative_error`]. Entries whose analytic and
/// numeric values are both below this magnitude are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Central-difference gradient of `f` with respect to every entry of every
/// parameter of `set`, in `ParamSet::params` order.
///
/// `f` must be deterministic; each entry is restored after probing.
pub fn finite_diff_grad<S, F>(set: &mut S, epsilon: f64, mut f: F) -> Vec<Matrix<f64>>
where
    S: ParamSet<f64> + ?Sized,
    F: FnMut(&S) -> f64,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    let shapes: Vec<(usize, usize)> = set.params().iter().map(|p| p.value.shape()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (pi, &(rows, cols)) in shapes.iter().enumerate() {
        let mut g = Matrix::zeros(rows, cols);
        for k in 0..rows * cols {
            let orig = set.params_mut()[pi].value.as_slice()[k];
            set.params_mut()[pi].value.as_mut_slice()[k] = orig + epsilon;
            let plus = f(set);
            set.params_mut()[pi].value.as_mut_slice()[k] = orig - epsilon;
            let minus = f(set);
            set.params_mut()[pi].value.as_mut_slice()[k] = orig;
            g.as_mut_slice()[k] = (plus - minus) / (2.0 * epsilon);
        }
        out.push(g);
    }
    out
}

/// Central-difference derivative of a function of a free matrix input.
pub fn finite_diff_input<F>(x: &Matrix<f64>, epsilon: f64, mut f: F) -> Matrix<f64>
where
    F: FnMut(&Matrix<f64>) -> f64,
{
    let mut probe = x.clone();
    let mut g = Matrix::zeros(x.rows(), x.cols());
    for k in 0..x.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + epsilon;
        let plus = f(&probe);
        probe.as_mut_slice()[k] = orig - epsilon;
        let minus = f(&probe);
        probe.as_mut_slice()[k] = orig;
        g.as_mut_slice()[k] = (plus - minus) / (2.0 * epsilon);
    }
    g
}

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Largest entrywise [`relative_error`] between two equally shaped matrices.
pub fn max_relative_error(analytic: &Matrix<f64>, numeric: &Matrix<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .as_slice()
        .iter()
        .zip(numeric.as_slice())
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
