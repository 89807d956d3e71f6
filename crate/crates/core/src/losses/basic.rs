use super::Reduction;
use crate::data::one_hot;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Scalar};

/// A loss value with the gradient of one output tensor.
#[derive(Debug, Clone)]
pub struct Term<T: Scalar> {
    pub value: f64,
    pub grad: Matrix<T>,
}

/// A loss value touching one image tensor and one text tensor.
#[derive(Debug, Clone)]
pub struct PairTerm<T: Scalar> {
    pub value: f64,
    pub grad_image: Matrix<T>,
    pub grad_text: Matrix<T>,
}

/// `Σ_rows ‖pred − target‖²` scaled per `reduction`, and its gradient
/// `2·(pred − target)` with the same scaling.
fn squared_error<T: Scalar>(
    pred: &Matrix<T>,
    target: &Matrix<T>,
    reduction: Reduction,
    op: &'static str,
) -> Result<Term<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(op, pred.shape(), target.shape()));
    }
    let scale = reduction.scale(pred.rows());
    let mut value = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let d = p.to_f64() - t.to_f64();
        value += d * d;
        *g = T::from_f64(2.0 * d * scale);
    }
    Ok(Term {
        value: value * scale,
        grad,
    })
}

/// Reconstruction error summed over both modalities.
pub fn recon_loss<T: Scalar>(
    x_hat_image: &Matrix<T>,
    x_image: &Matrix<T>,
    x_hat_text: &Matrix<T>,
    x_text: &Matrix<T>,
    reduction: Reduction,
) -> Result<PairTerm<T>> {
    let img = squared_error(x_hat_image, x_image, reduction, "recon_loss(image)")?;
    let txt = squared_error(x_hat_text, x_text, reduction, "recon_loss(text)")?;
    Ok(PairTerm {
        value: img.value + txt.value,
        grad_image: img.grad,
        grad_text: txt.grad,
    })
}

/// `Σ_j ‖O_T^j − O_I^j‖²` over index-aligned pairs.
pub fn cross_modal_loss<T: Scalar>(
    o_text: &Matrix<T>,
    o_image: &Matrix<T>,
    reduction: Reduction,
) -> Result<PairTerm<T>> {
    if o_text.rows() != o_image.rows() {
        return Err(Error::Pairing(format!(
            "cross-modal loss needs aligned pairs, got {} text and {} image rows",
            o_text.rows(),
            o_image.rows()
        )));
    }
    let t = squared_error(o_text, o_image, reduction, "cross_modal_loss")?;
    let grad_image = t.grad.map(|v| -v);
    Ok(PairTerm {
        value: t.value,
        grad_image,
        grad_text: t.grad,
    })
}

/// `Σ_j ‖O^j − onehot(y^j)‖²` for one modality. Requires `O` to have
/// exactly `num_classes` columns.
pub fn supervised_loss<T: Scalar>(
    o: &Matrix<T>,
    labels: &[usize],
    num_classes: usize,
    reduction: Reduction,
) -> Result<Term<T>> {
    if o.cols() != num_classes {
        return Err(Error::Config(format!(
            "joint dimension {} must equal class count {num_classes}",
            o.cols()
        )));
    }
    if labels.len() != o.rows() {
        return Err(Error::Pairing(format!(
            "{} projection rows for {} labels",
            o.rows(),
            labels.len()
        )));
    }
    let mut target = Matrix::zeros(o.rows(), num_classes);
    for (r, &y) in labels.iter().enumerate() {
        target.row_mut(r).copy_from_slice(&one_hot::<T>(y, num_classes)?);
    }
    squared_error(o, &target, reduction, "supervised_loss")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_input;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn recon_exact_is_zero() {
        let x = m(&[&[0.3, -1.0], &[2.0, 0.5]]);
        let t = m(&[&[1.0]]);
        let l = recon_loss(&x, &x, &t, &t, Reduction::Sum).unwrap();
        assert_eq!(l.value, 0.0);
    }

    #[test]
    fn recon_direct_value() {
        let x = m(&[&[0.0, 0.0]]);
        let x_hat = m(&[&[1.0, 1.0]]);
        let empty = Matrix::<f64>::zeros(0, 3);
        let l = recon_loss(&x_hat, &x, &empty, &empty, Reduction::Sum).unwrap();
        assert_eq!(l.value, 2.0);
        assert_eq!(l.grad_image.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn recon_mean_divides_by_batch() {
        let x = Matrix::<f64>::zeros(4, 2);
        let x_hat = Matrix::filled(4, 2, 1.0);
        let s = recon_loss(&x_hat, &x, &x_hat, &x, Reduction::Sum).unwrap();
        let mn = recon_loss(&x_hat, &x, &x_hat, &x, Reduction::Mean).unwrap();
        assert_eq!(s.value, 16.0);
        assert_eq!(mn.value, 4.0);
    }

    #[test]
    fn recon_gradient_matches_finite_differences() {
        let x = Matrix::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.3);
        let x_hat = Matrix::from_fn(3, 4, |r, c| (r * c) as f64 * 0.2 - 0.5);
        let l = recon_loss(&x_hat, &x, &x_hat, &x, Reduction::Mean).unwrap();
        let num = finite_diff_input(&x_hat, 1e-5, |p| {
            squared_error(p, &x, Reduction::Mean, "t").unwrap().value
        });
        assert!(crate::numeric::max_relative_error(&l.grad_image, &num) < 1e-6);
    }

    #[test]
    fn cross_modal_values_and_symmetry() {
        let a = m(&[&[1.0, 0.0]]);
        let b = m(&[&[0.0, 1.0]]);
        let l = cross_modal_loss(&a, &b, Reduction::Sum).unwrap();
        assert_eq!(l.value, 2.0);
        assert_eq!(cross_modal_loss(&a, &a, Reduction::Sum).unwrap().value, 0.0);
        let swapped = cross_modal_loss(&b, &a, Reduction::Sum).unwrap();
        assert_eq!(swapped.value, l.value);
        assert_eq!(swapped.grad_text, l.grad_text.map(|v| -v));
        assert_eq!(swapped.grad_image, l.grad_image.map(|v| -v));
    }

    #[test]
    fn cross_modal_row_mismatch_is_pairing_error() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(3, 3);
        assert!(matches!(
            cross_modal_loss(&a, &b, Reduction::Sum),
            Err(Error::Pairing(_))
        ));
    }

    #[test]
    fn supervised_values() {
        let o = m(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(supervised_loss(&o, &[1], 3, Reduction::Sum).unwrap().value, 0.0);
        let o = m(&[&[0.5, 0.5]]);
        let l = supervised_loss(&o, &[0], 2, Reduction::Sum).unwrap();
        assert_eq!(l.value, 0.5);
        assert_eq!(l.grad.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn supervised_errors() {
        let o = Matrix::<f64>::zeros(1, 3);
        assert!(matches!(
            supervised_loss(&o, &[3], 3, Reduction::Sum),
            Err(Error::Label { label: 3, classes: 3 })
        ));
        assert!(matches!(
            supervised_loss(&o, &[0], 4, Reduction::Sum),
            Err(Error::Config(_))
        ));
    }
}
