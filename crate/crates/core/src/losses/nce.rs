//! Noise-contrastive estimation over the minibatch candidate pool.
//!
//! For an anchor `a`, the data density of a candidate `s` is the softmax of
//! `aᵀs / τ` over every other row of the minibatch (both modalities). The
//! noise density is uniform over that same pool, and each set's negatives
//! play the role of the `N` noise draws.

use std::str::FromStr;

use super::contrastive::{dot64, log_sum_exp, ContrastiveSet, ContrastiveTerm, Projections, SampleRef};
use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numeric::{Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub n_noise: usize,
    pub noise_density: f64,
}

impl NoiseModel {
    pub fn new(n_noise: usize, noise_density: f64) -> Result<Self> {
        if n_noise == 0 {
            return Err(Error::Parameter("noise sample count must be >= 1".into()));
        }
        if !(noise_density > 0.0 && noise_density.is_finite()) {
            return Err(Error::NonFinite {
                name: format!("noise density {noise_density}"),
            });
        }
        Ok(Self {
            n_noise,
            noise_density,
        })
    }

    /// Uniform noise over a pool of `pool_size` candidates.
    pub fn uniform(n_noise: usize, pool_size: usize) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::Parameter("empty candidate pool".into()));
        }
        Self::new(n_noise, 1.0 / pool_size as f64)
    }

    fn log_mass(&self) -> f64 {
        (self.n_noise as f64 * self.noise_density).ln()
    }
}

/// Posterior that `s` came from the data distribution:
/// `p_J / (p_J + N · p_N)`.
pub fn nce_posterior(data_density: f64, noise: &NoiseModel) -> Result<f64> {
    if !(data_density > 0.0) || !data_density.is_finite() {
        return Err(Error::NonFinite {
            name: format!("data density {data_density}"),
        });
    }
    let noise_mass = noise.n_noise as f64 * noise.noise_density;
    Ok(data_density / (data_density + noise_mass))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NceForm {
    /// `−[log P(pos) + Σᵢ log(1 − P(nᵢ))]`
    #[default]
    Log,
    /// `−[P(pos) + Σᵢ (1 − P(nᵢ))]`, without logarithms.
    Literal,
}

impl FromStr for NceForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Self::Log),
            "literal" => Ok(Self::Literal),
            _ => Err(Error::Config(format!("unknown NCE form `{s}` (log|literal)"))),
        }
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// NCE objective averaged over sets. Returns zero with `empty = true` when
/// `sets` is empty.
pub fn nce_loss<T: Scalar>(
    sets: &[ContrastiveSet],
    o_image: &Matrix<T>,
    o_text: &Matrix<T>,
    form: NceForm,
    temperature: f64,
) -> Result<ContrastiveTerm<T>> {
    if temperature <= 0.0 {
        return Err(Error::Parameter(format!("temperature must be > 0, got {temperature}")));
    }
    if sets.is_empty() {
        return Ok(ContrastiveTerm::zero(o_image, o_text));
    }
    let mut proj = Projections::new(o_image, o_text, sets)?;
    let all: Vec<SampleRef> = (0..o_image.rows())
        .map(|row| SampleRef { modality: Modality::Image, row })
        .chain((0..o_text.rows()).map(|row| SampleRef { modality: Modality::Text, row }))
        .collect();
    let n_sets = sets.len() as f64;
    let mut total = 0.0;
    for set in sets {
        let pool: Vec<SampleRef> = all.iter().copied().filter(|&r| r != set.anchor).collect();
        let noise = NoiseModel::uniform(set.negatives.len(), pool.len())?;
        let log_k = noise.log_mass();
        let a = proj.vector(set.anchor);
        let vecs: Vec<Vec<f64>> = pool.iter().map(|&r| proj.vector(r)).collect();
        let scores: Vec<f64> = vecs.iter().map(|v| dot64(&a, v) / temperature).collect();
        let lse = log_sum_exp(&scores);
        let index = |r: SampleRef| pool.iter().position(|&p| p == r).expect("set rows lie in pool");

        // Coefficient of log q_s for every referenced candidate.
        let mut coef = vec![0.0; pool.len()];
        let pi = index(set.positive);
        let log_q = scores[pi] - lse;
        // P = σ(log q − log K)
        let p = sigmoid(log_q - log_k);
        match form {
            NceForm::Log => {
                total += softplus(log_k - log_q);
                coef[pi] -= 1.0 - p;
            }
            NceForm::Literal => {
                total -= p;
                coef[pi] -= p * (1.0 - p);
            }
        }
        for &n in &set.negatives {
            let ni = index(n);
            let log_q = scores[ni] - lse;
            let p = sigmoid(log_q - log_k);
            match form {
                NceForm::Log => {
                    total += softplus(log_q - log_k);
                    coef[ni] += p;
                }
                NceForm::Literal => {
                    total -= 1.0 - p;
                    coef[ni] += p * (1.0 - p);
                }
            }
        }
        // d log q_s / d score_c = [c == s] − q_c
        let coef_sum: f64 = coef.iter().sum();
        for (c, r) in pool.iter().enumerate() {
            let q_c = (scores[c] - lse).exp();
            let d_score = coef[c] - coef_sum * q_c;
            if d_score == 0.0 {
                continue;
            }
            let w = d_score / temperature / n_sets;
            proj.add_grad(set.anchor, w, &vecs[c]);
            proj.add_grad(*r, w, &a);
        }
    }
    proj.finish(total / n_sets, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_input, max_relative_error};

    #[test]
    fn equal_densities() {
        let n1 = NoiseModel::new(1, 0.25).unwrap();
        assert_eq!(nce_posterior(0.25, &n1).unwrap(), 0.5);
        let n4 = NoiseModel::new(4, 0.25).unwrap();
        assert!((nce_posterior(0.25, &n4).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn posterior_limit() {
        let noise = NoiseModel::new(1, 1.0).unwrap();
        let p = nce_posterior(1e9, &noise).unwrap();
        assert!(p > 1.0 - 1e-8 && p < 1.0);
    }

    #[test]
    fn nonpositive_density_rejected() {
        let noise = NoiseModel::new(1, 1.0).unwrap();
        assert!(nce_posterior(0.0, &noise).is_err());
        assert!(nce_posterior(-1.0, &noise).is_err());
        assert!(NoiseModel::new(1, 0.0).is_err());
    }

    // Two-row pool (anchor excluded) with equal scores: q = 1/2 for each
    // candidate, p_N = 1/2 and N = 1, so every posterior is exactly 1/2.
    fn half_half() -> (Vec<ContrastiveSet>, Matrix<f64>, Matrix<f64>) {
        let o_image = Matrix::from_rows(&[[1.0f64, 0.0], [1.0, 0.0]]).unwrap();
        let o_text = Matrix::from_rows(&[[1.0f64, 0.0]]).unwrap();
        let sets = vec![ContrastiveSet {
            anchor: SampleRef { modality: Modality::Image, row: 0 },
            positive: SampleRef { modality: Modality::Image, row: 1 },
            negatives: vec![SampleRef { modality: Modality::Text, row: 0 }],
        }];
        (sets, o_image, o_text)
    }

    #[test]
    fn log_form_at_half_posteriors() {
        let (sets, oi, ot) = half_half();
        let t = nce_loss(&sets, &oi, &ot, NceForm::Log, 1.0).unwrap();
        assert!((t.value - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((t.value - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn literal_form_at_half_posteriors() {
        let (sets, oi, ot) = half_half();
        let t = nce_loss(&sets, &oi, &ot, NceForm::Literal, 1.0).unwrap();
        assert!((t.value + 1.0).abs() < 1e-12);
    }

    fn fd(form: NceForm) {
        let oi = Matrix::from_fn(4, 3, |r, c| ((r * 3 + c * 5) % 7) as f64 * 0.2 - 0.5);
        let ot = Matrix::from_fn(3, 3, |r, c| ((r * 2 + c) % 5) as f64 * 0.3 - 0.4);
        let img = |row| SampleRef { modality: Modality::Image, row };
        let txt = |row| SampleRef { modality: Modality::Text, row };
        let sets = vec![
            ContrastiveSet { anchor: img(0), positive: img(1), negatives: vec![img(2), txt(2), txt(0)] },
            ContrastiveSet { anchor: txt(1), positive: txt(2), negatives: vec![img(3), img(3)] },
        ];
        let t = nce_loss(&sets, &oi, &ot, form, 0.9).unwrap();
        let ni = finite_diff_input(&oi, 1e-5, |m| nce_loss(&sets, m, &ot, form, 0.9).unwrap().value);
        let nt = finite_diff_input(&ot, 1e-5, |m| nce_loss(&sets, &oi, m, form, 0.9).unwrap().value);
        assert!(max_relative_error(&t.grad_image, &ni) < 1e-6);
        assert!(max_relative_error(&t.grad_text, &nt) < 1e-6);
    }

    #[test]
    fn log_form_gradient() {
        fd(NceForm::Log);
    }

    #[test]
    fn literal_form_gradient() {
        fd(NceForm::Literal);
    }
}
