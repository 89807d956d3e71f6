//! Anchor/positive/negative sampling and the set-form contrastive loss.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numeric::{Matrix, Rng, Scalar};

/// Score floor used by [`ScoreMode::Literal`].
pub const LITERAL_SCORE_FLOOR: f64 = 1e-12;

/// A row of the minibatch projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleRef {
    pub modality: Modality,
    pub row: usize,
}

/// Class membership of one minibatch row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowMeta {
    pub sample: SampleRef,
    pub class: usize,
}

/// Image rows first, then text rows.
pub fn batch_meta(labels_image: &[usize], labels_text: &[usize]) -> Vec<RowMeta> {
    let tag = |modality| {
        move |(row, &class): (usize, &usize)| RowMeta {
            sample: SampleRef { modality, row },
            class,
        }
    };
    labels_image
        .iter()
        .enumerate()
        .map(tag(Modality::Image))
        .chain(labels_text.iter().enumerate().map(tag(Modality::Text)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveSet {
    pub anchor: SampleRef,
    pub positive: SampleRef,
    pub negatives: Vec<SampleRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SamplingOutcome {
    pub sets: Vec<ContrastiveSet>,
    /// Anchors with no other row of the same modality and class.
    pub skipped_anchors: usize,
    /// True when the batch holds a single class, so no negatives exist.
    pub single_class: bool,
}

/// Draws contrastive sets from one minibatch.
///
/// Each anchor gets a positive of the same modality and class (never itself)
/// and `n_negatives` rows of other classes from either modality, distinct
/// when enough exist and drawn with replacement otherwise. With
/// `sets_per_batch = None` every row is used once as anchor, in batch order;
/// otherwise that many anchors are drawn without replacement.
pub fn sample_contrastive_sets(
    meta: &[RowMeta],
    n_negatives: usize,
    sets_per_batch: Option<usize>,
    rng: &mut Rng,
) -> Result<SamplingOutcome> {
    if n_negatives == 0 {
        return Err(Error::Parameter("n_negatives must be >= 1".into()));
    }
    let mut out = SamplingOutcome::default();
    let Some(first) = meta.first() else {
        return Ok(out);
    };
    if meta.iter().all(|m| m.class == first.class) {
        out.single_class = true;
        return Ok(out);
    }
    let anchors: Vec<usize> = match sets_per_batch {
        None => (0..meta.len()).collect(),
        Some(k) => rng.sample_indices(meta.len(), k),
    };
    for ai in anchors {
        let anchor = meta[ai];
        let positives: Vec<usize> = (0..meta.len())
            .filter(|&j| {
                j != ai
                    && meta[j].class == anchor.class
                    && meta[j].sample.modality == anchor.sample.modality
            })
            .collect();
        if positives.is_empty() {
            out.skipped_anchors += 1;
            continue;
        }
        let positive = meta[positives[rng.below(positives.len())]].sample;
        let pool: Vec<usize> = (0..meta.len())
            .filter(|&j| meta[j].class != anchor.class)
            .collect();
        let negatives = if pool.len() >= n_negatives {
            rng.sample_indices(pool.len(), n_negatives)
                .into_iter()
                .map(|k| meta[pool[k]].sample)
                .collect()
        } else {
            (0..n_negatives)
                .map(|_| meta[pool[rng.below(pool.len())]].sample)
                .collect()
        };
        out.sets.push(ContrastiveSet {
            anchor: anchor.sample,
            positive,
            negatives,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Softmax over exponentiated, temperature-scaled dot products.
    #[default]
    Exp,
    /// Raw dot products in the ratio, floored at [`LITERAL_SCORE_FLOOR`].
    Literal,
}

impl FromStr for ScoreMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(Self::Exp),
            "literal" => Ok(Self::Literal),
            _ => Err(Error::Config(format!("unknown score mode `{s}` (exp|literal)"))),
        }
    }
}

/// Value and gradients of a contrastive objective.
#[derive(Debug, Clone)]
pub struct ContrastiveTerm<T: Scalar> {
    pub value: f64,
    pub grad_image: Matrix<T>,
    pub grad_text: Matrix<T>,
    /// Scores raised to the floor (literal modes only).
    pub clamped: usize,
    /// No sets were available; value and gradients are zero.
    pub empty: bool,
}

impl<T: Scalar> ContrastiveTerm<T> {
    pub(crate) fn zero(o_image: &Matrix<T>, o_text: &Matrix<T>) -> Self {
        Self {
            value: 0.0,
            grad_image: Matrix::zeros(o_image.rows(), o_image.cols()),
            grad_text: Matrix::zeros(o_text.rows(), o_text.cols()),
            clamped: 0,
            empty: true,
        }
    }
}

/// Read access to both projection matrices plus `f64` gradient buffers.
pub(crate) struct Projections<'a, T: Scalar> {
    o_image: &'a Matrix<T>,
    o_text: &'a Matrix<T>,
    g_image: Vec<f64>,
    g_text: Vec<f64>,
    dim: usize,
}

impl<'a, T: Scalar> Projections<'a, T> {
    pub(crate) fn new(o_image: &'a Matrix<T>, o_text: &'a Matrix<T>, sets: &[ContrastiveSet]) -> Result<Self> {
        if o_image.cols() != o_text.cols() {
            return Err(Error::dim("contrastive projections", o_image.shape(), o_text.shape()));
        }
        let p = Self {
            o_image,
            o_text,
            g_image: vec![0.0; o_image.as_slice().len()],
            g_text: vec![0.0; o_text.as_slice().len()],
            dim: o_image.cols(),
        };
        for set in sets {
            for r in std::iter::once(&set.anchor)
                .chain(std::iter::once(&set.positive))
                .chain(&set.negatives)
            {
                let rows = p.matrix(r.modality).rows();
                if r.row >= rows {
                    return Err(Error::Contract(format!(
                        "{} row {} outside minibatch of {rows}",
                        r.modality, r.row
                    )));
                }
            }
        }
        Ok(p)
    }

    fn matrix(&self, m: Modality) -> &'a Matrix<T> {
        match m {
            Modality::Image => self.o_image,
            Modality::Text => self.o_text,
        }
    }

    pub(crate) fn vector(&self, r: SampleRef) -> Vec<f64> {
        self.matrix(r.modality).row(r.row).iter().map(|v| v.to_f64()).collect()
    }

    /// `grad[r] += coef * v`
    pub(crate) fn add_grad(&mut self, r: SampleRef, coef: f64, v: &[f64]) {
        let buf = match r.modality {
            Modality::Image => &mut self.g_image,
            Modality::Text => &mut self.g_text,
        };
        let start = r.row * self.dim;
        for (g, &x) in buf[start..start + self.dim].iter_mut().zip(v) {
            *g += coef * x;
        }
    }

    pub(crate) fn finish(self, value: f64, clamped: usize) -> Result<ContrastiveTerm<T>> {
        let conv = |m: &Matrix<T>, g: Vec<f64>| {
            Matrix::from_vec(m.rows(), m.cols(), g.into_iter().map(T::from_f64).collect())
        };
        Ok(ContrastiveTerm {
            value,
            grad_image: conv(self.o_image, self.g_image)?,
            grad_text: conv(self.o_text, self.g_text)?,
            clamped,
            empty: false,
        })
    }
}

pub(crate) fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean over sets of `−log(score(a,p) / (score(a,p) + Σ score(a,nᵢ)))`.
///
/// `Exp` uses `score = exp(aᵀs / temperature)`. `Literal` uses the raw dot
/// product `aᵀs` floored at [`LITERAL_SCORE_FLOOR`]; temperature is ignored
/// and floored scores receive no gradient.
pub fn contrastive_loss_setform<T: Scalar>(
    sets: &[ContrastiveSet],
    o_image: &Matrix<T>,
    o_text: &Matrix<T>,
    mode: ScoreMode,
    temperature: f64,
) -> Result<ContrastiveTerm<T>> {
    if temperature <= 0.0 {
        return Err(Error::Parameter(format!("temperature must be > 0, got {temperature}")));
    }
    if sets.is_empty() {
        return Ok(ContrastiveTerm::zero(o_image, o_text));
    }
    let mut proj = Projections::new(o_image, o_text, sets)?;
    let n_sets = sets.len() as f64;
    let mut total = 0.0;
    let mut clamped = 0;
    for set in sets {
        let a = proj.vector(set.anchor);
        let cands: Vec<SampleRef> = std::iter::once(set.positive)
            .chain(set.negatives.iter().copied())
            .collect();
        let vecs: Vec<Vec<f64>> = cands.iter().map(|&r| proj.vector(r)).collect();
        let raw: Vec<f64> = vecs.iter().map(|v| dot64(&a, v)).collect();
        // dL/d(aᵀc_k) for each candidate.
        let weights: Vec<f64> = match mode {
            ScoreMode::Exp => {
                let s: Vec<f64> = raw.iter().map(|r| r / temperature).collect();
                let lse = log_sum_exp(&s);
                total += lse - s[0];
                s.iter()
                    .enumerate()
                    .map(|(k, sk)| ((sk - lse).exp() - if k == 0 { 1.0 } else { 0.0 }) / temperature)
                    .collect()
            }
            ScoreMode::Literal => {
                let floored: Vec<f64> = raw.iter().map(|&r| r.max(LITERAL_SCORE_FLOOR)).collect();
                let active: Vec<bool> = raw.iter().map(|&r| r >= LITERAL_SCORE_FLOOR).collect();
                clamped += active.iter().filter(|&&x| !x).count();
                let d: f64 = floored.iter().sum();
                total += d.ln() - floored[0].ln();
                floored
                    .iter()
                    .enumerate()
                    .map(|(k, &r)| {
                        if !active[k] {
                            0.0
                        } else if k == 0 {
                            1.0 / d - 1.0 / r
                        } else {
                            1.0 / d
                        }
                    })
                    .collect()
            }
        };
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            proj.add_grad(set.anchor, w / n_sets, &vecs[k]);
            proj.add_grad(cands[k], w / n_sets, &a);
        }
    }
    proj.finish(total / n_sets, clamped)
}
