//! Training objectives: reconstruction, cross-modal alignment, one-hot
//! regression in the joint space, and a contrastive term in either set form
//! or NCE form, combined by a weighted sum.

mod basic;
mod contrastive;
mod nce;

use std::str::FromStr;

pub use basic::{cross_modal_loss, recon_loss, supervised_loss, PairTerm, Term};
pub use contrastive::{
    batch_meta, contrastive_loss_setform, sample_contrastive_sets, ContrastiveSet,
    ContrastiveTerm, RowMeta, SampleRef, SamplingOutcome, ScoreMode, LITERAL_SCORE_FLOOR,
};
pub use nce::{nce_loss, nce_posterior, NceForm, NoiseModel};

use crate::error::{Error, Result};
use crate::model::{ForwardCache, OutputGrads};
use crate::numeric::{Matrix, Scalar};

/// Per-row reduction of the sum-form terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Divide by the minibatch size.
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    pub(crate) fn scale(self, rows: usize) -> f64 {
        match self {
            Reduction::Mean if rows > 0 => 1.0 / rows as f64,
            _ => 1.0,
        }
    }
}

impl FromStr for Reduction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            _ => Err(Error::Config(format!("unknown reduction `{s}` (mean|sum)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContrastiveVariant {
    SetForm,
    #[default]
    Nce,
}

impl FromStr for ContrastiveVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "setform" => Ok(Self::SetForm),
            "nce" => Ok(Self::Nce),
            _ => Err(Error::Config(format!("unknown contrastive variant `{s}` (setform|nce)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_s: f64,
    pub lambda_m: f64,
    pub lambda_c: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_r: 1.0,
            lambda_s: 1.0,
            lambda_m: 1.0,
            lambda_c: 0.1,
        }
    }
}

impl LossWeights {
    pub fn new(lambda_r: f64, lambda_s: f64, lambda_m: f64, lambda_c: f64) -> Result<Self> {
        let w = Self {
            lambda_r,
            lambda_s,
            lambda_m,
            lambda_c,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_r, self.lambda_s, self.lambda_m, self.lambda_c];
        if all.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        if all.iter().all(|&l| l == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            lambda_r: self.lambda_r * k,
            lambda_s: self.lambda_s * k,
            lambda_m: self.lambda_m * k,
            lambda_c: self.lambda_c * k,
        }
    }
}

/// Everything that shapes the objective apart from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub reduction: Reduction,
    pub variant: ContrastiveVariant,
    pub score_mode: ScoreMode,
    pub nce_form: NceForm,
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            reduction: Reduction::Mean,
            variant: ContrastiveVariant::Nce,
            score_mode: ScoreMode::Exp,
            nce_form: NceForm::Log,
            temperature: 1.0,
        }
    }
}

/// Unweighted component values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComponentValues {
    pub l_r: f64,
    pub l_s: f64,
    pub l_m: f64,
    pub l_c: f64,
}

impl ComponentValues {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.lambda_r * self.l_r + w.lambda_s * self.l_s + w.lambda_m * self.l_m + w.lambda_c * self.l_c
    }
}

/// Component losses with their own gradients, before weighting.
#[derive(Debug, Clone)]
pub struct ComponentLosses<T: Scalar> {
    pub recon: PairTerm<T>,
    /// `None` when the minibatch is not index-aligned.
    pub cross: Option<PairTerm<T>>,
    pub sup_image: Term<T>,
    pub sup_text: Term<T>,
    pub contrastive: ContrastiveTerm<T>,
    pub skipped_anchors: usize,
}

impl<T: Scalar> ComponentLosses<T> {
    pub fn values(&self) -> ComponentValues {
        ComponentValues {
            l_r: self.recon.value,
            l_s: self.sup_image.value + self.sup_text.value,
            l_m: self.cross.as_ref().map_or(0.0, |c| c.value),
            l_c: self.contrastive.value,
        }
    }
}

/// Weighted objective and its gradients w.r.t. the model outputs.
#[derive(Debug, Clone)]
pub struct LossBreakdown<T: Scalar> {
    pub values: ComponentValues,
    pub total: f64,
    pub grads: OutputGrads<T>,
    pub skipped_anchors: usize,
    pub clamped: usize,
    pub contrastive_empty: bool,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn is_finite(&self) -> bool {
        let v = &self.values;
        [v.l_r, v.l_s, v.l_m, v.l_c, self.total].iter().all(|x| x.is_finite())
    }

    /// First non-finite component name, if any.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        let v = &self.values;
        [("l_r", v.l_r), ("l_s", v.l_s), ("l_m", v.l_m), ("l_c", v.l_c), ("total", self.total)]
            .into_iter()
            .find(|(_, x)| !x.is_finite())
            .map(|(n, _)| n)
    }
}

/// Weighted sum of the components; gradients aimed at the same tensor are
/// summed after scaling by their weight.
pub fn total_loss<T: Scalar>(parts: &ComponentLosses<T>, weights: &LossWeights) -> Result<LossBreakdown<T>> {
    let values = parts.values();
    let scaled = |m: &Matrix<T>, k: f64| {
        let mut out = m.clone();
        out.scale(T::from_f64(k));
        out
    };
    let mut o_image = scaled(&parts.sup_image.grad, weights.lambda_s);
    let mut o_text = scaled(&parts.sup_text.grad, weights.lambda_s);
    if let Some(cross) = &parts.cross {
        o_image.add_scaled(&cross.grad_image, T::from_f64(weights.lambda_m))?;
        o_text.add_scaled(&cross.grad_text, T::from_f64(weights.lambda_m))?;
    }
    o_image.add_scaled(&parts.contrastive.grad_image, T::from_f64(weights.lambda_c))?;
    o_text.add_scaled(&parts.contrastive.grad_text, T::from_f64(weights.lambda_c))?;
    Ok(LossBreakdown {
        values,
        total: values.weighted(weights),
        grads: OutputGrads {
            o_image: Some(o_image),
            o_text: Some(o_text),
            x_hat_image: Some(scaled(&parts.recon.grad_image, weights.lambda_r)),
            x_hat_text: Some(scaled(&parts.recon.grad_text, weights.lambda_r)),
        },
        skipped_anchors: parts.skipped_anchors,
        clamped: parts.contrastive.clamped,
        contrastive_empty: parts.contrastive.empty,
    })
}

/// Evaluates every component on one forward pass.
///
/// `paired` states that image row `k` and text row `k` form a genuine pair;
/// without it the cross-modal term is skipped and must carry zero weight.
pub fn component_losses<T: Scalar>(
    cache: &ForwardCache<T>,
    labels_image: &[usize],
    labels_text: &[usize],
    sampling: &SamplingOutcome,
    paired: bool,
    cfg: &LossConfig,
) -> Result<ComponentLosses<T>> {
    let num_classes = cache.image.o.cols();
    let recon = recon_loss(
        &cache.image.x_hat,
        &cache.image.x,
        &cache.text.x_hat,
        &cache.text.x,
        cfg.reduction,
    )?;
    let cross = if paired {
        Some(cross_modal_loss(&cache.text.o, &cache.image.o, cfg.reduction)?)
    } else if cfg.weights.lambda_m > 0.0 {
        return Err(Error::Config(
            "cross-modal weight requires paired minibatches".into(),
        ));
    } else {
        None
    };
    let sup_image = supervised_loss(&cache.image.o, labels_image, num_classes, cfg.reduction)?;
    let sup_text = supervised_loss(&cache.text.o, labels_text, num_classes, cfg.reduction)?;
    let contrastive = match cfg.variant {
        ContrastiveVariant::SetForm => contrastive_loss_setform(
            &sampling.sets,
            &cache.image.o,
            &cache.text.o,
            cfg.score_mode,
            cfg.temperature,
        )?,
        ContrastiveVariant::Nce => nce_loss(
            &sampling.sets,
            &cache.image.o,
            &cache.text.o,
            cfg.nce_form,
            cfg.temperature,
        )?,
    };
    Ok(ComponentLosses {
        recon,
        cross,
        sup_image,
        sup_text,
        contrastive,
        skipped_anchors: sampling.skipped_anchors,
    })
}

/// [`component_losses`] followed by [`total_loss`].
pub fn compute_losses<T: Scalar>(
    cache: &ForwardCache<T>,
    labels_image: &[usize],
    labels_text: &[usize],
    sampling: &SamplingOutcome,
    paired: bool,
    cfg: &LossConfig,
) -> Result<LossBreakdown<T>> {
    let parts = component_losses(cache, labels_image, labels_text, sampling, paired, cfg)?;
    total_loss(&parts, &cfg.weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_sum_hand_value() {
        let v = ComponentValues { l_r: 2.0, l_s: 3.0, l_m: 4.0, l_c: 5.0 };
        let w = LossWeights::new(1.0, 0.5, 0.25, 0.1).unwrap();
        assert!((v.weighted(&w) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn single_term_and_homogeneity() {
        let v = ComponentValues { l_r: 1.25, l_s: 3.0, l_m: 4.0, l_c: 5.0 };
        let only_r = LossWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(v.weighted(&only_r), 1.25);
        let w = LossWeights::default();
        assert_eq!(v.weighted(&w.scaled(2.0)), 2.0 * v.weighted(&w));
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(f64::NAN, 1.0, 0.0, 0.0).is_err());
    }
}
