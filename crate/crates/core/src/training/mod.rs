//! The optimization loop: paired minibatches, loss assembly, backprop and
//! SGD, per-epoch reports with best-on-validation tracking, and the
//! second-stage classifier.

mod classifier;
mod report;

pub use classifier::{train_classifier, HeadConfig};
pub use report::{format_sig, EpochReport};

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::losses::{
    batch_meta, component_losses, sample_contrastive_sets, total_loss, ComponentValues,
    LossBreakdown, LossConfig,
};
use crate::model::{
    save_checkpoint, softmax_cross_entropy, Architecture, ClassifierHead, CobraModel,
    HeadArchitecture,
};
use crate::numeric::{sgd_step, Matrix, Mode, ParamSet, Rng, Scalar, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub epochs: usize,
    pub batch_image: usize,
    pub batch_text: usize,
    /// Iterations per epoch; `None` means `ceil(n_pairs / batch)`.
    pub iters_per_epoch: Option<usize>,
    pub loss: LossConfig,
    pub n_negatives: usize,
    /// Contrastive sets per step; `None` uses every eligible row as anchor.
    pub sets_per_batch: Option<usize>,
    pub seed: u64,
    /// Write `epoch_<i>.ckpt` every this many epochs (needs an output dir).
    pub checkpoint_every: Option<usize>,
    /// Draw one index list for both modalities. Must hold when `lambda_m > 0`.
    pub paired: bool,
    /// Train the fusion classifier jointly, back-propagating into the model.
    pub joint_head: bool,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            epochs: 200,
            batch_image: 128,
            batch_text: 128,
            iters_per_epoch: None,
            loss: LossConfig::default(),
            n_negatives: 10,
            sets_per_batch: None,
            seed: 0,
            checkpoint_every: None,
            paired: true,
            joint_head: false,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_image == 0 || self.batch_text == 0 {
            return Err(Error::Config("batch sizes must be >= 1".into()));
        }
        if self.n_negatives == 0 {
            return Err(Error::Config("negatives must be >= 1".into()));
        }
        if !(self.loss.temperature > 0.0) {
            return Err(Error::Config("temperature must be > 0".into()));
        }
        self.loss.weights.validate()?;
        if self.needs_pairs() && self.batch_image != self.batch_text {
            return Err(Error::Config(format!(
                "paired sampling needs equal batch sizes, got image {} text {}",
                self.batch_image, self.batch_text
            )));
        }
        if !self.paired && self.loss.weights.lambda_m > 0.0 {
            return Err(Error::Config(
                "independent minibatches are only allowed when lambda_m = 0".into(),
            ));
        }
        Ok(())
    }

    /// Whether minibatches share one index list across modalities.
    pub fn needs_pairs(&self) -> bool {
        self.paired || self.loss.weights.lambda_m > 0.0 || self.joint_head
    }

    pub fn iterations(&self, n_pairs: usize) -> usize {
        self.iters_per_epoch
            .unwrap_or_else(|| n_pairs.div_ceil(self.batch_image.min(n_pairs).max(1)))
            .max(1)
    }
}

/// Dataset features converted once to the compute precision.
#[derive(Debug, Clone)]
pub struct PairTensors<T: Scalar> {
    pub image: Matrix<T>,
    pub text: Matrix<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> PairTensors<T> {
    pub fn new(data: &PairedDataset) -> Self {
        Self {
            image: data.image.features.cast(),
            text: data.text.features.cast(),
            labels: data.labels().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Minibatch<T: Scalar> {
    pub image_indices: Vec<usize>,
    pub text_indices: Vec<usize>,
    pub x_image: Matrix<T>,
    pub y_image: Vec<usize>,
    pub x_text: Matrix<T>,
    pub y_text: Vec<usize>,
    pub paired: bool,
}

impl<T: Scalar> Minibatch<T> {
    fn gather(data: &PairTensors<T>, image_indices: Vec<usize>, text_indices: Vec<usize>, paired: bool) -> Self {
        Self {
            x_image: data.image.select_rows(&image_indices),
            y_image: image_indices.iter().map(|&i| data.labels[i]).collect(),
            x_text: data.text.select_rows(&text_indices),
            y_text: text_indices.iter().map(|&i| data.labels[i]).collect(),
            image_indices,
            text_indices,
            paired,
        }
    }

    /// The whole dataset as one aligned batch, in order.
    pub fn all(data: &PairTensors<T>) -> Self {
        let idx: Vec<usize> = (0..data.len()).collect();
        Self::gather(data, idx.clone(), idx, true)
    }

    pub fn range(data: &PairTensors<T>, start: usize, end: usize) -> Self {
        let idx: Vec<usize> = (start..end).collect();
        Self::gather(data, idx.clone(), idx, true)
    }
}

fn clip_batch(b: usize, n: usize) -> usize {
    if b > n {
        log::warn!("batch size {b} exceeds {n} pairs; clipping to {n}");
    }
    b.min(n)
}

/// `b` distinct pair indices shared by both modalities.
pub fn sample_minibatch<T: Scalar>(data: &PairTensors<T>, b: usize, rng: &mut Rng) -> Result<Minibatch<T>> {
    if data.is_empty() || b == 0 {
        return Err(Error::Config("minibatch needs n_pairs >= 1 and b >= 1".into()));
    }
    let idx = rng.sample_indices(data.len(), clip_batch(b, data.len()));
    Ok(Minibatch::gather(data, idx.clone(), idx, true))
}

/// Separate index lists per modality, for runs without the cross-modal term.
pub fn sample_independent<T: Scalar>(
    data: &PairTensors<T>,
    b_image: usize,
    b_text: usize,
    rng: &mut Rng,
) -> Result<Minibatch<T>> {
    if data.is_empty() || b_image == 0 || b_text == 0 {
        return Err(Error::Config("minibatch needs n_pairs >= 1 and b >= 1".into()));
    }
    let n = data.len();
    let text = rng.sample_indices(n, clip_batch(b_text, n));
    let image = rng.sample_indices(n, clip_batch(b_image, n));
    Ok(Minibatch::gather(data, image, text, false))
}

#[derive(Debug, Clone)]
pub struct TrainState<T: Scalar> {
    pub model: CobraModel<T>,
    /// Present only with `joint_head`.
    pub head: Option<ClassifierHead<T>>,
    pub config: TrainConfig,
    pub epoch: usize,
    pub step: usize,
    rng_minibatch: Rng,
    rng_negatives: Rng,
    rng_dropout: Rng,
}

/// Outcome of one optimization step.
#[derive(Debug, Clone)]
pub struct StepReport<T: Scalar> {
    pub loss: LossBreakdown<T>,
    /// Joint-head cross-entropy, when enabled.
    pub head_ce: Option<f64>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(image_dim: usize, text_dim: usize, num_classes: usize, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = CobraModel::new(image_dim, text_dim, num_classes, &config.architecture, config.seed)?;
        Self::with_model(model, config)
    }

    pub fn with_model(model: CobraModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let head = if config.joint_head {
            Some(ClassifierHead::new(
                model.joint_dim(),
                model.num_classes(),
                &HeadArchitecture::default(),
                config.seed,
            )?)
        } else {
            None
        };
        let seed = config.seed;
        Ok(Self {
            model,
            head,
            config,
            epoch: 0,
            step: 0,
            rng_minibatch: Rng::stream(seed, Stream::Minibatch),
            rng_negatives: Rng::stream(seed, Stream::Negatives),
            rng_dropout: Rng::stream(seed, Stream::Dropout),
        })
    }

    pub fn next_minibatch(&mut self, data: &PairTensors<T>) -> Result<Minibatch<T>> {
        if self.config.needs_pairs() {
            sample_minibatch(data, self.config.batch_image, &mut self.rng_minibatch)
        } else {
            sample_independent(data, self.config.batch_image, self.config.batch_text, &mut self.rng_minibatch)
        }
    }

    /// Forward pass, losses, backward pass and one SGD update. Returns the
    /// losses measured before the update.
    pub fn train_step(&mut self, batch: &Minibatch<T>) -> Result<StepReport<T>> {
        let cfg = &self.config;
        let cache = self.model.forward_full(&batch.x_image, &batch.x_text)?;
        let meta = batch_meta(&batch.y_image, &batch.y_text);
        let sampling = sample_contrastive_sets(&meta, cfg.n_negatives, cfg.sets_per_batch, &mut self.rng_negatives)?;
        let parts = component_losses(&cache, &batch.y_image, &batch.y_text, &sampling, batch.paired, &cfg.loss)?;
        let mut loss = total_loss(&parts, &cfg.loss.weights)?;

        let halt = |component: &str, step: usize, epoch: usize| Error::NumericHalt {
            epoch,
            step,
            component: component.to_owned(),
        };
        if let Some(c) = loss.non_finite_component() {
            return Err(halt(c, self.step, self.epoch));
        }

        let mut head_ce = None;
        if let Some(head) = self.head.as_mut() {
            let (logits, hcache) =
                head.forward_cached(&cache.text.o, &cache.image.o, Mode::Train, &mut self.rng_dropout)?;
            let (ce, g_logits) = softmax_cross_entropy(&logits, &batch.y_image)?;
            if !ce.is_finite() {
                return Err(halt("head_ce", self.step, self.epoch));
            }
            head.zero_grads();
            let (g_text, g_image) = head.backward(&hcache, &g_logits)?;
            loss.grads.o_text.as_mut().expect("total_loss fills grads").add_scaled(&g_text, T::ONE)?;
            loss.grads.o_image.as_mut().expect("total_loss fills grads").add_scaled(&g_image, T::ONE)?;
            loss.total += ce;
            head_ce = Some(ce);
        }

        self.model.backward_full(&cache, &loss.grads)?;
        let eta = T::from_f64(self.config.eta);
        let mut params = self.model.params_mut();
        if let Some(head) = self.head.as_mut() {
            params.extend(head.params_mut());
        }
        sgd_step(&mut params, eta).map_err(|e| match e {
            Error::NonFinite { name } => halt(&format!("gradient of {name}"), self.step, self.epoch),
            other => other,
        })?;
        self.step += 1;
        Ok(StepReport { loss, head_ce })
    }
}

/// Component means of the objective over a dataset, in eval mode, with
/// contrastive sets drawn from a fixed validation stream.
pub fn evaluate_loss<T: Scalar>(
    model: &CobraModel<T>,
    data: &PairTensors<T>,
    config: &TrainConfig,
) -> Result<(ComponentValues, f64)> {
    let mut rng = Rng::stream(config.seed, Stream::Validation);
    let b = config.batch_image.max(1);
    let mut acc = ComponentValues::default();
    let mut total = 0.0;
    let n = data.len();
    let mut start = 0;
    while start < n {
        let end = (start + b).min(n);
        let batch = Minibatch::range(data, start, end);
        let cache = model.forward_full(&batch.x_image, &batch.x_text)?;
        let meta = batch_meta(&batch.y_image, &batch.y_text);
        let sampling = sample_contrastive_sets(&meta, config.n_negatives, config.sets_per_batch, &mut rng)?;
        let parts = component_losses(&cache, &batch.y_image, &batch.y_text, &sampling, true, &config.loss)?;
        let v = parts.values();
        let w = (end - start) as f64 / n as f64;
        acc.l_r += w * v.l_r;
        acc.l_s += w * v.l_s;
        acc.l_m += w * v.l_m;
        acc.l_c += w * v.l_c;
        total += w * v.weighted(&config.loss.weights);
        start = end;
    }
    Ok((acc, total))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub model: CobraModel<T>,
    pub head: Option<ClassifierHead<T>>,
    pub reports: Vec<EpochReport>,
    pub best_model: CobraModel<T>,
    pub best_epoch: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
    pub best_checkpoint: Option<PathBuf>,
}

fn check_compatible(train: &PairedDataset, val: &PairedDataset) -> Result<()> {
    let sig = |p: &PairedDataset| (p.image_dim(), p.text_dim(), p.num_classes());
    if sig(train) != sig(val) {
        return Err(Error::Config(format!(
            "train (d_I, d_T, C) = {:?} but validation = {:?}",
            sig(train),
            sig(val)
        )));
    }
    Ok(())
}

/// Runs `epochs × iterations` SGD steps.
///
/// `on_epoch` sees each report as soon as the epoch ends. With `out_dir`,
/// `best.ckpt` tracks the lowest validation loss and periodic checkpoints
/// follow `checkpoint_every`.
pub fn train<T: Scalar>(
    train_data: &PairedDataset,
    val_data: &PairedDataset,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochReport),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    check_compatible(train_data, val_data)?;
    let mut state = TrainState::<T>::new(
        train_data.image_dim(),
        train_data.text_dim(),
        train_data.num_classes(),
        config.clone(),
    )?;
    let tensors = PairTensors::<T>::new(train_data);
    let val = PairTensors::<T>::new(val_data);
    let iterations = config.iterations(tensors.len());

    let (_, initial_val_loss) = evaluate_loss(&state.model, &val, config)?;
    let mut best_val_loss = initial_val_loss;
    let mut best_model = state.model.clone();
    let mut best_epoch = 0;
    let best_path = out_dir.map(|d| d.join("best.ckpt"));
    if let Some(p) = &best_path {
        save_checkpoint(&best_model, p)?;
    }

    let mut reports = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        state.epoch = epoch;
        let started = Instant::now();
        let mut sum = ComponentValues::default();
        let mut total = 0.0;
        let mut skipped = 0;
        let mut clamped = 0;
        for _ in 0..iterations {
            let batch = state.next_minibatch(&tensors)?;
            let step = state.train_step(&batch)?;
            let v = step.loss.values;
            sum.l_r += v.l_r;
            sum.l_s += v.l_s;
            sum.l_m += v.l_m;
            sum.l_c += v.l_c;
            total += step.loss.total;
            skipped += step.loss.skipped_anchors;
            clamped += step.loss.clamped;
        }
        let k = iterations as f64;
        let (_, val_total) = evaluate_loss(&state.model, &val, config)?;
        if !val_total.is_finite() {
            return Err(Error::NumericHalt {
                epoch,
                step: state.step,
                component: "validation loss".into(),
            });
        }
        if val_total < best_val_loss {
            best_val_loss = val_total;
            best_model = state.model.clone();
            best_epoch = epoch;
            if let Some(p) = &best_path {
                save_checkpoint(&best_model, p)?;
            }
        }
        if let (Some(every), Some(dir)) = (config.checkpoint_every, out_dir) {
            if every > 0 && epoch % every == 0 {
                save_checkpoint(&state.model, &dir.join(format!("epoch_{epoch}.ckpt")))?;
            }
        }
        let report = EpochReport {
            epoch,
            mean: ComponentValues {
                l_r: sum.l_r / k,
                l_s: sum.l_s / k,
                l_m: sum.l_m / k,
                l_c: sum.l_c / k,
            },
            total: total / k,
            val_total,
            skipped,
            clamped,
            secs: started.elapsed().as_secs_f64(),
        };
        on_epoch(&report);
        reports.push(report);
    }

    Ok(TrainOutcome {
        model: state.model,
        head: state.head,
        reports,
        best_model,
        best_epoch,
        initial_val_loss,
        best_val_loss,
        best_checkpoint: best_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, SyntheticSpec};
    use crate::eval::classification_accuracy;

    fn data() -> PairedDataset {
        generate_synthetic(&SyntheticSpec {
            classes: 3,
            image_dim: 6,
            text_dim: 5,
            per_class: 20,
            latent_dim: 4,
            separation: 1.5,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 4,
            batch_image: 16,
            batch_text: 16,
            n_negatives: 4,
            architecture: Architecture::tiny(16, 8),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn iterations_per_epoch() {
        let c = TrainConfig::default();
        assert_eq!(c.iterations(1600), 13);
        assert_eq!(c.iterations(128), 1);
        assert_eq!(c.iterations(50), 1);
        assert_eq!(TrainConfig { iters_per_epoch: Some(3), ..c }.iterations(1600), 3);
    }

    #[test]
    fn paired_batches_share_indices() {
        let t = PairTensors::<f32>::new(&data());
        let b = sample_minibatch(&t, 8, &mut Rng::new(0)).unwrap();
        assert_eq!(b.image_indices, b.text_indices);
        assert_eq!(b.y_image, b.y_text);
        let mut sorted = b.image_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 8);
        let big = sample_minibatch(&t, 1000, &mut Rng::new(0)).unwrap();
        assert_eq!(big.x_image.rows(), t.len());
    }

    #[test]
    fn independent_batches_need_zero_cross_weight() {
        let mut c = small_config();
        c.paired = false;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.loss.weights.lambda_m = 0.0;
        c.batch_text = 8;
        c.validate().unwrap();
        let t = PairTensors::<f32>::new(&data());
        let b = sample_independent(&t, 16, 8, &mut Rng::new(1)).unwrap();
        assert_eq!((b.x_image.rows(), b.x_text.rows()), (16, 8));
        assert!(!b.paired);
    }

    #[test]
    fn training_reduces_validation_loss() {
        let d = data();
        let (tr, va, _) = split(&d, [0.6, 0.2, 0.2], 0).unwrap();
        let mut seen = 0;
        let out = train::<f64>(&tr, &va, &small_config(), None, &mut |_| seen += 1).unwrap();
        assert_eq!(seen, 4);
        assert_eq!(out.reports.len(), 4);
        assert!(out.best_val_loss < out.initial_val_loss);
        assert!(out.best_epoch >= 1);
    }

    #[test]
    fn same_seed_same_model() {
        let d = data();
        let run = |seed| {
            let cfg = TrainConfig { seed, ..small_config() };
            train::<f32>(&d, &d, &cfg, None, &mut |_| {}).unwrap().model
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn divergence_halts() {
        let d = data();
        let cfg = TrainConfig { eta: 1e8, ..small_config() };
        match train::<f32>(&d, &d, &cfg, None, &mut |_| {}) {
            Err(Error::NumericHalt { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected a numeric halt, got {:?}", other.map(|o| o.reports.len())),
        }
    }

    #[test]
    fn writes_best_and_periodic_checkpoints() {
        let d = data();
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { checkpoint_every: Some(2), ..small_config() };
        let out = train::<f32>(&d, &d, &cfg, Some(dir.path()), &mut |_| {}).unwrap();
        assert!(dir.path().join("best.ckpt").exists());
        assert!(dir.path().join("epoch_2.ckpt").exists());
        assert!(dir.path().join("epoch_4.ckpt").exists());
        let best: CobraModel<f32> = crate::model::load_checkpoint(&dir.path().join("best.ckpt")).unwrap();
        assert_eq!(best.to_tensors(), out.best_model.to_tensors());
    }

    #[test]
    fn joint_head_trains() {
        let d = data();
        let cfg = TrainConfig { joint_head: true, epochs: 2, ..small_config() };
        let out = train::<f32>(&d, &d, &cfg, None, &mut |_| {}).unwrap();
        assert!(out.head.is_some());
    }

    #[test]
    fn two_stage_head_learns_separable_classes() {
        let d = data();
        let cfg = TrainConfig { epochs: 30, ..small_config() };
        let model = train::<f32>(&d, &d, &cfg, None, &mut |_| {}).unwrap().model;
        let before = model.clone();
        let head_cfg = HeadConfig {
            architecture: HeadArchitecture { hidden: vec![16], dropout: vec![0.1] },
            epochs: 60,
            batch: 16,
            ..HeadConfig::default()
        };
        let head = train_classifier(&model, &d, d.labels(), &head_cfg).unwrap();
        assert_eq!(model, before);
        let acc = classification_accuracy(&head, &model, &d, d.labels()).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
    }
}
