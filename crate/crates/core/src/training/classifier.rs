use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::eval::embed_pairs;
use crate::model::{softmax_cross_entropy, ClassifierHead, CobraModel, HeadArchitecture};
use crate::numeric::{sgd_step, Mode, ParamSet, Rng, Scalar, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub eta: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub architecture: HeadArchitecture,
    /// Number of task classes; `None` means `max(label) + 1`.
    pub num_task_classes: Option<usize>,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            epochs: 50,
            batch: 64,
            seed: 0,
            architecture: HeadArchitecture::default(),
            num_task_classes: None,
        }
    }
}

/// Trains a fusion classifier on frozen joint embeddings.
///
/// Embeddings are computed once in eval mode; the model is only borrowed, so
/// its parameters cannot change.
pub fn train_classifier<T: Scalar>(
    model: &CobraModel<T>,
    data: &PairedDataset,
    task_labels: &[usize],
    cfg: &HeadConfig,
) -> Result<ClassifierHead<T>> {
    if task_labels.len() != data.n_pairs() {
        return Err(Error::Config(format!(
            "{} task labels for {} pairs",
            task_labels.len(),
            data.n_pairs()
        )));
    }
    if task_labels.is_empty() {
        return Err(Error::Config("no training pairs for the classifier".into()));
    }
    let observed = task_labels.iter().max().map_or(0, |m| m + 1);
    let classes = cfg.num_task_classes.unwrap_or(observed);
    if observed > classes {
        return Err(Error::Config(format!(
            "task labels reach {} but the head has {classes} classes",
            observed - 1
        )));
    }
    if !(cfg.eta > 0.0) || cfg.batch == 0 {
        return Err(Error::Config("head eta must be > 0 and batch >= 1".into()));
    }
    let (o_image, o_text) = embed_pairs(model, data)?;
    let mut head = ClassifierHead::<T>::new(model.joint_dim(), classes, &cfg.architecture, cfg.seed)?;
    let mut order_rng = Rng::stream(cfg.seed, Stream::Minibatch);
    let mut drop_rng = Rng::stream(cfg.seed, Stream::Dropout);
    let n = task_labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    let eta = T::from_f64(cfg.eta);
    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            let ot = o_text.select_rows(chunk);
            let oi = o_image.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| task_labels[i]).collect();
            let (logits, cache) = head.forward_cached(&ot, &oi, Mode::Train, &mut drop_rng)?;
            let (ce, g) = softmax_cross_entropy(&logits, &y)?;
            if !ce.is_finite() {
                return Err(Error::NumericHalt {
                    epoch: epoch + 1,
                    step: 0,
                    component: "classifier cross-entropy".into(),
                });
            }
            head.zero_grads();
            head.backward(&cache, &g)?;
            sgd_step(&mut head.params_mut(), eta)?;
        }
    }
    Ok(head)
}
