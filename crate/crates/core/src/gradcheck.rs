//! Finite-difference verification of every layer and objective term, run in
//! `f64` on small random instances.

use crate::error::{Error, Result};
use crate::losses::{
    batch_meta, compute_losses, contrastive_loss_setform, cross_modal_loss, nce_loss, recon_loss,
    sample_contrastive_sets, supervised_loss, LossConfig, LossWeights, NceForm, Reduction,
    SamplingOutcome, ScoreMode,
};
use crate::model::{
    softmax_cross_entropy, Architecture, ClassifierHead, CobraModel, HeadArchitecture, Mlp,
    OutputGrads,
};
use crate::numeric::{
    dropout, dropout_backward, finite_diff_grad, finite_diff_input, max_relative_error, relu,
    relu_backward, Linear, Matrix, Mode, ParamSet, Rng, Stream,
};

/// Largest width accepted by the suite.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    /// Input width of layers and of the image modality.
    pub dim: usize,
    pub batch: usize,
    pub classes: usize,
    pub epsilon: f64,
    pub tolerance: f64,
    pub seed: u64,
    /// Name of a check whose analytic gradient is perturbed before
    /// comparison. Used to exercise the failure path.
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            dim: 6,
            batch: 4,
            classes: 3,
            epsilon: 1e-5,
            tolerance: 1e-4,
            seed: 0,
            corrupt: None,
        }
    }
}

impl GradcheckOptions {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_DIM).contains(&self.dim) || !(2..=MAX_DIM).contains(&self.batch) {
            return Err(Error::Config(format!(
                "gradcheck dims must lie in [2, {MAX_DIM}] (dim={}, batch={})",
                self.dim, self.batch
            )));
        }
        if !(2..=MAX_DIM).contains(&self.classes) {
            return Err(Error::Config(format!("gradcheck classes must lie in [2, {MAX_DIM}]")));
        }
        if !(self.epsilon > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::Config("epsilon and tolerance must be > 0".into()));
        }
        if let Some(name) = &self.corrupt {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown check `{name}`")));
            }
        }
        Ok(())
    }
}

/// Every check, in run order.
pub const CHECK_NAMES: &[&str] = &[
    "layer.linear",
    "layer.relu",
    "layer.dropout",
    "layer.mlp",
    "loss.l_r.reconstruction",
    "loss.l_m.cross_modal",
    "loss.l_s.supervised",
    "loss.l_c.setform_exp",
    "loss.l_c.nce_log",
    "loss.l_c.nce_literal",
    "loss.total",
    "model.backward",
    "model.backward_shared",
    "head.cross_entropy",
    "head.input",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn record(&self) -> String {
        format!(
            "check={} max_rel_err={:.3e} status={}",
            self.name,
            self.max_rel_err,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    pub fn records(&self) -> Vec<String> {
        self.checks.iter().map(CheckResult::record).collect()
    }
}

struct Suite<'a> {
    opts: &'a GradcheckOptions,
    rng: Rng,
    checks: Vec<CheckResult>,
}

impl Suite<'_> {
    fn random(&mut self, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| self.rng.normal())
    }

    /// Entries bounded away from zero so that no probe crosses a ReLU kink.
    fn away_from_zero(&mut self, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| {
            let v = self.rng.uniform(0.2, 1.5);
            if self.rng.bernoulli(0.5) {
                v
            } else {
                -v
            }
        })
    }

    /// Fresh layers have zero biases, which puts rows with an all-zero input
    /// exactly on a ReLU kink. Random biases move them off it.
    fn randomize_biases(&mut self, set: &mut impl ParamSet<f64>) {
        for p in set.params_mut() {
            if p.name.ends_with(".bias") {
                let shape = p.value.shape();
                p.value = Matrix::from_fn(shape.0, shape.1, |_, _| self.rng.uniform(-0.5, 0.5));
            }
        }
    }

    fn labels(&self) -> Vec<usize> {
        (0..self.opts.batch).map(|i| (i / 2) % self.opts.classes).collect()
    }

    fn compare(&mut self, name: &str, pairs: &[(Matrix<f64>, Matrix<f64>)]) {
        let corrupt = self.opts.corrupt.as_deref() == Some(name);
        let mut worst: f64 = 0.0;
        for (analytic, numeric) in pairs {
            let analytic = if corrupt {
                analytic.map(|v| v * 1.5 + 0.5)
            } else {
                analytic.clone()
            };
            worst = worst.max(max_relative_error(&analytic, numeric));
        }
        self.checks.push(CheckResult {
            name: name.to_owned(),
            max_rel_err: worst,
            passed: worst < self.opts.tolerance,
        });
    }

    fn sampling(&mut self, labels: &[usize]) -> Result<SamplingOutcome> {
        let meta = batch_meta(labels, labels);
        sample_contrastive_sets(&meta, 3, None, &mut self.rng)
    }
}

fn inner(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

fn grads_of(set: &impl ParamSet<f64>) -> Vec<Matrix<f64>> {
    set.params().iter().map(|p| p.grad.clone()).collect()
}

fn zip_grads(a: Vec<Matrix<f64>>, n: Vec<Matrix<f64>>) -> Vec<(Matrix<f64>, Matrix<f64>)> {
    a.into_iter().zip(n).collect()
}

/// Runs every check in [`CHECK_NAMES`].
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    opts.validate()?;
    let mut s = Suite {
        opts,
        rng: Rng::stream(opts.seed, Stream::Init),
        checks: Vec::new(),
    };
    let eps = opts.epsilon;
    let (d, b, c) = (opts.dim, opts.batch, opts.classes);
    let hidden = (d + 1).min(MAX_DIM);

    // Layers, each under a random linear functional of its output.
    {
        let mut layer: Linear<f64> = Linear::new("linear", d, hidden, &mut s.rng);
        let x = s.random(b, d);
        let r = s.random(b, hidden);
        layer.zero_grads();
        let gx = layer.backward(&x, &r)?;
        let num = finite_diff_grad(&mut layer, eps, |l| inner(&l.forward(&x).unwrap(), &r));
        let num_x = finite_diff_input(&x, eps, |x| inner(&layer.forward(x).unwrap(), &r));
        let mut pairs = zip_grads(grads_of(&layer), num);
        pairs.push((gx, num_x));
        s.compare("layer.linear", &pairs);
    }
    {
        let x = s.away_from_zero(b, d);
        let r = s.random(b, d);
        let g = relu_backward(&x, &r)?;
        let num = finite_diff_input(&x, eps, |x| inner(&relu(x), &r));
        s.compare("layer.relu", &[(g, num)]);
    }
    {
        let x = s.random(b, d);
        let r = s.random(b, d);
        let mask_seed = opts.seed ^ 0x5eed;
        let (_, mask) = dropout(&x, 0.5, Mode::Train, &mut Rng::new(mask_seed))?;
        let g = dropout_backward(&r, &mask)?;
        let num = finite_diff_input(&x, eps, |x| {
            let (y, _) = dropout(x, 0.5, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
            inner(&y, &r)
        });
        s.compare("layer.dropout", &[(g, num)]);
    }
    {
        let mut mlp: Mlp<f64> = Mlp::new("mlp", &[d, hidden, hidden, c], &mut s.rng);
        s.randomize_biases(&mut mlp);
        let x = s.random(b, d);
        let r = s.random(b, c);
        let (_, cache) = mlp.forward_cached(&x)?;
        mlp.zero_grads();
        let gx = mlp.backward(&cache, &r)?;
        let num = finite_diff_grad(&mut mlp, eps, |m| inner(&m.forward(&x).unwrap(), &r));
        let num_x = finite_diff_input(&x, eps, |x| inner(&mlp.forward(x).unwrap(), &r));
        let mut pairs = zip_grads(grads_of(&mlp), num);
        pairs.push((gx, num_x));
        s.compare("layer.mlp", &pairs);
    }

    // Individual loss terms with respect to their inputs.
    let labels = s.labels();
    {
        let (xh_i, x_i, xh_t, x_t) = (s.random(b, d), s.random(b, d), s.random(b, d - 1), s.random(b, d - 1));
        let t = recon_loss(&xh_i, &x_i, &xh_t, &x_t, Reduction::Mean)?;
        let ni = finite_diff_input(&xh_i, eps, |m| recon_loss(m, &x_i, &xh_t, &x_t, Reduction::Mean).unwrap().value);
        let nt = finite_diff_input(&xh_t, eps, |m| recon_loss(&xh_i, &x_i, m, &x_t, Reduction::Mean).unwrap().value);
        s.compare("loss.l_r.reconstruction", &[(t.grad_image, ni), (t.grad_text, nt)]);
    }
    {
        let (o_t, o_i) = (s.random(b, c), s.random(b, c));
        let t = cross_modal_loss(&o_t, &o_i, Reduction::Mean)?;
        let nt = finite_diff_input(&o_t, eps, |m| cross_modal_loss(m, &o_i, Reduction::Mean).unwrap().value);
        let ni = finite_diff_input(&o_i, eps, |m| cross_modal_loss(&o_t, m, Reduction::Mean).unwrap().value);
        s.compare("loss.l_m.cross_modal", &[(t.grad_text, nt), (t.grad_image, ni)]);
    }
    {
        let o = s.random(b, c);
        let t = supervised_loss(&o, &labels, c, Reduction::Mean)?;
        let n = finite_diff_input(&o, eps, |m| supervised_loss(m, &labels, c, Reduction::Mean).unwrap().value);
        s.compare("loss.l_s.supervised", &[(t.grad, n)]);
    }
    let sets = s.sampling(&labels)?.sets;
    {
        let (o_i, o_t) = (s.random(b, c), s.random(b, c));
        let t = contrastive_loss_setform(&sets, &o_i, &o_t, ScoreMode::Exp, 1.0)?;
        let f = |a: &Matrix<f64>, b: &Matrix<f64>| {
            contrastive_loss_setform(&sets, a, b, ScoreMode::Exp, 1.0).unwrap().value
        };
        let ni = finite_diff_input(&o_i, eps, |m| f(m, &o_t));
        let nt = finite_diff_input(&o_t, eps, |m| f(&o_i, m));
        s.compare("loss.l_c.setform_exp", &[(t.grad_image, ni), (t.grad_text, nt)]);
    }
    for (name, form) in [("loss.l_c.nce_log", NceForm::Log), ("loss.l_c.nce_literal", NceForm::Literal)] {
        let (o_i, o_t) = (s.random(b, c), s.random(b, c));
        let t = nce_loss(&sets, &o_i, &o_t, form, 1.0)?;
        let f = |a: &Matrix<f64>, b: &Matrix<f64>| nce_loss(&sets, a, b, form, 1.0).unwrap().value;
        let ni = finite_diff_input(&o_i, eps, |m| f(m, &o_t));
        let nt = finite_diff_input(&o_t, eps, |m| f(&o_i, m));
        s.compare(name, &[(t.grad_image, ni), (t.grad_text, nt)]);
    }

    // Weighted objective through the whole network.
    let arch = Architecture::tiny(hidden, d);
    {
        let mut model: CobraModel<f64> = CobraModel::new(d, d - 1, c, &arch, opts.seed)?;
        s.randomize_biases(&mut model);
        let (x_i, x_t) = (s.random(b, d), s.random(b, d - 1));
        let sampling = s.sampling(&labels)?;
        let cfg = LossConfig {
            weights: LossWeights::new(1.0, 0.7, 0.8, 0.3)?,
            ..LossConfig::default()
        };
        let objective = |m: &CobraModel<f64>| {
            let cache = m.forward_full(&x_i, &x_t).unwrap();
            compute_losses(&cache, &labels, &labels, &sampling, true, &cfg).unwrap().total
        };
        let cache = model.forward_full(&x_i, &x_t)?;
        let loss = compute_losses(&cache, &labels, &labels, &sampling, true, &cfg)?;
        model.backward_full(&cache, &loss.grads)?;
        let analytic = grads_of(&model);
        let num = finite_diff_grad(&mut model, eps, objective);
        s.compare("loss.total", &zip_grads(analytic, num));
    }
    for (name, shared) in [("model.backward", false), ("model.backward_shared", true)] {
        let arch = Architecture { shared_projection: shared, ..arch.clone() };
        let mut model: CobraModel<f64> = CobraModel::new(d, d - 1, c, &arch, opts.seed + 1)?;
        s.randomize_biases(&mut model);
        let (x_i, x_t) = (s.random(b, d), s.random(b, d - 1));
        let r = [s.random(b, c), s.random(b, c), s.random(b, d), s.random(b, d - 1)];
        let functional = |m: &CobraModel<f64>| {
            let k = m.forward_full(&x_i, &x_t).unwrap();
            inner(&k.image.o, &r[0]) + inner(&k.text.o, &r[1]) + inner(&k.image.x_hat, &r[2]) + inner(&k.text.x_hat, &r[3])
        };
        let cache = model.forward_full(&x_i, &x_t)?;
        let grads = OutputGrads {
            o_image: Some(r[0].clone()),
            o_text: Some(r[1].clone()),
            x_hat_image: Some(r[2].clone()),
            x_hat_text: Some(r[3].clone()),
        };
        model.backward_full(&cache, &grads)?;
        let analytic = grads_of(&model);
        let num = finite_diff_grad(&mut model, eps, functional);
        s.compare(name, &zip_grads(analytic, num));
    }

    // Classifier head, with a fixed dropout mask.
    {
        let head_arch = HeadArchitecture {
            hidden: vec![hidden, d],
            dropout: vec![0.5, 0.2],
        };
        let mut head: ClassifierHead<f64> = ClassifierHead::new(c, c, &head_arch, opts.seed)?;
        s.randomize_biases(&mut head);
        let (o_t, o_i) = (s.random(b, c), s.random(b, c));
        let mask_seed = opts.seed ^ 0xd0;
        let ce = |h: &ClassifierHead<f64>, t: &Matrix<f64>, i: &Matrix<f64>| {
            let logits = h.classify(t, i, Mode::Train, &mut Rng::new(mask_seed)).unwrap();
            softmax_cross_entropy(&logits, &labels).unwrap().0
        };
        let (logits, cache) = head.forward_cached(&o_t, &o_i, Mode::Train, &mut Rng::new(mask_seed))?;
        let (_, g) = softmax_cross_entropy(&logits, &labels)?;
        head.zero_grads();
        let (g_t, g_i) = head.backward(&cache, &g)?;
        let analytic = grads_of(&head);
        let nt = finite_diff_input(&o_t, eps, |m| ce(&head, m, &o_i));
        let ni = finite_diff_input(&o_i, eps, |m| ce(&head, &o_t, m));
        let num = finite_diff_grad(&mut head, eps, |h| ce(h, &o_t, &o_i));
        s.compare("head.cross_entropy", &zip_grads(analytic, num));
        s.compare("head.input", &[(g_t, nt), (g_i, ni)]);
    }

    Ok(GradcheckReport { checks: s.checks })
}
