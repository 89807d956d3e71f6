use super::cobra::TensorBag;
use crate::error::{Error, Result};
use crate::numeric::{
    dropout, dropout_backward, relu, relu_backward, Linear, Matrix, Mode, Param, ParamSet, Rng,
    Scalar, Stream,
};

/// Hidden widths and dropout rates of the fusion classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadArchitecture {
    pub hidden: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Default for HeadArchitecture {
    fn default() -> Self {
        Self {
            hidden: vec![512, 128, 64],
            dropout: vec![0.5, 0.5, 0.2],
        }
    }
}

/// Fusion classifier over `[O_text | O_image]`: each hidden layer is
/// FC + ReLU + Dropout, and the output layer is a plain FC producing logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<T: Scalar = f32> {
    pub layers: Vec<Linear<T>>,
    pub dropout: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T: Scalar> {
    inputs: Vec<Matrix<T>>,
    activations: Vec<Matrix<T>>,
    masks: Vec<Matrix<T>>,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn new(joint_dim: usize, num_task_classes: usize, arch: &HeadArchitecture, seed: u64) -> Result<Self> {
        if arch.hidden.len() != arch.dropout.len() {
            return Err(Error::Config(
                "head needs one dropout rate per hidden layer".into(),
            ));
        }
        if joint_dim == 0 || num_task_classes == 0 || arch.hidden.contains(&0) {
            return Err(Error::Parameter("head dimensions must be >= 1".into()));
        }
        if let Some(p) = arch.dropout.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1)")));
        }
        let mut rng = Rng::stream(seed, Stream::Head);
        let mut widths = vec![2 * joint_dim];
        widths.extend(&arch.hidden);
        widths.push(num_task_classes);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("head.{i}"), w[0], w[1], &mut rng))
            .collect();
        Ok(Self {
            layers,
            dropout: arch.dropout.clone(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn joint_dim(&self) -> usize {
        self.input_dim() / 2
    }

    pub fn num_task_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn classify(
        &self,
        o_text: &Matrix<T>,
        o_image: &Matrix<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Matrix<T>> {
        Ok(self.forward_cached(o_text, o_image, mode, rng)?.0)
    }

    pub fn forward_cached(
        &self,
        o_text: &Matrix<T>,
        o_image: &Matrix<T>,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Matrix<T>, HeadCache<T>)> {
        if o_text.rows() != o_image.rows() {
            return Err(Error::Pairing(format!(
                "classifier got {} text rows and {} image rows",
                o_text.rows(),
                o_image.rows()
            )));
        }
        let jd = self.joint_dim();
        if o_text.cols() != jd || o_image.cols() != jd {
            return Err(Error::dim("classify", o_text.shape(), o_image.shape()));
        }
        let mut h = o_text.hconcat(o_image)?;
        let last = self.layers.len() - 1;
        let mut cache = HeadCache {
            inputs: Vec::with_capacity(self.layers.len()),
            activations: Vec::with_capacity(last),
            masks: Vec::with_capacity(last),
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.forward(&h)?;
            cache.inputs.push(h);
            if i == last {
                return Ok((a, cache));
            }
            let r = relu(&a);
            let (d, mask) = dropout(&r, self.dropout[i], mode, rng)?;
            cache.activations.push(r);
            cache.masks.push(mask);
            h = d;
        }
        unreachable!("head has at least one layer")
    }

    /// Accumulates head gradients; returns `(∂L/∂O_text, ∂L/∂O_image)`.
    pub fn backward(&mut self, cache: &HeadCache<T>, upstream: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let last = self.layers.len() - 1;
        let mut g = self.layers[last].backward(&cache.inputs[last], upstream)?;
        for i in (0..last).rev() {
            g = dropout_backward(&g, &cache.masks[i])?;
            g = relu_backward(&cache.activations[i], &g)?;
            g = self.layers[i].backward(&cache.inputs[i], &g)?;
        }
        Ok(g.hsplit(self.joint_dim()))
    }

    pub fn to_tensors(&self) -> Vec<(String, Matrix<f64>)> {
        self.params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.cast()))
            .collect()
    }

    /// Rebuilds a head from named tensors. Dropout rates are not stored; the
    /// reference rates are restored when the layer count matches, otherwise
    /// 0.5 is used for every hidden layer.
    pub fn from_tensors(tensors: Vec<(String, Matrix<f64>)>) -> Result<Self> {
        let mut bag = TensorBag::new(tensors);
        let mlp = bag.take_mlp::<T>("head")?;
        bag.finish()?;
        let layers = mlp.layers;
        if layers[0].in_dim() % 2 != 0 {
            return Err(Error::Config("head input width must be even".into()));
        }
        let reference = HeadArchitecture::default();
        let dropout = if layers.len() == reference.hidden.len() + 1 {
            reference.dropout
        } else {
            vec![0.5; layers.len() - 1]
        };
        Ok(Self { layers, dropout })
    }
}

impl<T: Scalar> ParamSet<T> for ClassifierHead<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

/// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<(f64, Matrix<T>)> {
    if logits.rows() != labels.len() {
        return Err(Error::Pairing(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let classes = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Label { label: bad, classes });
    }
    let n = logits.rows().max(1) as f64;
    let mut grad = Matrix::zeros(logits.rows(), classes);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().map(|v| v.to_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.to_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += z.ln() + max - row[label].to_f64();
        for (c, e) in exps.iter().enumerate() {
            let target = if c == label { 1.0 } else { 0.0 };
            grad.set(r, c, T::from_f64((e / z - target) / n));
        }
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> HeadArchitecture {
        HeadArchitecture {
            hidden: vec![8, 6],
            dropout: vec![0.5, 0.2],
        }
    }

    fn emb(rows: usize, cols: usize, k: f64) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |r, c| ((r * cols + c) as f64 * k).cos())
    }

    #[test]
    fn logits_shape() {
        let h: ClassifierHead<f64> = ClassifierHead::new(4, 3, &HeadArchitecture::default(), 0).unwrap();
        assert_eq!(h.input_dim(), 8);
        let out = h.classify(&emb(2, 4, 0.3), &emb(2, 4, 0.6), Mode::Eval, &mut Rng::new(0)).unwrap();
        assert_eq!(out.shape(), (2, 3));
        let widths: Vec<usize> = h.layers.iter().map(|l| l.out_dim()).collect();
        assert_eq!(widths, [512, 128, 64, 3]);
    }

    #[test]
    fn eval_is_deterministic_and_train_is_not() {
        let h: ClassifierHead<f64> = ClassifierHead::new(4, 3, &small_arch(), 1).unwrap();
        let (t, i) = (emb(5, 4, 0.3), emb(5, 4, 0.8));
        let a = h.classify(&t, &i, Mode::Eval, &mut Rng::new(1)).unwrap();
        let b = h.classify(&t, &i, Mode::Eval, &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);
        let c = h.classify(&t, &i, Mode::Train, &mut Rng::new(1)).unwrap();
        let d = h.classify(&t, &i, Mode::Train, &mut Rng::new(2)).unwrap();
        assert_ne!(c, d);
    }

    #[test]
    fn row_mismatch_is_pairing_error() {
        let h: ClassifierHead<f64> = ClassifierHead::new(4, 3, &small_arch(), 0).unwrap();
        let r = h.classify(&emb(2, 4, 0.1), &emb(3, 4, 0.1), Mode::Eval, &mut Rng::new(0));
        assert!(matches!(r, Err(Error::Pairing(_))));
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let (ce, g) = softmax_cross_entropy(&Matrix::<f64>::zeros(2, 4), &[0, 3]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        assert!((g.get(0, 0) - (0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((g.get(0, 1) - 0.125).abs() < 1e-15);
        assert!(matches!(softmax_cross_entropy(&Matrix::<f64>::zeros(1, 2), &[2]), Err(Error::Label { .. })));
    }

    #[test]
    fn tensors_round_trip() {
        let h: ClassifierHead<f64> = ClassifierHead::new(3, 2, &HeadArchitecture::default(), 5).unwrap();
        assert_eq!(ClassifierHead::from_tensors(h.to_tensors()).unwrap(), h);
    }
}
