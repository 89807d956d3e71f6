use crate::error::{Error, Result};
use crate::numeric::{relu, relu_backward, Linear, Matrix, Param, ParamSet, Rng, Scalar};

/// Stack of fully connected layers with ReLU between them and an identity
/// activation after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar = f32> {
    pub layers: Vec<Linear<T>>,
}

/// Inputs seen by each layer during one forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T: Scalar> {
    inputs: Vec<Matrix<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// `widths` lists every boundary, input first: `[in, h1, ..., out]`.
    pub fn new(prefix: &str, widths: &[usize], rng: &mut Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{prefix}.{i}"), w[0], w[1], rng))
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Linear<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim(
                    "Mlp::from_layers",
                    pair[0].weight.value.shape(),
                    pair[1].weight.value.shape(),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix<T>) -> Result<(Matrix<T>, MlpCache<T>)> {
        if x.cols() != self.in_dim() {
            return Err(Error::dim("mlp input", x.shape(), (x.rows(), self.in_dim())));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let a = layer.forward(&h)?;
            inputs.push(h);
            h = if i == last { a } else { relu(&a) };
        }
        Ok((h, MlpCache { inputs }))
    }

    /// Accumulates layer gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, cache: &MlpCache<T>, upstream: &Matrix<T>) -> Result<Matrix<T>> {
        let mut g = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            // The input to layer i+1 is relu(pre_i); its sign pattern equals pre_i's.
            if i + 1 < self.layers.len() {
                g = relu_backward(&cache.inputs[i + 1], &g)?;
            }
            g = self.layers[i].backward(&cache.inputs[i], &g)?;
        }
        Ok(g)
    }
}

impl<T: Scalar> ParamSet<T> for Mlp<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
