use std::fmt;
use std::str::FromStr;

use super::mlp::{Mlp, MlpCache};
use crate::error::{Error, Result};
use crate::numeric::{Linear, Matrix, Param, ParamSet, Rng, Scalar, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Image,
    Text,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Image => "image",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(Modality::Image),
            "text" => Ok(Modality::Text),
            other => Err(Error::Config(format!("unknown modality `{other}`"))),
        }
    }
}

/// Layer widths of the per-modality autoencoders and the projection sharing
/// policy. The default is the reference architecture: encoder
/// `d → 1024 → 1024 → 512`, decoder `512 → 1024 → 1024 → d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
    /// One projection layer used by both modalities instead of one each.
    pub shared_projection: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![1024, 1024],
            latent_dim: 512,
            decoder_hidden: vec![1024, 1024],
            shared_projection: false,
        }
    }
}

impl Architecture {
    /// Small widths for gradient checks and quick experiments.
    pub fn tiny(hidden: usize, latent: usize) -> Self {
        Self {
            encoder_hidden: vec![hidden, hidden],
            latent_dim: latent,
            decoder_hidden: vec![hidden, hidden],
            shared_projection: false,
        }
    }
}

/// Encoder and decoder of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityPipeline<T: Scalar = f32> {
    pub modality: Modality,
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
}

impl<T: Scalar> ModalityPipeline<T> {
    fn new(modality: Modality, input_dim: usize, arch: &Architecture, rng: &mut Rng) -> Self {
        let mut enc = vec![input_dim];
        enc.extend(&arch.encoder_hidden);
        enc.push(arch.latent_dim);
        let mut dec = vec![arch.latent_dim];
        dec.extend(&arch.decoder_hidden);
        dec.push(input_dim);
        let encoder = Mlp::new(&format!("{modality}.encoder"), &enc, rng);
        let decoder = Mlp::new(&format!("{modality}.decoder"), &dec, rng);
        Self {
            modality,
            encoder,
            decoder,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encode(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, z: &Matrix<T>) -> Result<Matrix<T>> {
        if z.cols() != self.latent_dim() {
            return Err(Error::dim("decode", z.shape(), (z.rows(), self.latent_dim())));
        }
        self.decoder.forward(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection<T: Scalar = f32> {
    Separate { image: Linear<T>, text: Linear<T> },
    Shared(Linear<T>),
}

impl<T: Scalar> Projection<T> {
    pub fn get(&self, m: Modality) -> &Linear<T> {
        match (self, m) {
            (Projection::Shared(l), _) => l,
            (Projection::Separate { image, .. }, Modality::Image) => image,
            (Projection::Separate { text, .. }, Modality::Text) => text,
        }
    }

    fn get_mut(&mut self, m: Modality) -> &mut Linear<T> {
        match (self, m) {
            (Projection::Shared(l), _) => l,
            (Projection::Separate { image, .. }, Modality::Image) => image,
            (Projection::Separate { text, .. }, Modality::Text) => text,
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, Projection::Shared(_))
    }
}

/// Both modality autoencoders plus the projection(s) into the joint space.
/// The joint dimension always equals the class count.
#[derive(Debug, Clone, PartialEq)]
pub struct CobraModel<T: Scalar = f32> {
    pub image: ModalityPipeline<T>,
    pub text: ModalityPipeline<T>,
    pub projection: Projection<T>,
}

/// Activations of one modality for one minibatch.
#[derive(Debug, Clone)]
pub struct BranchCache<T: Scalar> {
    pub x: Matrix<T>,
    pub z: Matrix<T>,
    pub o: Matrix<T>,
    pub x_hat: Matrix<T>,
    enc: MlpCache<T>,
    dec: MlpCache<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar> {
    pub image: BranchCache<T>,
    pub text: BranchCache<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn branch(&self, m: Modality) -> &BranchCache<T> {
        match m {
            Modality::Image => &self.image,
            Modality::Text => &self.text,
        }
    }
}

/// Loss gradients with respect to the model outputs.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads<T: Scalar> {
    pub o_image: Option<Matrix<T>>,
    pub o_text: Option<Matrix<T>>,
    pub x_hat_image: Option<Matrix<T>>,
    pub x_hat_text: Option<Matrix<T>>,
}

/// Builds a model with the reference architecture.
pub fn init_model<T: Scalar>(
    image_dim: usize,
    text_dim: usize,
    num_classes: usize,
    seed: u64,
) -> Result<CobraModel<T>> {
    CobraModel::new(image_dim, text_dim, num_classes, &Architecture::default(), seed)
}

impl<T: Scalar> CobraModel<T> {
    pub fn new(
        image_dim: usize,
        text_dim: usize,
        num_classes: usize,
        arch: &Architecture,
        seed: u64,
    ) -> Result<Self> {
        let all = [image_dim, text_dim, num_classes, arch.latent_dim]
            .into_iter()
            .chain(arch.encoder_hidden.iter().copied())
            .chain(arch.decoder_hidden.iter().copied());
        if all.into_iter().any(|d| d == 0) {
            return Err(Error::Parameter(format!(
                "all dimensions must be >= 1 (d_I={image_dim}, d_T={text_dim}, C={num_classes}, arch={arch:?})"
            )));
        }
        let mut rng = Rng::stream(seed, Stream::Init);
        let image = ModalityPipeline::new(Modality::Image, image_dim, arch, &mut rng);
        let text = ModalityPipeline::new(Modality::Text, text_dim, arch, &mut rng);
        let projection = if arch.shared_projection {
            Projection::Shared(Linear::new("projection", arch.latent_dim, num_classes, &mut rng))
        } else {
            Projection::Separate {
                image: Linear::new("image.projection", arch.latent_dim, num_classes, &mut rng),
                text: Linear::new("text.projection", arch.latent_dim, num_classes, &mut rng),
            }
        };
        Ok(Self {
            image,
            text,
            projection,
        })
    }

    pub fn pipeline(&self, m: Modality) -> &ModalityPipeline<T> {
        match m {
            Modality::Image => &self.image,
            Modality::Text => &self.text,
        }
    }

    /// Joint-space width, equal to the number of classes.
    pub fn joint_dim(&self) -> usize {
        self.projection.get(Modality::Image).out_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.joint_dim()
    }

    pub fn encode(&self, m: Modality, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.pipeline(m).encode(x)
    }

    pub fn decode(&self, m: Modality, z: &Matrix<T>) -> Result<Matrix<T>> {
        self.pipeline(m).decode(z)
    }

    pub fn project(&self, m: Modality, z: &Matrix<T>) -> Result<Matrix<T>> {
        let p = self.projection.get(m);
        if z.cols() != p.in_dim() {
            return Err(Error::dim("project", z.shape(), (z.rows(), p.in_dim())));
        }
        p.forward(z)
    }

    /// Joint embedding `project(encode(x))`.
    pub fn embed(&self, m: Modality, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.project(m, &self.encode(m, x)?)
    }

    fn forward_branch(&self, m: Modality, x: &Matrix<T>) -> Result<BranchCache<T>> {
        let pipe = self.pipeline(m);
        let (z, enc) = pipe.encoder.forward_cached(x)?;
        let o = self.project(m, &z)?;
        let (x_hat, dec) = pipe.decoder.forward_cached(&z)?;
        Ok(BranchCache {
            x: x.clone(),
            z,
            o,
            x_hat,
            enc,
            dec,
        })
    }

    /// Runs both modalities. The pipelines contain no stochastic layers, so
    /// the result is a pure function of parameters and inputs.
    pub fn forward_full(&self, x_image: &Matrix<T>, x_text: &Matrix<T>) -> Result<ForwardCache<T>> {
        Ok(ForwardCache {
            image: self.forward_branch(Modality::Image, x_image)?,
            text: self.forward_branch(Modality::Text, x_text)?,
        })
    }

    /// Zeroes every gradient, then backpropagates `grads` through decoders,
    /// projections and encoders. The latent gradient is the sum of the
    /// decoder and projection branches.
    pub fn backward_full(&mut self, cache: &ForwardCache<T>, grads: &OutputGrads<T>) -> Result<()> {
        let need = |g: &Option<Matrix<T>>, what: &str| -> Result<Matrix<T>> {
            g.clone()
                .ok_or_else(|| Error::Contract(format!("missing loss gradient for {what}")))
        };
        let parts = [
            (Modality::Image, need(&grads.o_image, "O_image")?, need(&grads.x_hat_image, "x_hat_image")?),
            (Modality::Text, need(&grads.o_text, "O_text")?, need(&grads.x_hat_text, "x_hat_text")?),
        ];
        self.zero_grads();
        for (m, g_o, g_x_hat) in parts {
            let branch = cache.branch(m);
            if g_o.shape() != branch.o.shape() {
                return Err(Error::dim("backward_full(O)", branch.o.shape(), g_o.shape()));
            }
            if g_x_hat.shape() != branch.x_hat.shape() {
                return Err(Error::dim("backward_full(x_hat)", branch.x_hat.shape(), g_x_hat.shape()));
            }
            let mut g_z = self.projection.get_mut(m).backward(&branch.z, &g_o)?;
            let pipe = match m {
                Modality::Image => &mut self.image,
                Modality::Text => &mut self.text,
            };
            let g_dec = pipe.decoder.backward(&branch.dec, &g_x_hat)?;
            g_z.add_scaled(&g_dec, T::ONE)?;
            pipe.encoder.backward(&branch.enc, &g_z)?;
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> CobraModel<U> {
        let tensors = self.to_tensors();
        CobraModel::from_tensors(tensors.into_iter().map(|(n, m)| (n, m.cast())).collect())
            .expect("a model's own tensors always reassemble")
    }

    /// Parameters as `(name, f64 matrix)` pairs in `ParamSet` order.
    pub fn to_tensors(&self) -> Vec<(String, Matrix<f64>)> {
        self.params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.cast()))
            .collect()
    }

    /// Rebuilds a model from named tensors; layer counts and widths are
    /// inferred from names and shapes.
    pub fn from_tensors(tensors: Vec<(String, Matrix<f64>)>) -> Result<Self> {
        let mut bag = TensorBag::new(tensors);
        let image_enc = bag.take_mlp("image.encoder")?;
        let image_dec = bag.take_mlp("image.decoder")?;
        let text_enc = bag.take_mlp("text.encoder")?;
        let text_dec = bag.take_mlp("text.decoder")?;
        let projection = if bag.contains("projection.weight") {
            Projection::Shared(bag.take_linear("projection")?)
        } else {
            Projection::Separate {
                image: bag.take_linear("image.projection")?,
                text: bag.take_linear("text.projection")?,
            }
        };
        bag.finish()?;
        let model = Self {
            image: ModalityPipeline {
                modality: Modality::Image,
                encoder: image_enc,
                decoder: image_dec,
            },
            text: ModalityPipeline {
                modality: Modality::Text,
                encoder: text_enc,
                decoder: text_dec,
            },
            projection,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        for pipe in [&self.image, &self.text] {
            let proj = self.projection.get(pipe.modality);
            if pipe.decoder.in_dim() != pipe.latent_dim()
                || pipe.decoder.out_dim() != pipe.input_dim()
                || proj.in_dim() != pipe.latent_dim()
            {
                return Err(Error::Config(format!(
                    "inconsistent {} pipeline widths",
                    pipe.modality
                )));
            }
        }
        if self.projection.get(Modality::Text).out_dim() != self.joint_dim() {
            return Err(Error::Config("projections disagree on joint dimension".into()));
        }
        Ok(())
    }
}

impl<T: Scalar> ParamSet<T> for CobraModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for pipe in [&self.image, &self.text] {
            out.extend(pipe.encoder.params());
            out.extend(pipe.decoder.params());
        }
        match &self.projection {
            Projection::Shared(l) => out.extend(l.params()),
            Projection::Separate { image, text } => {
                out.extend(image.params());
                out.extend(text.params());
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for pipe in [&mut self.image, &mut self.text] {
            out.extend(pipe.encoder.params_mut());
            out.extend(pipe.decoder.params_mut());
        }
        match &mut self.projection {
            Projection::Shared(l) => out.extend(l.params_mut()),
            Projection::Separate { image, text } => {
                out.extend(image.params_mut());
                out.extend(text.params_mut());
            }
        }
        out
    }
}

/// Name-indexed tensors consumed while reassembling a network.
pub(crate) struct TensorBag {
    items: Vec<Option<(String, Matrix<f64>)>>,
}

impl TensorBag {
    pub(crate) fn new(tensors: Vec<(String, Matrix<f64>)>) -> Self {
        Self {
            items: tensors.into_iter().map(Some).collect(),
        }
    }

    pub(crate) fn contains(&self, name: &str) -> bool {
        self.items.iter().flatten().any(|(n, _)| n == name)
    }

    fn take(&mut self, name: &str) -> Option<Matrix<f64>> {
        let slot = self
            .items
            .iter_mut()
            .find(|s| s.as_ref().is_some_and(|(n, _)| n == name))?;
        slot.take().map(|(_, m)| m)
    }

    pub(crate) fn take_linear<T: Scalar>(&mut self, prefix: &str) -> Result<Linear<T>> {
        let missing = |what: &str| Error::Config(format!("checkpoint lacks tensor `{prefix}.{what}`"));
        let w = self.take(&format!("{prefix}.weight")).ok_or_else(|| missing("weight"))?;
        let b = self.take(&format!("{prefix}.bias")).ok_or_else(|| missing("bias"))?;
        Linear::from_parts(
            Param::new(format!("{prefix}.weight"), w.cast()),
            Param::new(format!("{prefix}.bias"), b.cast()),
        )
    }

    pub(crate) fn take_mlp<T: Scalar>(&mut self, prefix: &str) -> Result<Mlp<T>> {
        let mut layers = Vec::new();
        while self.contains(&format!("{prefix}.{}.weight", layers.len())) {
            layers.push(self.take_linear(&format!("{prefix}.{}", layers.len()))?);
        }
        Mlp::from_layers(layers).map_err(|e| match e {
            Error::Config(_) => Error::Config(format!("checkpoint has no layers for `{prefix}`")),
            other => other,
        })
    }

    pub(crate) fn finish(self) -> Result<()> {
        let left: Vec<String> = self.items.into_iter().flatten().map(|(n, _)| n).collect();
        if left.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unexpected tensors: {}", left.join(", "))))
        }
    }
}
