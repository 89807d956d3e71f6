//! Synthetic bi-modal data with known class structure.
//!
//! Each class owns a latent prototype. A pair of class `c` is
//! `(A_I·(p_c + ε_I), A_T·(p_c + ε_T))` with independent Gaussian noise of
//! standard deviation `sigma` and fixed random modality maps `A_I`, `A_T`.

use super::{FeatureDataset, PairedDataset};
use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numeric::{Matrix, Rng, Stream};

const PROTOTYPE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    pub per_class: usize,
    pub latent_dim: usize,
    /// Noise standard deviation in latent space.
    pub sigma: f64,
    /// Minimum pairwise distance between prototypes.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            image_dim: 64,
            text_dim: 32,
            per_class: 200,
            latent_dim: 16,
            sigma: 0.5,
            separation: 4.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.image_dim == 0 || self.text_dim == 0 || self.latent_dim == 0 || self.per_class == 0 {
            return Err(Error::Config("dimensions and per-class count must be >= 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Config(format!("separation must be >= 0, got {}", self.separation)));
        }
        Ok(())
    }
}

/// Generated pairs together with the latent structure behind them.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub pairs: PairedDataset,
    pub prototypes: Matrix<f64>,
    pub image_latents: Matrix<f64>,
    pub text_latents: Matrix<f64>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PairedDataset> {
    Ok(generate_synthetic_detailed(spec)?.pairs)
}

pub fn generate_synthetic_detailed(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = Rng::stream(spec.seed, Stream::Synthetic);
    let l = spec.latent_dim;

    // Prototypes ~ N(0, I), rejection-sampled for minimum separation.
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(spec.classes);
    while protos.len() < spec.classes {
        let mut placed = false;
        for _ in 0..PROTOTYPE_ATTEMPTS {
            let cand: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
            let ok = protos.iter().all(|p| {
                let d2: f64 = p.iter().zip(&cand).map(|(a, b)| (a - b).powi(2)).sum();
                d2.sqrt() >= spec.separation
            });
            if ok {
                protos.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "cannot place {} prototypes {} apart in {} latent dimensions",
                spec.classes, spec.separation, l
            )));
        }
    }

    let scale = 1.0 / (l as f64).sqrt();
    let map_image = Matrix::from_fn(l, spec.image_dim, |_, _| rng.normal() * scale);
    let map_text = Matrix::from_fn(l, spec.text_dim, |_, _| rng.normal() * scale);

    let n = spec.classes * spec.per_class;
    let mut labels = Vec::with_capacity(n);
    let mut lat_i = Matrix::zeros(n, l);
    let mut lat_t = Matrix::zeros(n, l);
    let mut row = 0;
    for (c, proto) in protos.iter().enumerate() {
        for _ in 0..spec.per_class {
            for (k, &p) in proto.iter().enumerate() {
                lat_i.set(row, k, p + spec.sigma * rng.normal());
                lat_t.set(row, k, p + spec.sigma * rng.normal());
            }
            labels.push(c);
            row += 1;
        }
    }
    let to_f32 = |m: Matrix<f64>| m.cast::<f32>();
    let image = FeatureDataset::new(
        Modality::Image,
        to_f32(lat_i.matmul(&map_image)?),
        labels.clone(),
        spec.classes,
    )?;
    let text = FeatureDataset::new(
        Modality::Text,
        to_f32(lat_t.matmul(&map_text)?),
        labels,
        spec.classes,
    )?;
    let prototypes = Matrix::from_rows(&protos)?;
    Ok(SyntheticData {
        pairs: PairedDataset { image, text },
        prototypes,
        image_latents: lat_i,
        text_latents: lat_t,
    })
}
