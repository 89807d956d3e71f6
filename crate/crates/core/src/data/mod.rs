//! Datasets: labelled feature matrices, index-aligned pairs, stratified
//! splits, file formats and the synthetic generator.

mod format;
mod synthetic;

pub use format::{
    feature_file_string, load_feature_file, load_manifest, parse_feature_file, parse_key_values,
    write_feature_file, Manifest, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use synthetic::{generate_synthetic, generate_synthetic_detailed, SyntheticData, SyntheticSpec};

use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numeric::{Matrix, Rng, Scalar, Stream};

pub fn one_hot<T: Scalar>(label: usize, num_classes: usize) -> Result<Vec<T>> {
    if label >= num_classes {
        return Err(Error::Label {
            label,
            classes: num_classes,
        });
    }
    let mut v = vec![T::ZERO; num_classes];
    v[label] = T::ONE;
    Ok(v)
}

/// One modality's features with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub modality: Modality,
    pub features: Matrix<f32>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl FeatureDataset {
    pub fn new(
        modality: Modality,
        features: Matrix<f32>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::Config(format!(
                "{modality} dataset must have n >= 1 and d >= 1, got {:?}",
                features.shape()
            )));
        }
        if labels.len() != features.rows() {
            return Err(Error::Pairing(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Label {
                label: bad,
                classes: num_classes,
            });
        }
        if !features.all_finite() {
            return Err(Error::NonFinite {
                name: format!("{modality} features"),
            });
        }
        Ok(Self {
            modality,
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            modality: self.modality,
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Per-feature standardization fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(ds: &FeatureDataset) -> Self {
        let n = ds.len() as f64;
        let d = ds.dim();
        let mut mean = vec![0.0; d];
        for row in ds.features.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64 / n;
            }
        }
        let mut var = vec![0.0; d];
        for row in ds.features.iter_rows() {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v as f64 - m).powi(2) / n;
            }
        }
        // Constant features are centred but not scaled.
        let std = var.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, std }
    }

    pub fn apply(&self, ds: &FeatureDataset) -> Result<FeatureDataset> {
        if ds.dim() != self.mean.len() {
            return Err(Error::dim("standardize", (1, self.mean.len()), (1, ds.dim())));
        }
        let features = Matrix::from_fn(ds.len(), ds.dim(), |r, c| {
            ((ds.features.get(r, c) as f64 - self.mean[c]) / self.std[c]) as f32
        });
        Ok(FeatureDataset {
            features,
            ..ds.clone()
        })
    }
}

/// Index-aligned image/text samples that share class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub image: FeatureDataset,
    pub text: FeatureDataset,
}

impl PairedDataset {
    pub fn n_pairs(&self) -> usize {
        self.image.len()
    }

    pub fn num_classes(&self) -> usize {
        self.image.num_classes
    }

    /// Class label of each pair.
    pub fn labels(&self) -> &[usize] {
        &self.image.labels
    }

    pub fn image_dim(&self) -> usize {
        self.image.dim()
    }

    pub fn text_dim(&self) -> usize {
        self.text.dim()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            image: self.image.select(indices),
            text: self.text.select(indices),
        }
    }

    pub fn with_labels(&self, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Ok(Self {
            image: FeatureDataset::new(Modality::Image, self.image.features.clone(), labels.clone(), num_classes)?,
            text: FeatureDataset::new(Modality::Text, self.text.features.clone(), labels, num_classes)?,
        })
    }
}

/// Pairs the first `min(n_I, n_T)` samples of each modality.
pub fn make_pairs(image: FeatureDataset, text: FeatureDataset) -> Result<PairedDataset> {
    if image.num_classes != text.num_classes {
        return Err(Error::Pairing(format!(
            "class counts differ: image C={} text C={}",
            image.num_classes, text.num_classes
        )));
    }
    let n = image.len().min(text.len());
    if let Some(i) = (0..n).find(|&i| image.labels[i] != text.labels[i]) {
        return Err(Error::Pairing(format!(
            "label mismatch at index {i}: image {} vs text {}",
            image.labels[i], text.labels[i]
        )));
    }
    let keep: Vec<usize> = (0..n).collect();
    let image = if image.len() == n { image } else { image.select(&keep) };
    let text = if text.len() == n { text } else { text.select(&keep) };
    Ok(PairedDataset { image, text })
}

/// Class-stratified split into `(train, val, test)` by fractions.
///
/// Within each class the per-split counts are the floors of
/// `fraction × class size`, topped up by largest remainder, so each count is
/// within one sample of its ideal share. Pairs keep their original relative
/// order inside each split.
pub fn split(
    paired: &PairedDataset,
    fractions: [f64; 3],
    seed: u64,
) -> Result<(PairedDataset, PairedDataset, PairedDataset)> {
    let idx = split_indices(paired.labels(), paired.num_classes(), fractions, seed)?;
    Ok((
        paired.select(&idx[0]),
        paired.select(&idx[1]),
        paired.select(&idx[2]),
    ))
}

pub fn split_indices(
    labels: &[usize],
    num_classes: usize,
    fractions: [f64; 3],
    seed: u64,
) -> Result<[Vec<usize>; 3]> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) || sum > 1.0 + 1e-12 {
        return Err(Error::Config(format!(
            "split fractions must be positive and sum to <= 1, got {fractions:?}"
        )));
    }
    let mut rng = Rng::stream(seed, Stream::Split);
    let mut out: [Vec<usize>; 3] = Default::default();
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        let n = members.len();
        if n < fractions.len() {
            return Err(Error::Stratification(format!(
                "class {class} has {n} samples, fewer than the {} splits",
                fractions.len()
            )));
        }
        let ideal: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
        let target = ((sum * n as f64) + 1e-9).round().min(n as f64) as usize;
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = ideal[a] - ideal[a].floor();
            let rb = ideal[b] - ideal[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut assigned: usize = counts.iter().sum();
        for &s in order.iter().cycle().take(3) {
            if assigned >= target {
                break;
            }
            counts[s] += 1;
            assigned += 1;
        }
        rng.shuffle(&mut members);
        let mut start = 0;
        for (s, &c) in counts.iter().enumerate() {
            out[s].extend_from_slice(&members[start..start + c]);
            start += c;
        }
    }
    for part in &mut out {
        part.sort_unstable();
    }
    Ok(out)
}
