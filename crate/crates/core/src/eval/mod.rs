//! Cross-modal retrieval (AP / mAP), classification accuracy and joint
//! embedding export.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{write_feature_file, FeatureDataset, PairedDataset};
use crate::error::{Error, Result};
use crate::model::{ClassifierHead, CobraModel, Modality};
use crate::numeric::{Matrix, Mode, Rng, Scalar};

const EMBED_CHUNK: usize = 512;

/// Joint embeddings `project(encode(x))` of every row, in chunks.
pub fn embed_dataset<T: Scalar>(model: &CobraModel<T>, modality: Modality, features: &Matrix<f32>) -> Result<Matrix<T>> {
    let n = features.rows();
    let mut out = Vec::with_capacity(n * model.joint_dim());
    let mut start = 0;
    while start < n {
        let end = (start + EMBED_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let x: Matrix<T> = features.select_rows(&idx).cast();
        out.extend_from_slice(model.embed(modality, &x)?.as_slice());
        start = end;
    }
    Matrix::from_vec(n, model.joint_dim(), out)
}

/// `(O_image, O_text)` for every pair.
pub fn embed_pairs<T: Scalar>(model: &CobraModel<T>, data: &PairedDataset) -> Result<(Matrix<T>, Matrix<T>)> {
    if data.image_dim() != model.image.input_dim() || data.text_dim() != model.text.input_dim() {
        return Err(Error::Config(format!(
            "data dims (d_I={}, d_T={}) do not match model (d_I={}, d_T={})",
            data.image_dim(),
            data.text_dim(),
            model.image.input_dim(),
            model.text.input_dim()
        )));
    }
    Ok((
        embed_dataset(model, Modality::Image, &data.image.features)?,
        embed_dataset(model, Modality::Text, &data.text.features)?,
    ))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `u·v / (‖u‖‖v‖)`, or `0` when either vector has zero norm.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let d: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (d / (nu * nv)).clamp(-1.0, 1.0)
}

/// Similarities closer than this are ranked as ties. Equal cosines can come
/// out an ulp apart depending on vector norms.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Gallery indices by descending cosine similarity to `query`, ties broken
/// by ascending index.
pub fn rank_gallery(query: &[f64], gallery: &[Vec<f64>]) -> Vec<usize> {
    let sims: Vec<f64> = gallery.iter().map(|g| cosine_similarity(query, g)).collect();
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && sims[order[end - 1]] - sims[order[end]] <= TIE_TOLERANCE {
            end += 1;
        }
        order[start..end].sort_unstable();
        start = end;
    }
    order
}

/// Mean over relevant positions `k` of `(relevant in top k) / k`. `None`
/// when nothing is relevant.
pub fn average_precision(relevance: &[bool]) -> Option<f64> {
    average_precision_at(relevance, relevance.len())
}

/// AP over the first `k` ranks, normalized by the relevant items found there.
pub fn average_precision_at(relevance: &[bool], k: usize) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, _) in relevance.iter().take(k).enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (i + 1) as f64;
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Image queries against a text gallery.
    ImageToText,
    /// Text queries against an image gallery.
    TextToImage,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::ImageToText => "ITT",
            Direction::TextToImage => "TTI",
        })
    }
}

/// How queries without any relevant gallery item are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZeroRelevant {
    #[default]
    Exclude,
    /// Count them with AP = 0.
    Zero,
}

impl FromStr for ZeroRelevant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(Self::Exclude),
            "zero" => Ok(Self::Zero),
            _ => Err(Error::Config(format!("unknown zero-relevant policy `{s}` (exclude|zero)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RetrievalOptions {
    /// Truncate each ranking at this depth (mAP@k).
    pub map_at: Option<usize>,
    pub zero_relevant: ZeroRelevant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRetrieval {
    pub query: usize,
    pub direction: Direction,
    pub ranking: Vec<usize>,
    pub relevance: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionReport {
    pub direction: Direction,
    pub map: f64,
    /// AP per query; `None` for excluded queries.
    pub aps: Vec<Option<f64>>,
    pub queries: usize,
    pub excluded: usize,
}

impl DirectionReport {
    pub fn record(&self) -> String {
        format!(
            "direction={} map={:.5} queries={} excluded={}",
            self.direction, self.map, self.queries, self.excluded
        )
    }
}

fn rows_f64<T: Scalar>(m: &Matrix<T>) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.iter().map(|v| v.to_f64()).collect()).collect()
}

pub fn rank_queries<T: Scalar>(
    queries: &Matrix<T>,
    query_labels: &[usize],
    gallery: &Matrix<T>,
    gallery_labels: &[usize],
    direction: Direction,
) -> Result<Vec<RankedRetrieval>> {
    if gallery.rows() == 0 {
        return Err(Error::Config("empty retrieval gallery".into()));
    }
    if queries.rows() != query_labels.len() || gallery.rows() != gallery_labels.len() {
        return Err(Error::Pairing("embedding rows and labels differ in length".into()));
    }
    if queries.cols() != gallery.cols() {
        return Err(Error::dim("retrieval", queries.shape(), gallery.shape()));
    }
    let g = rows_f64(gallery);
    Ok(rows_f64(queries)
        .iter()
        .enumerate()
        .map(|(qi, q)| {
            let ranking = rank_gallery(q, &g);
            let relevance = ranking.iter().map(|&j| gallery_labels[j] == query_labels[qi]).collect();
            RankedRetrieval {
                query: qi,
                direction,
                ranking,
                relevance,
            }
        })
        .collect())
}

/// mAP of one retrieval direction over precomputed embeddings.
pub fn mean_average_precision<T: Scalar>(
    queries: &Matrix<T>,
    query_labels: &[usize],
    gallery: &Matrix<T>,
    gallery_labels: &[usize],
    direction: Direction,
    opts: &RetrievalOptions,
) -> Result<DirectionReport> {
    let ranked = rank_queries(queries, query_labels, gallery, gallery_labels, direction)?;
    let depth = opts.map_at.unwrap_or(gallery.rows());
    let aps: Vec<Option<f64>> = ranked
        .iter()
        .map(|r| match (average_precision_at(&r.relevance, depth), opts.zero_relevant) {
            (Some(ap), _) => Some(ap),
            (None, ZeroRelevant::Zero) => Some(0.0),
            (None, ZeroRelevant::Exclude) => None,
        })
        .collect();
    let counted: Vec<f64> = aps.iter().flatten().copied().collect();
    let map = if counted.is_empty() {
        0.0
    } else {
        counted.iter().sum::<f64>() / counted.len() as f64
    };
    Ok(DirectionReport {
        direction,
        map,
        queries: counted.len(),
        excluded: aps.len() - counted.len(),
        aps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub itt: DirectionReport,
    pub tti: DirectionReport,
    pub map_avg: f64,
}

impl RetrievalReport {
    pub fn from_directions(itt: DirectionReport, tti: DirectionReport) -> Self {
        let map_avg = (itt.map + tti.map) / 2.0;
        Self { itt, tti, map_avg }
    }

    pub fn records(&self) -> Vec<String> {
        vec![
            self.itt.record(),
            self.tti.record(),
            format!("map_avg={:.5}", self.map_avg),
        ]
    }
}

/// Both retrieval directions over a paired dataset. Each modality's samples
/// form the gallery for the other's queries.
pub fn evaluate_retrieval<T: Scalar>(
    model: &CobraModel<T>,
    data: &PairedDataset,
    opts: &RetrievalOptions,
) -> Result<RetrievalReport> {
    let (oi, ot) = embed_pairs(model, data)?;
    retrieval_from_embeddings(&oi, data.image.labels.as_slice(), &ot, &data.text.labels, opts)
}

pub fn retrieval_from_embeddings<T: Scalar>(
    o_image: &Matrix<T>,
    labels_image: &[usize],
    o_text: &Matrix<T>,
    labels_text: &[usize],
    opts: &RetrievalOptions,
) -> Result<RetrievalReport> {
    let itt = mean_average_precision(o_image, labels_image, o_text, labels_text, Direction::ImageToText, opts)?;
    let tti = mean_average_precision(o_text, labels_text, o_image, labels_image, Direction::TextToImage, opts)?;
    Ok(RetrievalReport::from_directions(itt, tti))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy_from_logits<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::Config("accuracy over an empty set".into()));
    }
    if logits.rows() != labels.len() {
        return Err(Error::Pairing(format!("{} logit rows for {} labels", logits.rows(), labels.len())));
    }
    let correct = logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Fraction of pairs whose eval-mode head prediction matches `labels`.
pub fn classification_accuracy<T: Scalar>(
    head: &ClassifierHead<T>,
    model: &CobraModel<T>,
    data: &PairedDataset,
    labels: &[usize],
) -> Result<f64> {
    if labels.len() != data.n_pairs() {
        return Err(Error::Config(format!("{} labels for {} pairs", labels.len(), data.n_pairs())));
    }
    if head.joint_dim() != model.joint_dim() {
        return Err(Error::Config(format!(
            "head expects joint dimension {} but the model has {}",
            head.joint_dim(),
            model.joint_dim()
        )));
    }
    let (oi, ot) = embed_pairs(model, data)?;
    // Eval mode never draws from the generator.
    let logits = head.classify(&ot, &oi, Mode::Eval, &mut Rng::new(0))?;
    accuracy_from_logits(&logits, labels)
}

pub const IMAGE_EMBEDDINGS_FILE: &str = "image_embeddings.feat";
pub const TEXT_EMBEDDINGS_FILE: &str = "text_embeddings.feat";

/// Writes `O_image` and `O_text` as feature files in `dir`, keeping labels.
pub fn export_embeddings<T: Scalar>(
    model: &CobraModel<T>,
    data: &PairedDataset,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let (oi, ot) = embed_pairs(model, data)?;
    let img = FeatureDataset::new(Modality::Image, oi.cast(), data.image.labels.clone(), data.num_classes())?;
    let txt = FeatureDataset::new(Modality::Text, ot.cast(), data.text.labels.clone(), data.num_classes())?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let pi = dir.join(IMAGE_EMBEDDINGS_FILE);
    let pt = dir.join(TEXT_EMBEDDINGS_FILE);
    write_feature_file(&img, &pi)?;
    write_feature_file(&txt, &pt)?;
    Ok((pi, pt))
}
