//! Text feature files and dataset manifests.
//!
//! Feature file:
//!
//! ```text
//! COBRA-FEAT 1 <modality> <n> <d> <C>
//! <label>,<f1>,<f2>,...,<fd>        (n lines)
//! ```
//!
//! Features are written with the shortest representation that round-trips
//! through `f32`. Manifest: `key=value` lines with keys `name`, `image_file`
//! and `text_file`; blank lines and `#` comments are ignored, file paths are
//! relative to the manifest's directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{make_pairs, FeatureDataset, PairedDataset};
use crate::error::{Error, Result};
use crate::model::Modality;
use crate::numeric::Matrix;

pub const FEATURE_MAGIC: &str = "COBRA-FEAT";
pub const FEATURE_VERSION: u32 = 1;

pub fn feature_file_string(ds: &FeatureDataset) -> String {
    let (n, d) = ds.features.shape();
    let mut out = String::with_capacity(n * (d * 10 + 4) + 64);
    let _ = writeln!(
        out,
        "{FEATURE_MAGIC} {FEATURE_VERSION} {} {n} {d} {}",
        ds.modality, ds.num_classes
    );
    for (row, label) in ds.features.iter_rows().zip(&ds.labels) {
        let _ = write!(out, "{label}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_file(ds: &FeatureDataset, path: &Path) -> Result<()> {
    fs::write(path, feature_file_string(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_feature_file(path: &Path) -> Result<FeatureDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_feature_file(&text, path)
}

pub fn parse_feature_file(text: &str, path: &Path) -> Result<FeatureDataset> {
    let err = |line: usize, msg: String| Error::TextFormat {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != FEATURE_MAGIC {
        return Err(err(
            1,
            format!("expected header `{FEATURE_MAGIC} <version> <modality> <n> <d> <C>`"),
        ));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| err(1, format!("bad {what} `{s}`")))
    };
    let version = num(fields[1], "version")?;
    if version != FEATURE_VERSION as usize {
        return Err(err(1, format!("unsupported version {version}")));
    }
    let modality: Modality = fields[2].parse().map_err(|_| err(1, format!("bad modality `{}`", fields[2])))?;
    let n = num(fields[3], "row count")?;
    let d = num(fields[4], "dimension")?;
    let classes = num(fields[5], "class count")?;
    if n == 0 || d == 0 || classes == 0 {
        return Err(err(1, "n, d and C must be >= 1".into()));
    }

    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut last_line = 1;
    for (lineno, line) in lines {
        last_line = lineno;
        if labels.len() == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(err(lineno, format!("more than the declared {n} rows")));
        }
        if line.trim().is_empty() {
            return Err(err(lineno, "empty feature row".into()));
        }
        let mut toks = line.split(',');
        let label_tok = toks.next().unwrap_or("").trim();
        let label: usize = label_tok
            .parse()
            .map_err(|_| err(lineno, format!("bad label `{label_tok}`")))?;
        if label >= classes {
            return Err(err(lineno, format!("label {label} >= C={classes}")));
        }
        let before = data.len();
        for tok in toks {
            let tok = tok.trim();
            let v: f32 = tok
                .parse()
                .map_err(|_| err(lineno, format!("non-numeric feature `{tok}`")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite feature `{tok}`")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != d {
            return Err(err(lineno, format!("expected {d} features, found {got}")));
        }
        labels.push(label);
    }
    if labels.len() != n {
        return Err(err(
            last_line + 1,
            format!("unexpected end of file: declared {n} rows, found {}", labels.len()),
        ));
    }
    FeatureDataset::new(modality, Matrix::from_vec(n, d, data)?, labels, classes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub name: Option<String>,
    pub image_file: PathBuf,
    pub text_file: PathBuf,
}

/// Parses `key=value` lines. Keys outside `allowed` are rejected.
pub fn parse_key_values(text: &str, path: &Path, allowed: &[&str]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::TextFormat {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !allowed.contains(&k) {
            return Err(err(format!("unknown key `{k}`")));
        }
        if out.iter().any(|(seen, _): &(String, String)| seen == k) {
            return Err(err(format!("duplicate key `{k}`")));
        }
        out.push((k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

impl Manifest {
    pub const KEYS: [&'static str; 3] = ["name", "image_file", "text_file"];

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let kv = parse_key_values(text, path, &Self::KEYS)?;
        let get = |k: &str| kv.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
        let missing = |k: &str| Error::TextFormat {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("missing key `{k}`"),
        };
        Ok(Self {
            name: get("name"),
            image_file: get("image_file").ok_or_else(|| missing("image_file"))?.into(),
            text_file: get("text_file").ok_or_else(|| missing("text_file"))?.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(name) = &self.name {
            let _ = writeln!(out, "name={name}");
        }
        let _ = writeln!(out, "image_file={}", self.image_file.display());
        let _ = writeln!(out, "text_file={}", self.text_file.display());
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Loads a manifest and both feature files, and pairs them.
pub fn load_manifest(path: &Path) -> Result<(Manifest, PairedDataset)> {
    let manifest = Manifest::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let image = load_feature_file(&base.join(&manifest.image_file))?;
    let text = load_feature_file(&base.join(&manifest.text_file))?;
    if image.modality != Modality::Image || text.modality != Modality::Text {
        return Err(Error::Config(format!(
            "{}: image_file/text_file modality tags are {}/{}",
            path.display(),
            image.modality,
            text.modality
        )));
    }
    let pairs = make_pairs(image, text)?;
    Ok((manifest, pairs))
}
