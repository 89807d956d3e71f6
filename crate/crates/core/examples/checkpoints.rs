//! Save a trained model and fusion head, reload them, and confirm the
//! reloaded pair produces identical embeddings and predictions.
//!
//! Usage: `cargo run --release --example checkpoints -- [dir]`

use std::path::PathBuf;

use cobra::data::{generate_synthetic, split, SyntheticSpec};
use cobra::eval::{classification_accuracy, embed_pairs};
use cobra::model::{load_checkpoint, load_head, read_tensors, save_checkpoint, save_head, Architecture};
use cobra::training::{train, train_classifier, HeadConfig, TrainConfig};
use cobra::CobraModel;

fn main() -> cobra::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("cobra-ckpt"), PathBuf::from);
    std::fs::create_dir_all(&dir).map_err(|e| cobra::Error::Io { path: dir.clone(), source: e })?;

    let data = generate_synthetic(&SyntheticSpec { per_class: 40, ..SyntheticSpec::default() })?;
    let (tr, va, te) = split(&data, [0.8, 0.1, 0.1], 0)?;
    let config = TrainConfig { epochs: 5, architecture: Architecture::tiny(64, 32), ..TrainConfig::default() };
    let model = train::<f32>(&tr, &va, &config, None, &mut |_| {})?.model;
    let head = train_classifier(&model, &tr, tr.labels(), &HeadConfig::default())?;

    let (model_path, head_path) = (dir.join("model.ckpt"), dir.join("head.ckpt"));
    save_checkpoint(&model, &model_path)?;
    save_head(&head, &head_path)?;
    for (name, m) in read_tensors(&model_path)? {
        println!("{name} {}x{}", m.rows(), m.cols());
    }

    let model2: CobraModel<f32> = load_checkpoint(&model_path)?;
    let head2 = load_head::<f32>(&head_path)?;
    assert_eq!(model2.to_tensors(), model.to_tensors());
    let (a, b) = (embed_pairs(&model, &te)?, embed_pairs(&model2, &te)?);
    assert!(a.0 == b.0 && a.1 == b.1);
    let acc = classification_accuracy(&head, &model, &te, te.labels())?;
    let acc2 = classification_accuracy(&head2, &model2, &te, te.labels())?;
    assert_eq!(acc, acc2);
    println!("reloaded model and head agree: test accuracy={acc:.5}");

    // Checkpoints hold f64 tensors, so the same file loads at either precision.
    let wide: CobraModel<f64> = load_checkpoint(&model_path)?;
    println!("joint_dim={} classes={}", wide.joint_dim(), wide.num_classes());
    Ok(())
}
