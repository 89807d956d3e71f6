//! Export joint-space embeddings for both modalities as feature files and
//! find each image's nearest text neighbours.
//!
//! Usage: `cargo run --release --example export_embeddings -- [out_dir]`

use std::path::PathBuf;

use cobra::data::{generate_synthetic, load_feature_file, split, SyntheticSpec};
use cobra::eval::{export_embeddings, rank_gallery, IMAGE_EMBEDDINGS_FILE, TEXT_EMBEDDINGS_FILE};
use cobra::training::{train, TrainConfig};

fn rows(m: &cobra::Matrix<f32>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&v| v as f64).collect()).collect()
}

fn main() -> cobra::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("cobra-emb"), PathBuf::from);
    let data = generate_synthetic(&SyntheticSpec { per_class: 60, ..SyntheticSpec::default() })?;
    let (tr, va, te) = split(&data, [0.8, 0.1, 0.1], 0)?;
    let model = train::<f32>(&tr, &va, &TrainConfig { epochs: 10, ..TrainConfig::default() }, None, &mut |_| {})?.model;

    export_embeddings(&model, &te, &out)?;
    let images = load_feature_file(&out.join(IMAGE_EMBEDDINGS_FILE))?;
    let texts = load_feature_file(&out.join(TEXT_EMBEDDINGS_FILE))?;
    println!("exported {} pairs of {}-d embeddings to {}", images.len(), images.dim(), out.display());

    let gallery = rows(&texts.features);
    for (q, query) in rows(&images.features).iter().enumerate().take(5) {
        let top: Vec<String> = rank_gallery(query, &gallery)
            .into_iter()
            .take(3)
            .map(|j| format!("{j}(class {})", texts.labels[j]))
            .collect();
        println!("image {q} class {} -> {}", images.labels[q], top.join(" "));
    }
    Ok(())
}
