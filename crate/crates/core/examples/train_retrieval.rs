//! Train on synthetic pairs and report held-out retrieval mAP.
//!
//! Usage: `cargo run --release --example train_retrieval -- [epochs] [seed]`

use cobra::data::{generate_synthetic, split, SyntheticSpec};
use cobra::eval::{evaluate_retrieval, RetrievalOptions};
use cobra::training::{train, TrainConfig};

fn main() -> cobra::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(20, |a| a.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));

    let data = generate_synthetic(&SyntheticSpec { seed, ..SyntheticSpec::default() })?;
    let (tr, va, te) = split(&data, [0.8, 0.1, 0.1], seed)?;
    let config = TrainConfig { epochs, seed, ..TrainConfig::default() };

    let untrained = cobra::model::init_model::<f32>(data.image_dim(), data.text_dim(), data.num_classes(), seed)?;
    let before = evaluate_retrieval(&untrained, &te, &RetrievalOptions::default())?;
    println!("untrained map_avg={:.5}", before.map_avg);

    let outcome = train::<f32>(&tr, &va, &config, None, &mut |r| println!("{}", r.record()))?;
    let report = evaluate_retrieval(&outcome.model, &te, &RetrievalOptions::default())?;
    for line in report.records() {
        println!("{line}");
    }
    println!("best_epoch={} best_val_total={:.5}", outcome.best_epoch, outcome.best_val_loss);
    Ok(())
}
