//! Two-stage classification: learn the joint space, freeze it, then train a
//! fusion head on the concatenated text and image embeddings. A head trained
//! on shuffled labels serves as a chance-level control.
//!
//! Usage: `cargo run --release --example classify -- [epochs] [seed]`

use cobra::data::{generate_synthetic, split, SyntheticSpec};
use cobra::eval::classification_accuracy;
use cobra::numeric::Rng;
use cobra::training::{train, train_classifier, HeadConfig, TrainConfig};

fn main() -> cobra::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(10, |a| a.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));

    let data = generate_synthetic(&SyntheticSpec { seed, ..SyntheticSpec::default() })?;
    let (tr, va, te) = split(&data, [0.8, 0.1, 0.1], seed)?;
    let config = TrainConfig { epochs, seed, ..TrainConfig::default() };
    let model = train::<f32>(&tr, &va, &config, None, &mut |r| eprintln!("{}", r.record()))?.model;

    let head_cfg = HeadConfig { seed, ..HeadConfig::default() };
    let head = train_classifier(&model, &tr, tr.labels(), &head_cfg)?;
    println!("val accuracy={:.5}", classification_accuracy(&head, &model, &va, va.labels())?);
    println!("test accuracy={:.5}", classification_accuracy(&head, &model, &te, te.labels())?);

    let mut shuffled = tr.labels().to_vec();
    Rng::new(seed ^ 0x5eed).shuffle(&mut shuffled);
    let control = train_classifier(&model, &tr, &shuffled, &head_cfg)?;
    println!(
        "shuffled-label control accuracy={:.5} (chance {:.2})",
        classification_accuracy(&control, &model, &te, te.labels())?,
        1.0 / data.num_classes() as f64
    );
    Ok(())
}
