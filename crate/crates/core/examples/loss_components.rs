//! Walk through the loss components on one minibatch of a small untrained
//! model: reconstruction, cross-modal, supervised and contrastive terms,
//! then the weighted total under a few weightings.

use cobra::data::{generate_synthetic, SyntheticSpec};
use cobra::losses::{
    batch_meta, component_losses, nce_posterior, sample_contrastive_sets, total_loss, ContrastiveVariant,
    LossConfig, LossWeights, NoiseModel,
};
use cobra::model::Architecture;
use cobra::numeric::{Rng, Stream};
use cobra::{CobraModel, Matrix};

fn main() -> cobra::Result<()> {
    let data = generate_synthetic(&SyntheticSpec { classes: 4, per_class: 4, ..SyntheticSpec::default() })?;
    let model: CobraModel<f64> =
        CobraModel::new(data.image_dim(), data.text_dim(), data.num_classes(), &Architecture::tiny(32, 8), 1)?;

    let x_image: Matrix<f64> = data.image.features.cast();
    let x_text: Matrix<f64> = data.text.features.cast();
    let cache = model.forward_full(&x_image, &x_text)?;

    let labels = data.labels();
    let meta = batch_meta(labels, labels);
    let mut rng = Rng::stream(1, Stream::Negatives);
    let sampling = sample_contrastive_sets(&meta, 5, None, &mut rng)?;
    println!("{} contrastive sets, {} anchors skipped", sampling.sets.len(), sampling.skipped_anchors);

    for variant in [ContrastiveVariant::SetForm, ContrastiveVariant::Nce] {
        let cfg = LossConfig { variant, ..LossConfig::default() };
        let parts = component_losses(&cache, labels, labels, &sampling, true, &cfg)?;
        let v = parts.values();
        println!("{variant:?}: l_r={:.4} l_m={:.4} l_s={:.4} l_c={:.4}", v.l_r, v.l_m, v.l_s, v.l_c);
        for w in [LossWeights::default(), LossWeights::new(1.0, 1.0, 1.0, 0.0)?, LossWeights::new(0.0, 0.0, 0.0, 1.0)?] {
            let total = total_loss(&parts, &w)?;
            println!(
                "  lambda (r {} s {} m {} c {}) total={:.4}",
                w.lambda_r, w.lambda_s, w.lambda_m, w.lambda_c, total.total
            );
        }
    }

    // With equal data and noise densities the posterior is 1/(1+N).
    for n in [1, 4, 9] {
        let noise = NoiseModel::new(n, 0.1)?;
        println!("N={n} posterior={:.4}", nce_posterior(0.1, &noise)?);
    }
    Ok(())
}
