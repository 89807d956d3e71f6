use cobra::data::{generate_synthetic, split_indices, SyntheticSpec};
use cobra::losses::{
    batch_meta, contrastive_loss_setform, cross_modal_loss, nce_loss, nce_posterior, recon_loss,
    sample_contrastive_sets, supervised_loss, NceForm, NoiseModel, Reduction, ScoreMode,
};
use cobra::numeric::Rng;
use cobra::training::{sample_minibatch, PairTensors};
use cobra::{Matrix, Modality};
use proptest::prelude::*;

fn label_vec(max_len: usize, classes: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::collection::vec(0..classes, 1..max_len)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    proptest::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn contrastive_sets_are_valid(
        li in label_vec(12, 4),
        lt in label_vec(12, 4),
        n_neg in 1usize..12,
        seed in any::<u64>(),
    ) {
        let meta = batch_meta(&li, &lt);
        let out = sample_contrastive_sets(&meta, n_neg, None, &mut Rng::new(seed)).unwrap();
        let class_of = |m: Modality, r: usize| match m {
            Modality::Image => li[r],
            Modality::Text => lt[r],
        };
        let rows = |m: Modality| match m {
            Modality::Image => li.len(),
            Modality::Text => lt.len(),
        };
        if out.single_class {
            prop_assert!(out.sets.is_empty());
            return Ok(());
        }
        prop_assert_eq!(out.sets.len() + out.skipped_anchors, li.len() + lt.len());
        for s in &out.sets {
            prop_assert!(s.anchor.row < rows(s.anchor.modality));
            prop_assert!(s.positive.row < rows(s.positive.modality));
            prop_assert_eq!(s.positive.modality, s.anchor.modality);
            prop_assert_ne!(s.positive, s.anchor);
            let c = class_of(s.anchor.modality, s.anchor.row);
            prop_assert_eq!(class_of(s.positive.modality, s.positive.row), c);
            prop_assert_eq!(s.negatives.len(), n_neg);
            for n in &s.negatives {
                prop_assert!(n.row < rows(n.modality));
                prop_assert_ne!(class_of(n.modality, n.row), c);
            }
            let pool = li.iter().chain(&lt).filter(|&&l| l != c).count();
            if pool >= n_neg {
                let mut uniq = s.negatives.clone();
                uniq.sort_by_key(|r| (r.modality, r.row));
                uniq.dedup();
                prop_assert_eq!(uniq.len(), n_neg);
            }
        }
    }

    #[test]
    fn sampling_is_seed_deterministic(li in label_vec(10, 3), seed in any::<u64>()) {
        let meta = batch_meta(&li, &li);
        let a = sample_contrastive_sets(&meta, 3, Some(4), &mut Rng::new(seed)).unwrap();
        let b = sample_contrastive_sets(&meta, 3, Some(4), &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stratified_split_partitions(labels in label_vec(60, 4), seed in any::<u64>(), f0 in 0.2f64..0.7) {
        let fractions = [f0, (1.0 - f0) / 2.0, (1.0 - f0) / 2.0];
        match split_indices(&labels, 4, fractions, seed) {
            Err(_) => {
                let smallest = (0..4).map(|c| labels.iter().filter(|&&l| l == c).count()).filter(|&n| n > 0).min().unwrap();
                prop_assert!(smallest < 3);
            }
            Ok(parts) => {
                let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
                for c in 0..4 {
                    let n = labels.iter().filter(|&&l| l == c).count() as f64;
                    for (part, f) in parts.iter().zip(fractions) {
                        let k = part.iter().filter(|&&i| labels[i] == c).count() as f64;
                        prop_assert!((k - f * n).abs() < 1.0 + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn paired_minibatches_are_distinct_and_aligned(seed in any::<u64>(), b in 1usize..40) {
        let data = generate_synthetic(&SyntheticSpec { classes: 3, per_class: 10, image_dim: 4, text_dim: 3, latent_dim: 3, separation: 1.0, ..SyntheticSpec::default() }).unwrap();
        let t = PairTensors::<f32>::new(&data);
        let mb = sample_minibatch(&t, b, &mut Rng::new(seed)).unwrap();
        prop_assert_eq!(&mb.image_indices, &mb.text_indices);
        let mut u = mb.image_indices.clone();
        u.sort_unstable();
        u.dedup();
        prop_assert_eq!(u.len(), b.min(30));
    }

    #[test]
    fn squared_error_terms_are_nonnegative(a in matrix(3, 4), b in matrix(3, 4), c in matrix(3, 2), d in matrix(3, 2)) {
        prop_assert!(recon_loss(&a, &b, &c, &d, Reduction::Mean).unwrap().value >= 0.0);
        prop_assert!(cross_modal_loss(&a, &b, Reduction::Sum).unwrap().value >= 0.0);
        prop_assert!(supervised_loss(&a, &[0, 3, 1], 4, Reduction::Mean).unwrap().value >= 0.0);
        prop_assert_eq!(recon_loss(&a, &a, &c, &c, Reduction::Mean).unwrap().value, 0.0);
        prop_assert_eq!(cross_modal_loss(&b, &b, Reduction::Mean).unwrap().value, 0.0);
    }

    #[test]
    fn contrastive_terms_are_finite(oi in matrix(4, 3), ot in matrix(4, 3), seed in any::<u64>()) {
        let labels = [0, 0, 1, 2];
        let sets = sample_contrastive_sets(&batch_meta(&labels, &labels), 3, None, &mut Rng::new(seed)).unwrap().sets;
        let exp = contrastive_loss_setform(&sets, &oi, &ot, ScoreMode::Exp, 0.5).unwrap();
        prop_assert!(exp.value.is_finite() && exp.value >= 0.0);
        let lit = contrastive_loss_setform(&sets, &oi, &ot, ScoreMode::Literal, 1.0).unwrap();
        prop_assert!(lit.value.is_finite());
        for form in [NceForm::Log, NceForm::Literal] {
            let t = nce_loss(&sets, &oi, &ot, form, 1.0).unwrap();
            prop_assert!(t.value.is_finite());
            prop_assert!(t.grad_image.all_finite() && t.grad_text.all_finite());
        }
    }

    #[test]
    fn nce_posterior_is_a_probability(p in 1e-9f64..1e3, n in 1usize..50, q in 1e-6f64..1.0) {
        let post = nce_posterior(p, &NoiseModel::new(n, q).unwrap()).unwrap();
        prop_assert!(post > 0.0 && post < 1.0);
    }
}
