mod common;

use cobra::eval::{
    average_precision, mean_average_precision, rank_queries, Direction, RetrievalOptions, ZeroRelevant,
};
use cobra::model::Architecture;
use cobra::numeric::Rng;
use cobra::{CobraModel, Matrix, Modality};
use proptest::prelude::*;

use common::{check_instance, oracle_ap, random_instance, to_matrix};

#[test]
fn map_matches_brute_force_oracle() {
    let mut rng = Rng::new(2024);
    for instance in 0..50 {
        let inst = random_instance(&mut rng);
        if let Err(e) = check_instance(&inst) {
            panic!("instance {instance}: {e}");
        }
    }
}

#[test]
fn zero_policy_counts_empty_queries() {
    let g = to_matrix(&[vec![1, 0], vec![0, 1]]);
    let q = to_matrix(&[vec![1, 1], vec![1, 0]]);
    let opts = RetrievalOptions { zero_relevant: ZeroRelevant::Zero, map_at: None };
    let r = mean_average_precision(&q, &[0, 7], &g, &[0, 1], Direction::TextToImage, &opts).unwrap();
    assert_eq!(r.queries, 2);
    assert_eq!(r.map, 0.5);
}

fn embeddings(model: &CobraModel<f64>, m: Modality, rows: usize, rng: &mut Rng) -> Matrix<f64> {
    let d = model.pipeline(m).input_dim();
    let x = Matrix::from_fn(rows, d, |_, _| rng.normal());
    model.embed(m, &x).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rankings_invariant_under_positive_scaling(seed in any::<u64>(), k in 1e-3f64..1e3) {
        let model: CobraModel<f64> = CobraModel::new(5, 4, 4, &Architecture::tiny(8, 6), seed).unwrap();
        let mut rng = Rng::new(seed);
        let oi = embeddings(&model, Modality::Image, 12, &mut rng);
        let ot = embeddings(&model, Modality::Text, 10, &mut rng);
        let li: Vec<usize> = (0..12).map(|i| i % 4).collect();
        let lt: Vec<usize> = (0..10).map(|i| (i * 3) % 4).collect();
        let scale = |m: &Matrix<f64>| m.map(|v| v * k);
        for (q, ql, g, gl) in [(&oi, &li, &ot, &lt), (&ot, &lt, &oi, &li)] {
            let a = rank_queries(q, ql, g, gl, Direction::ImageToText).unwrap();
            let b = rank_queries(&scale(q), ql, &scale(g), gl, Direction::ImageToText).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(&x.ranking, &y.ranking);
            }
            let opts = RetrievalOptions::default();
            let m1 = mean_average_precision(q, ql, g, gl, Direction::ImageToText, &opts).unwrap();
            let m2 = mean_average_precision(&scale(q), ql, &scale(g), gl, Direction::ImageToText, &opts).unwrap();
            prop_assert_eq!(m1.map, m2.map);
        }
    }

    #[test]
    fn ap_lies_in_unit_interval(rel in proptest::collection::vec(any::<bool>(), 1..30)) {
        match average_precision(&rel) {
            None => prop_assert!(rel.iter().all(|r| !r)),
            Some(ap) => {
                prop_assert!(ap > 0.0 && ap <= 1.0);
                let expected = oracle_ap(&rel).unwrap().to_f64();
                prop_assert!((ap - expected).abs() <= 1e-12);
            }
        }
    }
}
