use std::path::Path;

use cobra::data::{feature_file_string, parse_feature_file, FeatureDataset, Manifest};
use cobra::model::{decode_tensors, encode_tensors, load_checkpoint, save_checkpoint, Architecture};
use cobra::{CobraModel, Matrix, Modality};
use proptest::prelude::*;

fn finite_f32() -> impl Strategy<Value = f32> {
    prop_oneof![
        any::<f32>().prop_filter("finite", |v| v.is_finite()),
        -10.0f32..10.0,
        Just(0.0f32),
        Just(-0.0f32),
    ]
}

fn feature_dataset() -> impl Strategy<Value = FeatureDataset> {
    (1usize..12, 1usize..8, 1usize..6, any::<bool>()).prop_flat_map(|(n, d, c, image)| {
        (
            proptest::collection::vec(finite_f32(), n * d),
            proptest::collection::vec(0..c, n),
        )
            .prop_map(move |(values, labels)| {
                let modality = if image { Modality::Image } else { Modality::Text };
                FeatureDataset::new(modality, Matrix::from_vec(n, d, values).unwrap(), labels, c).unwrap()
            })
    })
}

fn tensors() -> impl Strategy<Value = Vec<(String, Matrix<f64>)>> {
    proptest::collection::vec(
        ("[a-z][a-z0-9._]{0,20}", 0usize..5, 0usize..5).prop_flat_map(|(name, r, c)| {
            proptest::collection::vec(any::<f64>(), r * c)
                .prop_map(move |v| (name.clone(), Matrix::from_vec(r, c, v).unwrap()))
        }),
        0..6,
    )
}

fn bits(m: &Matrix<f64>) -> Vec<u64> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn feature_files_round_trip(ds in feature_dataset()) {
        let text = feature_file_string(&ds);
        let back = parse_feature_file(&text, Path::new("p.feat")).unwrap();
        prop_assert_eq!(back.modality, ds.modality);
        prop_assert_eq!(&back.labels, &ds.labels);
        prop_assert_eq!(back.num_classes, ds.num_classes);
        let a: Vec<u32> = back.features.as_slice().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = ds.features.as_slice().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(a, b);
        prop_assert_eq!(feature_file_string(&back), text);
    }

    #[test]
    fn tensor_encoding_round_trips_bitwise(t in tensors()) {
        let bytes = encode_tensors(&t).unwrap();
        let back = decode_tensors(&bytes).unwrap();
        prop_assert_eq!(back.len(), t.len());
        for ((n1, m1), (n2, m2)) in back.iter().zip(&t) {
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(m1.shape(), m2.shape());
            prop_assert_eq!(bits(m1), bits(m2));
        }
    }

    #[test]
    fn truncated_checkpoints_never_decode(t in tensors(), cut in 0.0f64..1.0) {
        let bytes = encode_tensors(&t).unwrap();
        let at = ((bytes.len() as f64) * cut) as usize;
        prop_assume!(at < bytes.len());
        prop_assert!(decode_tensors(&bytes[..at]).is_err());
    }

    #[test]
    fn model_checkpoints_round_trip(
        d_i in 1usize..6, d_t in 1usize..6, c in 1usize..5,
        hidden in 1usize..6, latent in 1usize..5, shared in any::<bool>(), seed in any::<u64>(),
    ) {
        let arch = Architecture { shared_projection: shared, ..Architecture::tiny(hidden, latent) };
        let m: CobraModel<f64> = CobraModel::new(d_i, d_t, c, &arch, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, &path).unwrap();
        let back: CobraModel<f64> = load_checkpoint(&path).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn manifests_round_trip(name in proptest::option::of("[A-Za-z0-9_-]{1,12}"), a in "[a-z]{1,8}\\.feat", b in "[a-z]{1,8}\\.feat") {
        let m = Manifest { name, image_file: a.into(), text_file: b.into() };
        prop_assert_eq!(Manifest::parse(&m.to_text(), Path::new("m.txt")).unwrap(), m);
    }
}
