//! Generate a labelled paired dataset, write it as feature files plus a
//! manifest, and read it back.
//!
//! Usage: `cargo run --example synthetic_data -- [out_dir] [seed]`

use std::path::PathBuf;

use cobra::data::{
    generate_synthetic_detailed, load_manifest, split, write_feature_file, Manifest, SyntheticSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out: PathBuf = args.next().map_or_else(|| std::env::temp_dir().join("cobra-synth"), PathBuf::from);
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));
    std::fs::create_dir_all(&out)?;

    let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
    let synth = generate_synthetic_detailed(&spec)?;
    let pairs = &synth.pairs;
    println!(
        "classes={} pairs={} dI={} dT={} latent={}",
        pairs.num_classes(),
        pairs.n_pairs(),
        pairs.image_dim(),
        pairs.text_dim(),
        synth.prototypes.cols()
    );

    write_feature_file(&pairs.image, &out.join("image.feat"))?;
    write_feature_file(&pairs.text, &out.join("text.feat"))?;
    let manifest = Manifest { name: Some("synthetic".into()), image_file: "image.feat".into(), text_file: "text.feat".into() };
    manifest.write(&out.join("manifest.txt"))?;

    let (_, back) = load_manifest(&out.join("manifest.txt"))?;
    assert_eq!(back.labels(), pairs.labels());

    let (train, val, test) = split(&back, [0.8, 0.1, 0.1], seed)?;
    println!("split train={} val={} test={}", train.n_pairs(), val.n_pairs(), test.n_pairs());
    let mut per_class = vec![0usize; back.num_classes()];
    for &y in test.labels() {
        per_class[y] += 1;
    }
    println!("test pairs per class {per_class:?}");
    println!("wrote {}", out.display());
    Ok(())
}
