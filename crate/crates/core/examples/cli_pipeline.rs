//! The command-line workflow driven in-process: synth, train, evaluate and
//! embed, with each command's stdout records printed as they arrive.
//!
//! Usage: `cargo run --release --example cli_pipeline -- [work_dir]`

use std::path::PathBuf;

fn cobra(args: &[&str]) -> i32 {
    println!("$ cobra {}", args.join(" "));
    let argv = std::iter::once("cobra").chain(args.iter().copied());
    cobra::cli::run(argv, &mut std::io::stdout())
}

fn main() {
    let dir: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("cobra-cli"), PathBuf::from);
    let path = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let (data, run, emb) = (path("data"), path("run"), path("emb"));
    let manifest = path("data/manifest.txt");
    let ckpt = path("run/final.ckpt");
    let head = path("run/head.ckpt");

    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--out", &data, "--per-class", "60"],
        vec!["train", "--manifest", &manifest, "--out", &run, "--epochs", "10"],
        vec!["eval-retrieval", "--manifest", &manifest, "--checkpoint", &ckpt, "--eval", "test"],
        vec!["eval-classify", "--manifest", &manifest, "--checkpoint", &ckpt, "--head", &head, "--eval", "test"],
        vec!["embed", "--manifest", &manifest, "--checkpoint", &ckpt, "--eval", "test", "--out", &emb],
    ];
    for step in steps {
        let code = cobra(&step);
        if code != 0 {
            eprintln!("exit {code}");
            std::process::exit(code);
        }
    }
}
