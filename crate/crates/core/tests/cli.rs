use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cobra::data::{load_feature_file, load_manifest};

fn cobra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cobra"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run cobra")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", p(dir), "--per-class", "20", "--classes", "4"];
    args.extend_from_slice(extra);
    let o = cobra(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("manifest.txt")
}

const TINY: &[&str] = &[
    "--encoder-hidden", "24,24", "--latent-dim", "12", "--decoder-hidden", "24,24",
    "--batch", "16", "--negatives", "4", "--head-epochs", "5", "--head-hidden", "16", "--head-dropout", "0.1",
];

fn train(manifest: &Path, out: &Path, epochs: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--manifest", p(manifest), "--out", p(out), "--epochs", epochs];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    cobra(&args)
}

#[test]
fn synth_writes_loadable_deterministic_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = cobra(&["synth", "--out", p(a.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "synth classes=10 pairs=2000 dI=64 dT=32\n");
    let (_, pairs) = load_manifest(&a.path().join("manifest.txt")).unwrap();
    assert_eq!((pairs.n_pairs(), pairs.image_dim(), pairs.text_dim()), (2000, 64, 32));
    cobra(&["synth", "--out", p(b.path())]);
    for f in ["image.feat", "text.feat", "manifest.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn synth_rejects_one_class() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(cobra(&["synth", "--out", p(d.path()), "--classes", "1"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cobra(&["train"]).status.code(), Some(2));
    assert_eq!(cobra(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(cobra(&["train", "--contrastive", "bogus"]).status.code(), Some(2));
}

#[test]
fn train_eval_embed_pipeline() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let manifest = synth(data.path(), &[]);
    let o = train(&manifest, run.path(), "3", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("train epochs=3 best_epoch="));
    for f in ["final.ckpt", "best.ckpt", "head.ckpt", "run.log", "effective.conf"] {
        assert!(run.path().join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(run.path().join("run.log")).unwrap();
    assert_eq!(log.lines().count(), 3);
    for (i, line) in log.lines().enumerate() {
        assert!(line.starts_with(&format!("epoch={} l_r=", i + 1)), "{line}");
        for key in ["l_m=", "l_s=", "l_c=", "total=", "skipped=", "secs="] {
            assert!(line.contains(key), "{line}");
        }
    }
    let conf = fs::read_to_string(run.path().join("effective.conf")).unwrap();
    assert!(conf.contains("epochs=3\n") && conf.contains("latent_dim=12\n"));

    let ckpt = run.path().join("final.ckpt");
    let conf_path = run.path().join("effective.conf");
    let base = ["--manifest", p(&manifest), "--checkpoint", p(&ckpt), "--config", p(&conf_path), "--eval", "test"];

    let mut args = vec!["eval-retrieval"];
    args.extend_from_slice(&base);
    let o = cobra(&args);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("direction=ITT map=") && lines[0].ends_with("queries=8 excluded=0"), "{}", lines[0]);
    assert!(lines[1].starts_with("direction=TTI map="));
    let avg: f64 = lines[2].strip_prefix("map_avg=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&avg));

    let head = run.path().join("head.ckpt");
    let mut args = vec!["eval-classify", "--head", p(&head)];
    args.extend_from_slice(&base);
    let out = stdout(&cobra(&args));
    let (acc, n) = out.trim().split_once(' ').unwrap();
    let acc: f64 = acc.strip_prefix("accuracy=").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(n, "n=8");

    let e1 = tempfile::tempdir().unwrap();
    let e2 = tempfile::tempdir().unwrap();
    for e in [&e1, &e2] {
        let mut args = vec!["embed", "--out", p(e.path())];
        args.extend_from_slice(&base);
        let o = cobra(&args);
        assert_eq!(stdout(&o), "embed n=8 dim=4\n");
    }
    for f in ["image_embeddings.feat", "text_embeddings.feat"] {
        let ds = load_feature_file(&e1.path().join(f)).unwrap();
        assert_eq!((ds.len(), ds.dim()), (8, 4));
        assert_eq!(fs::read(e1.path().join(f)).unwrap(), fs::read(e2.path().join(f)).unwrap());
    }
}

#[test]
fn training_is_byte_deterministic() {
    let data = tempfile::tempdir().unwrap();
    let manifest = synth(data.path(), &[]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let oa = train(&manifest, a.path(), "2", &["--seed", "5"]);
    let ob = train(&manifest, b.path(), "2", &["--seed", "5"]);
    assert_eq!(stdout(&oa), stdout(&ob));
    for f in ["final.ckpt", "best.ckpt", "head.ckpt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let manifest = synth(data.path(), &[]);
    let conf = run.path().join("in.conf");
    fs::write(&conf, "epochs=5\nlambda_c=0.5\n# comment\n").unwrap();
    let o = train(&manifest, run.path(), "2", &["--config", p(&conf), "--no-head"]);
    assert_eq!(o.status.code(), Some(0));
    let eff = fs::read_to_string(run.path().join("effective.conf")).unwrap();
    assert!(eff.contains("epochs=2\n"));
    assert!(eff.contains("lambda_c=0.5\n"));
    assert!(eff.contains("two_stage_head=false\n"));
    assert!(!run.path().join("head.ckpt").exists());

    fs::write(&conf, "unknown_key=1\n").unwrap();
    let o = train(&manifest, run.path(), "2", &["--config", p(&conf)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_four() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let manifest = synth(data.path(), &[]);
    let o = train(&manifest, run.path(), "3", &["--eta", "1e9"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
}

#[test]
fn io_and_mismatch_errors() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let missing = data.path().join("absent.txt");
    assert_eq!(train(&missing, run.path(), "1", &[]).status.code(), Some(3));

    let manifest = synth(data.path(), &[]);
    let other = tempfile::tempdir().unwrap();
    let other_manifest = synth(other.path(), &["--image-dim", "7"]);
    assert_eq!(train(&manifest, run.path(), "1", &["--no-head"]).status.code(), Some(0));
    let o = cobra(&[
        "eval-retrieval", "--manifest", p(&other_manifest), "--checkpoint", p(&run.path().join("final.ckpt")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_command() {
    let o = cobra(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for tag in ["l_r", "l_m", "l_s", "l_c", "loss.total", "head.cross_entropy", "layer.linear"] {
        assert!(out.contains(tag), "{tag}");
    }
    assert!(out.lines().last().unwrap().starts_with("gradcheck checks=15 failed=0"));

    let o = cobra(&["gradcheck", "--corrupt", "layer.relu"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("layer.relu"));
    assert!(stdout(&o).contains("check=layer.relu max_rel_err="));

    assert_eq!(cobra(&["gradcheck", "--dim", "40"]).status.code(), Some(2));
}
