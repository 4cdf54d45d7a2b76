use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trajsampler::datasets::load_trajectory_file;
use trajsampler::model::Checkpoint;

const SMALL: &str = "\
toy.samples_per_branch = 2
model.embed_dim = 8
model.hidden_dim = 8
model.pool_dim = 8
model.noise_dim = 4
model.decoder_head_dims = 8,2
model.disc_proj_dim = 8
train.batch_size = 4
train.iterations = 4
train.log_every = 2
train.checkpoint_every = 2
";

struct Dir(PathBuf);

impl Dir {
    fn new(name: &str) -> Self {
        let p = std::env::temp_dir().join(format!("trajsampler-cli-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&p);
        std::fs::create_dir_all(&p).unwrap();
        std::fs::write(p.join("small.cfg"), SMALL).unwrap();
        Self(p)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.0.join(rel)
    }

    fn s(&self, rel: &str) -> String {
        self.path(rel).display().to_string()
    }
}

impl Drop for Dir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajsampler")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = run(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn train_small(d: &Dir, out: &str, extra: &[&str]) {
    let (cfg, out) = (d.s("small.cfg"), d.s(out));
    let mut args = vec!["train", "--config", &cfg, "--out", &out];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn gen_toy_writes_default_set_reproducibly() {
    let d = Dir::new("gentoy");
    ok(&["gen-toy", "--out", &d.s("a")]);
    let labels = String::from_utf8(read(&d.path("a/toy_labels.txt"))).unwrap();
    assert_eq!(labels.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count(), 2304);
    ok(&["gen-toy", "--out", &d.s("b")]);
    ok(&["gen-toy", "--config", &d.s("a/config.txt"), "--out", &d.s("c")]);
    for f in ["toy_trajectories.txt", "toy_labels.txt"] {
        assert_eq!(read(&d.path(&format!("a/{f}"))), read(&d.path(&format!("b/{f}"))), "{f}");
        assert_eq!(read(&d.path(&format!("a/{f}"))), read(&d.path(&format!("c/{f}"))), "{f}");
    }
    ok(&["gen-toy", "--seed", "5", "--out", &d.s("e")]);
    assert_ne!(read(&d.path("a/toy_trajectories.txt")), read(&d.path("e/toy_trajectories.txt")));
}

#[test]
fn exit_codes_follow_error_classes() {
    let d = Dir::new("codes");
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let (c, err) = code(&["train", "--set", "train.widgets=3", "--out", &d.s("x")]);
    assert_eq!(c, 1);
    assert!(err.contains("train.widgets"), "{err}");
    assert_eq!(code(&["train", "--no-such-flag"]).0, 1);
    assert_eq!(code(&["train", "--set", "train.batch_size=0", "--out", &d.s("x")]).0, 1);
    let (c, err) = code(&["train", "--data", &d.s("missing"), "--out", &d.s("x")]);
    assert_eq!(c, 2);
    assert!(err.contains("missing"), "{err}");
    std::fs::write(d.path("bad.tsck"), b"not a checkpoint").unwrap();
    let (c, err) = code(&["predict", "--checkpoint", &d.s("bad.tsck"), "--out", &d.s("x")]);
    assert_eq!(c, 2);
    assert!(err.contains("bad.tsck"), "{err}");
    assert_eq!(code(&["predict", "--out", &d.s("x")]).0, 1);
    let (c, err) = code(&["plot", "--kind", "histogram", "--out", &d.s("x")]);
    assert_eq!(c, 1);
    for k in ["toy_samples", "metric_curves", "scene_overlay"] {
        assert!(err.contains(k), "{err}");
    }
}

#[test]
fn train_writes_log_and_resumes_without_change() {
    let d = Dir::new("train");
    train_small(&d, "run", &[]);
    let log = String::from_utf8(read(&d.path("run/train.log"))).unwrap();
    assert_eq!(log.lines().count(), 4 / 2 + 1);
    assert!(d.path("run/snapshots/iter_0000002.tsck").exists());
    assert!(d.path("run/config.txt").exists());

    train_small(&d, "resumed", &["--resume", &d.s("run/model.tsck")]);
    let a = Checkpoint::<f64>::load(&d.path("run/model.tsck")).unwrap();
    let b = Checkpoint::<f64>::load(&d.path("resumed/model.tsck")).unwrap();
    for name in ["generator", "discriminator", "q"] {
        assert_eq!(a.section(name), b.section(name), "{name}");
    }
    assert_eq!(a.meta["iteration"], b.meta["iteration"]);
}

#[test]
fn regime_flag_selects_loss_wiring() {
    let d = Dir::new("regime");
    train_small(&d, "init", &["--iterations", "0"]);
    train_small(&d, "vanilla", &["--regime", "vanilla"]);
    train_small(&d, "infogan", &["--regime", "infogan"]);
    let q = |run: &str| Checkpoint::<f64>::load(&d.path(&format!("{run}/model.tsck"))).unwrap().section("q").cloned();
    assert_eq!(q("init"), q("vanilla"));
    assert_ne!(q("init"), q("infogan"));
}

#[test]
fn predict_is_seeded_and_round_trips() {
    let d = Dir::new("predict");
    train_small(&d, "run", &[]);
    let scene: String = (0..8).map(|t| format!("{}\t7\t{}\t{}\n", t * 10, 0.4 * t as f64, 1.0)).collect();
    std::fs::write(d.path("scene.txt"), scene).unwrap();
    let cfg = d.s("run/config.txt");
    let ck = d.s("run/model.tsck");
    let scenes = d.s("scene.txt");
    for out in ["p1", "p2"] {
        ok(&["predict", "--config", &cfg, "--checkpoint", &ck, "--scenes", &scenes, "--n-samples", "128", "--out", &d.s(out)]);
    }
    assert_eq!(read(&d.path("p1/samples.txt")), read(&d.path("p2/samples.txt")));
    assert_eq!(read(&d.path("p1/samples.meta.tsv")), read(&d.path("p2/samples.meta.tsv")));
    ok(&["predict", "--config", &d.s("p1/config.txt"), "--out", &d.s("p3")]);
    assert_eq!(read(&d.path("p1/samples.txt")), read(&d.path("p3/samples.txt")));

    let table = load_trajectory_file(&d.path("p1/samples.txt"), 2.5).unwrap();
    assert_eq!(table.frame_step(), 10);
    let tracks = table.tracklets();
    assert_eq!(tracks.len(), 128);
    assert!(tracks.iter().all(|t| t.positions.len() == 20 && t.first_frame == 0));
    let meta = String::from_utf8(read(&d.path("p1/samples.meta.tsv"))).unwrap();
    assert_eq!(meta.lines().count(), 129);
    let first: Vec<&str> = meta.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(first[3], "7");
    assert_eq!(first[6].split(',').count(), 4);
    assert_eq!(first[7].split(',').count(), 2);

    ok(&["predict", "--config", &cfg, "--checkpoint", &ck, "--scenes", &scenes, "--seed", "1", "--out", &d.s("p4")]);
    assert_ne!(read(&d.path("p1/samples.txt")), read(&d.path("p4/samples.txt")));

    let (c, err) = code(&["predict", "--config", &cfg, "--checkpoint", &ck, "--set", "model.hidden_dim=9", "--out", &d.s("x")]);
    assert_eq!(c, 1);
    assert!(err.contains("hidden_dim"), "{err}");
}

#[test]
fn evaluate_baseline_needs_no_checkpoint() {
    let d = Dir::new("evaluate");
    ok(&["evaluate", "--config", &d.s("small.cfg"), "--baseline", "linear", "--out", &d.s("ev")]);
    let report = String::from_utf8(read(&d.path("ev/report.txt"))).unwrap();
    let keys: Vec<&str> = report.lines().filter_map(|l| l.split_once(" = ").map(|(k, _)| k)).collect();
    for k in ["ade", "fde", "one_nn_accuracy", "emd", "mode_coverage"] {
        assert!(keys.contains(&k), "{k} missing from {report}");
    }
    assert!(report.contains("predictor = linear"));
    let config = String::from_utf8(read(&d.path("ev/config.txt"))).unwrap();
    assert!(config.contains("eval.k = 20"), "{config}");
    let scenes = String::from_utf8(read(&d.path("ev/scenes.tsv"))).unwrap();
    assert_eq!(scenes.lines().count(), 6 * 3 * 2 + 1);
}

#[test]
fn plots_emit_expected_files() {
    let d = Dir::new("plot");
    train_small(&d, "a", &["--regime", "vanilla"]);
    train_small(&d, "b", &["--regime", "infogan"]);
    let cfg = d.s("a/config.txt");
    ok(&["predict", "--config", &cfg, "--checkpoint", &d.s("a/model.tsck"), "--n-samples", "8", "--out", &d.s("p")]);

    let out = ok(&["plot", "--config", &cfg, "--kind", "toy_samples", "--out", &d.s("toy"), &d.s("p/samples.txt")]);
    assert_eq!(out.lines().count(), 6);
    assert!(d.path("toy/toy_samples_c5.svg").exists());

    let curves = [format!("vanilla={}", d.s("a/train.log")), format!("infogan={}", d.s("b/train.log"))];
    ok(&["plot", "--kind", "metric_curves", "--out", &d.s("curves"), &curves[0], &curves[1]]);
    let svg = String::from_utf8(read(&d.path("curves/metric_curves_d_loss.svg"))).unwrap();
    assert!(svg.contains("vanilla") && svg.contains("infogan"));
    assert!(svg.contains("#1F77B4") && svg.contains("#FF7F0E"), "one colour per curve");

    let out = ok(&["plot", "--config", &cfg, "--kind", "scene_overlay", "--out", &d.s("ov"), &d.s("p/samples.txt")]);
    assert_eq!(out.lines().count(), 6);
    let svg = String::from_utf8(read(&d.path("ov/scene_overlay_0.svg"))).unwrap();
    for color in ["#0000FF", "#00FFFF", "#FF00FF"] {
        assert!(svg.contains(color), "{color}");
    }
}
