//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use trajsampler::baselines::{LinearPredictor, LinearPredictorConfig, VelocityEstimate};
use trajsampler::evaluation::{
    evaluate_model, mode_coverage, scene_table, EvalOptions, MetricsReport, ModeClusters, Predictor, SampleLabel,
    SampleSet,
};
use trajsampler::experiment::{
    check_distribution_quality, check_mode_preservation, run_experiment, ExperimentConfig, RunResult,
};
use trajsampler::io::write_atomic;
use trajsampler::kv::KvConfig;
use trajsampler::model::{Checkpoint, Model};
use trajsampler::rng;
use trajsampler::tensor::Real;
use trajsampler::training::{checkpoint_paths, train as train_model, LogRecord, Regime};
use trajsampler::Error;

use crate::config::{Precision, RunConfig};
use crate::data::{self, SceneSet, TOY_LABELS, TOY_TRAJECTORIES};
use crate::plot;
use crate::samples::{write_samples, SampleRecord, SAMPLES_NAME};

pub const REPORT_NAME: &str = "report.txt";
pub const SCENES_NAME: &str = "scenes.tsv";
pub const SERIES_NAME: &str = "series.tsv";
pub const VERDICTS_NAME: &str = "verdicts.txt";

/// Coverage threshold on the toy set: at most one of 18 modes missed on average.
const MIN_COVERAGE: f64 = 17.0 / 18.0;

macro_rules! with_precision {
    ($cfg:expr, $f:ident ( $($arg:expr),* )) => {
        match $cfg.precision {
            Precision::F32 => $f::<f32>($($arg),*),
            Precision::F64 => $f::<f64>($($arg),*),
        }
    };
}

pub fn gen_toy(cfg: &RunConfig) -> Result<()> {
    cfg.write_resolved()?;
    let toy = trajsampler::datasets::generate_toy_dataset(&cfg.toy, cfg.model.obs_len, cfg.model.pred_len)?;
    toy.table.write(&cfg.out.join(TOY_TRAJECTORIES))?;
    toy.labels.write(&cfg.out.join(TOY_LABELS))?;
    println!("wrote {} trajectories ({} modes) to {}", toy.labels.len(), cfg.toy.n_modes(), cfg.out.display());
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    cfg.write_resolved()?;
    let set = data::training_scenes(cfg)?;
    with_precision!(cfg, train_with(cfg, &set))
}

fn train_with<T: Real>(cfg: &RunConfig, set: &SceneSet) -> Result<()> {
    let observer = |r: &LogRecord| {
        eprintln!(
            "iter {:>7}  d {:.4}  g {:.4}  info {:.4}  D(real) {:.3}  D(fake) {:.3}",
            r.iteration, r.d_loss, r.g_loss, r.info_loss, r.d_real, r.d_fake
        )
    };
    let out = train_model::<T>(&set.scenes, cfg.model.clone(), &cfg.train, Some(&cfg.out), cfg.resume.as_deref(), observer)
        .with_context(|| format!("training {} on {} scenes", cfg.train.regime, set.scenes.len()))?;
    if let Some(p) = out.checkpoint {
        println!("{}", p.display());
    }
    Ok(())
}

fn load_model<T: Real>(cfg: &RunConfig, path: &Path) -> Result<Model<T>> {
    let ck = Checkpoint::<T>::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if ck.dims != cfg.model {
        let want = cfg.model.entries();
        let diff: Vec<String> = ck
            .dims
            .entries()
            .into_iter()
            .zip(want)
            .filter(|(a, b)| a != b)
            .map(|((k, got), (_, exp))| format!("model.{k} is {got} in the checkpoint but {exp} in the config"))
            .collect();
        return Err(Error::Config(format!("checkpoint dimensions do not match: {}", diff.join("; "))).into());
    }
    Ok(Model::from_checkpoint(&ck)?)
}

fn checkpoint_arg<'a>(cfg: &'a RunConfig, command: &str) -> Result<&'a Path> {
    cfg.checkpoint
        .as_deref()
        .ok_or_else(|| Error::Config(format!("{command} needs a checkpoint (--checkpoint)")).into())
}

pub fn predict(cfg: &RunConfig) -> Result<()> {
    let path = checkpoint_arg(cfg, "predict")?;
    cfg.write_resolved()?;
    let set = data::prediction_scenes(cfg)?;
    with_precision!(cfg, predict_with(cfg, path, &set))
}

fn predict_with<T: Real>(cfg: &RunConfig, path: &Path, set: &SceneSet) -> Result<()> {
    let model = load_model::<T>(cfg, path)?;
    let mut rng = rng::stream(cfg.seed, "predict");
    let mut records = Vec::with_capacity(set.scenes.len() * cfg.n_samples);
    for scene in &set.scenes {
        for (i, s) in model.sample(scene, cfg.n_samples, &mut rng)?.into_iter().enumerate() {
            records.push(SampleRecord::new(records.len() as i64, scene, i, s));
        }
    }
    let out = cfg.out.join(SAMPLES_NAME);
    write_samples(&out, &records, set.frame_step, cfg.frame_rate)?;
    println!("wrote {} samples for {} scenes to {}", records.len(), set.scenes.len(), out.display());
    Ok(())
}

fn baseline(name: &str, pred_len: usize) -> Result<LinearPredictor> {
    let estimate = match name {
        "linear" => VelocityEstimate::LastFrame,
        _ => match name.strip_prefix("linear_mean").and_then(|k| k.parse().ok()) {
            Some(k) => VelocityEstimate::MeanOfLastK(k),
            None => return Err(Error::Config(format!("unknown baseline `{name}` (expected linear or linear_meanK)")).into()),
        },
    };
    let config = LinearPredictorConfig { velocity_estimate: estimate };
    config.validate()?;
    Ok(LinearPredictor { config, pred_len })
}

/// Scores of one predictor on the test scenes; mode coverage on toy data.
fn score(cfg: &RunConfig, predictor: &dyn Predictor, set: &SceneSet, hash: String) -> Result<(MetricsReport, String)> {
    let options = EvalOptions { k: cfg.eval_k, set_size: cfg.eval_set_size, seed: cfg.seed, groups: set.groups() };
    let (mut report, rows) = evaluate_model(predictor, &set.scenes, &options)?;
    report.config_hash = hash;
    if let (Some(toy), Some(conds)) = (data::load_toy(cfg)?, &set.conditions) {
        let clusters = ModeClusters::from_toy(&toy)?;
        let mut rng = rng::stream(cfg.seed, "eval.coverage");
        let mut sets = Vec::new();
        let mut seen = Vec::new();
        for (scene, c) in set.scenes.iter().zip(conds) {
            if !seen.contains(c) {
                seen.push(*c);
                let futures = predictor.predict(scene, cfg.coverage_samples, &mut rng)?;
                sets.push(SampleSet::new(futures, SampleLabel::Generated)?);
            }
        }
        report.mode_coverage = Some(mode_coverage(&sets, &clusters));
    }
    Ok((report, scene_table(&rows)))
}

fn write_report(cfg: &RunConfig, report: &MetricsReport, table: &str) -> Result<()> {
    write_atomic(&cfg.out.join(REPORT_NAME), report.to_kv_text().as_bytes())?;
    write_atomic(&cfg.out.join(SCENES_NAME), table.as_bytes())?;
    println!(
        "{}: ade {:.4} fde {:.4} one_nn_accuracy {:.4} emd {:.4} over {} scenes (K={})",
        report.predictor,
        report.ade,
        report.fde,
        report.one_nn_accuracy.unwrap_or(f64::NAN),
        report.emd.unwrap_or(f64::NAN),
        report.n_scenes,
        report.k
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let set_for = |cfg: &RunConfig| data::test_scenes(cfg);
    if let Some(name) = &cfg.baseline {
        let predictor = baseline(name, cfg.model.pred_len)?;
        cfg.write_resolved()?;
        let (report, table) = score(cfg, &predictor, &set_for(cfg)?, String::new())?;
        return write_report(cfg, &report, &table);
    }
    let path = checkpoint_arg(cfg, "evaluate without --baseline")?;
    cfg.write_resolved()?;
    let set = set_for(cfg)?;
    if path.is_dir() {
        return with_precision!(cfg, evaluate_series(cfg, path, &set));
    }
    with_precision!(cfg, evaluate_one(cfg, path, &set))
}

fn model_hash<T: Real>(path: &Path) -> Result<(String, u64)> {
    let ck = Checkpoint::<T>::load(path)?;
    let hash = ck.meta.get("config_hash").and_then(|v| v.as_str()).unwrap_or_default().to_string();
    let it = ck.meta.get("iteration").and_then(|v| v.as_u64()).unwrap_or(0);
    Ok((hash, it))
}

fn evaluate_one<T: Real>(cfg: &RunConfig, path: &Path, set: &SceneSet) -> Result<()> {
    let model = load_model::<T>(cfg, path)?;
    let (hash, _) = model_hash::<T>(path)?;
    let (report, table) = score(cfg, &model, set, hash)?;
    write_report(cfg, &report, &table)
}

/// Checkpoints of a training directory, oldest first.
fn snapshots(dir: &Path) -> Result<Vec<PathBuf>> {
    let snaps = checkpoint_paths(dir).2;
    let root = if snaps.is_dir() { snaps } else { dir.to_path_buf() };
    let mut out: Vec<PathBuf> = std::fs::read_dir(&root)
        .map_err(|e| Error::io(&root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsck"))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::Empty(format!("no checkpoints in {}", root.display())).into());
    }
    Ok(out)
}

fn evaluate_series<T: Real>(cfg: &RunConfig, dir: &Path, set: &SceneSet) -> Result<()> {
    let mut rows: Vec<(u64, MetricsReport, String)> = Vec::new();
    for path in snapshots(dir)? {
        let model = load_model::<T>(cfg, &path)?;
        let (hash, it) = model_hash::<T>(&path)?;
        let (report, table) = score(cfg, &model, set, hash)?;
        eprintln!("iteration {it}: ade {:.4} emd {:.4}", report.ade, report.emd.unwrap_or(f64::NAN));
        rows.push((it, report, table));
    }
    rows.sort_by_key(|r| r.0);
    rows.dedup_by_key(|r| r.0);
    let mut text = String::from("iteration\tade\tfde\tone_nn_accuracy\temd\tmode_coverage\n");
    for (it, r, _) in &rows {
        let f = |v: Option<f64>| v.map_or("nan".to_string(), |x| x.to_string());
        let _ = writeln!(text, "{it}\t{}\t{}\t{}\t{}\t{}", r.ade, r.fde, f(r.one_nn_accuracy), f(r.emd), f(r.mode_coverage));
    }
    write_atomic(&cfg.out.join(SERIES_NAME), text.as_bytes())?;
    let (_, report, table) = rows.last().ok_or_else(|| anyhow!("no snapshots evaluated"))?;
    write_report(cfg, report, table)
}

pub fn plot(cfg: &RunConfig) -> Result<()> {
    if !plot::KINDS.contains(&cfg.plot_kind.as_str()) {
        return Err(Error::Config(format!(
            "unknown plot kind `{}` (valid kinds: {})",
            cfg.plot_kind,
            plot::KINDS.join(", ")
        ))
        .into());
    }
    for input in &cfg.plot_inputs {
        let p = Path::new(input.split_once('=').map_or(input.as_str(), |(_, p)| p));
        if !p.exists() {
            return Err(Error::MissingDataset(p.display().to_string()).into());
        }
    }
    cfg.write_resolved()?;
    for f in plot::run(cfg)? {
        println!("{}", f.display());
    }
    Ok(())
}

fn experiment_config(cfg: &RunConfig) -> ExperimentConfig {
    ExperimentConfig {
        regimes: cfg.regimes.clone(),
        seeds: cfg.seeds.clone(),
        iterations: cfg.train.iterations,
        checkpoint_every: cfg.train.checkpoint_every,
        samples_per_condition: cfg.coverage_samples,
        set_size: cfg.eval_set_size,
        toy: cfg.toy.clone(),
        dims: cfg.model.clone(),
        train: cfg.train.clone(),
    }
}

/// Text summary of finished runs plus the two toy-set verdicts.
pub fn verdict_text(results: &[RunResult], seeds: &[u64]) -> String {
    let mut s = String::new();
    for r in results {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let _ = writeln!(
            s,
            "{} seed {}: coverage {:.3} mean_emd {:.4} mean_one_nn {:.3}",
            r.regime,
            r.seed,
            r.coverage,
            mean(&r.emd),
            mean(&r.one_nn_accuracy)
        );
    }
    let mp = check_mode_preservation(results, seeds, MIN_COVERAGE);
    let dq = check_distribution_quality(results, seeds);
    let word = |p: bool| if p { "PASS" } else { "FAIL" };
    let _ = writeln!(s, "mode_preservation {}: {}", word(mp.pass), mp.detail);
    let _ = writeln!(s, "distribution_quality {}: {}", word(dq.pass), dq.detail);
    s
}

pub fn experiment(cfg: &RunConfig) -> Result<()> {
    if !cfg.is_toy() {
        return Err(Error::Config("experiment runs on the generated toy set (`data = toy`)".into()).into());
    }
    cfg.write_resolved()?;
    let ex = experiment_config(cfg);
    let mut observer = |regime: Regime, seed: u64, r: &LogRecord| {
        eprintln!("{regime} seed {seed} iter {:>7}  d {:.4}  g {:.4}  info {:.4}", r.iteration, r.d_loss, r.g_loss, r.info_loss)
    };
    let results = run_experiment(&ex, &cfg.out, &mut observer)?;
    let text = verdict_text(&results, &ex.seeds);
    write_atomic(&cfg.out.join(VERDICTS_NAME), text.as_bytes())?;
    print!("{text}");
    Ok(())
}
