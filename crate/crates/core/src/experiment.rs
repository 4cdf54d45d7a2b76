//! Mode-preservation study on the toy set: train several regimes over
//! several seeds, then score mode coverage and per-condition distribution
//! quality. Runs are cached on disk and resume where they stopped.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{build_scenes, generate_toy_dataset, Scene, ToyConfig, ToyDataset, Window};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, mode_coverage, EvalOptions, ModeClusters, SampleLabel, SampleSet};
use crate::io::write_atomic;
use crate::model::{Checkpoint, Model, ModelDims};
use crate::rng;
use crate::training::{train, LogRecord, Regime, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    pub iterations: u64,
    /// Snapshot cadence; also the resume granularity.
    pub checkpoint_every: u64,
    /// Samples drawn from one fixed observation per condition for coverage.
    pub samples_per_condition: usize,
    /// Real and generated set size per condition for 1-NN and EMD.
    pub set_size: usize,
    pub toy: ToyConfig,
    pub dims: ModelDims,
    /// Shared training settings; `regime`, `seed` and `iterations` are overridden per run.
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regimes: vec![Regime::InfoGan, Regime::Vanilla, Regime::L2, Regime::Variety, Regime::Unrolled],
            seeds: vec![0, 1, 2],
            iterations: 20_000,
            checkpoint_every: 1_000,
            samples_per_condition: 128,
            set_size: 20,
            toy: ToyConfig::default(),
            dims: ModelDims::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn run_config(&self, regime: Regime, seed: u64) -> TrainConfig {
        TrainConfig {
            regime,
            seed,
            iterations: self.iterations,
            checkpoint_every: self.checkpoint_every,
            ..self.train.clone()
        }
    }

    pub fn run_dir(&self, root: &Path, regime: Regime, seed: u64) -> PathBuf {
        root.join(regime.name()).join(format!("seed{seed}"))
    }
}

/// Scores of one trained run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub regime: Regime,
    pub seed: u64,
    pub iteration: u64,
    pub coverage: f64,
    /// Per condition, indexed by condition.
    pub emd: Vec<f64>,
    pub one_nn_accuracy: Vec<f64>,
}

/// Toy scenes with their condition labels.
pub struct ToyBench {
    pub toy: ToyDataset,
    pub scenes: Vec<Scene>,
    pub conditions: Vec<usize>,
    pub clusters: ModeClusters,
}

impl ToyBench {
    pub fn new(toy_config: &ToyConfig, dims: &ModelDims) -> Result<Self> {
        let toy = generate_toy_dataset(toy_config, dims.obs_len, dims.pred_len)?;
        let window = Window { obs_len: dims.obs_len, pred_len: dims.pred_len, stride: 1 };
        let scenes = build_scenes(&toy.table, window)?;
        let conditions = scenes
            .iter()
            .map(|s| {
                toy.labels
                    .get(s.target_id())
                    .map(|(c, _)| c)
                    .ok_or_else(|| Error::Validation(format!("agent {} has no mode label", s.target_id())))
            })
            .collect::<Result<Vec<_>>>()?;
        let clusters = ModeClusters::from_toy(&toy)?;
        Ok(Self { toy, scenes, conditions, clusters })
    }

    pub fn n_conditions(&self) -> usize {
        self.toy.labels.n_conditions()
    }

    /// The first scene of each condition; its observation conditions the coverage samples.
    pub fn anchor_scenes(&self) -> Vec<&Scene> {
        (0..self.n_conditions())
            .filter_map(|c| self.conditions.iter().position(|&k| k == c).map(|i| &self.scenes[i]))
            .collect()
    }
}

/// Mode coverage and per-condition 1-NN and EMD of one model.
pub fn score_model<T: crate::tensor::Real>(
    model: &Model<T>,
    bench: &ToyBench,
    samples_per_condition: usize,
    set_size: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let mut sample_rng = rng::stream(seed, "eval.samples");
    let mut sets = Vec::new();
    for scene in bench.anchor_scenes() {
        let futures = model.sample(scene, samples_per_condition, &mut sample_rng)?;
        sets.push(SampleSet::new(futures.into_iter().map(|p| p.positions).collect(), SampleLabel::Generated)?);
    }
    let coverage = mode_coverage(&sets, &bench.clusters);

    let mut pick_rng = rng::stream(seed, "eval.sets");
    let mut chosen = Vec::new();
    let mut groups = Vec::new();
    for c in 0..bench.n_conditions() {
        let mut idx: Vec<usize> = (0..bench.scenes.len()).filter(|&i| bench.conditions[i] == c).collect();
        idx.shuffle(&mut pick_rng);
        for &i in idx.iter().take(set_size) {
            chosen.push(bench.scenes[i].clone());
            groups.push(format!("c{c}"));
        }
    }
    let options = EvalOptions { k: 1, set_size, seed, groups: Some(groups) };
    let (report, _) = evaluate_model(model, &chosen, &options)?;
    let mut emd = Vec::new();
    let mut nn = Vec::new();
    for c in 0..bench.n_conditions() {
        let g = report
            .groups
            .get(&format!("c{c}"))
            .ok_or_else(|| Error::Empty(format!("condition {c} has no scenes")))?;
        emd.push(g.emd);
        nn.push(g.one_nn_accuracy);
    }
    Ok((coverage, emd, nn))
}

fn checkpoint_iteration(path: &Path) -> Option<u64> {
    let ck = Checkpoint::<f32>::load(path).ok()?;
    ck.meta.get("iteration").and_then(|v| v.as_u64())
}

/// Train (or resume) one run and score its final model. Finished runs with
/// a cached result are not retrained.
pub fn run_one(
    config: &ExperimentConfig,
    bench: &ToyBench,
    root: &Path,
    regime: Regime,
    seed: u64,
    observer: &mut dyn FnMut(Regime, u64, &LogRecord),
) -> Result<RunResult> {
    let dir = config.run_dir(root, regime, seed);
    let result_path = dir.join("result.json");
    if let Ok(text) = std::fs::read_to_string(&result_path) {
        if let Ok(r) = serde_json::from_str::<RunResult>(&text) {
            if r.iteration >= config.iterations {
                return Ok(r);
            }
        }
    }
    let cfg = config.run_config(regime, seed);
    let final_path = dir.join("model.tsck");
    let last_path = dir.join("last.tsck");
    let model = match checkpoint_iteration(&final_path) {
        Some(it) if it >= config.iterations => Model::<f32>::from_checkpoint(&Checkpoint::load(&final_path)?)?,
        _ => {
            let resume = [&final_path, &last_path]
                .into_iter()
                .filter_map(|p| checkpoint_iteration(p).map(|it| (it, p)))
                .filter(|&(it, _)| it <= config.iterations)
                .max_by_key(|&(it, _)| it)
                .map(|(_, p)| p.as_path());
            let out = train::<f32>(&bench.scenes, config.dims.clone(), &cfg, Some(&dir), resume, |r| {
                observer(regime, seed, r)
            })?;
            out.model
        }
    };
    let (coverage, emd, one_nn_accuracy) =
        score_model(&model, bench, config.samples_per_condition, config.set_size, seed)?;
    let result = RunResult { regime, seed, iteration: config.iterations, coverage, emd, one_nn_accuracy };
    let json = serde_json::to_string_pretty(&result).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_atomic(&result_path, json.as_bytes())?;
    Ok(result)
}

/// Run every (regime, seed) pair and write `summary.json` under `root`.
pub fn run_experiment(
    config: &ExperimentConfig,
    root: &Path,
    observer: &mut dyn FnMut(Regime, u64, &LogRecord),
) -> Result<Vec<RunResult>> {
    let bench = ToyBench::new(&config.toy, &config.dims)?;
    let json = serde_json::to_string_pretty(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_atomic(&root.join("experiment.json"), json.as_bytes())?;
    let mut results = Vec::new();
    for &seed in &config.seeds {
        for &regime in &config.regimes {
            results.push(run_one(config, &bench, root, regime, seed, observer)?);
        }
    }
    let json = serde_json::to_string_pretty(&results).map_err(|e| Error::Checkpoint(e.to_string()))?;
    write_atomic(&root.join("summary.json"), json.as_bytes())?;
    Ok(results)
}

/// Read cached results; missing or unfinished runs are skipped.
pub fn load_results(config: &ExperimentConfig, root: &Path) -> Vec<RunResult> {
    let mut out = Vec::new();
    for &seed in &config.seeds {
        for &regime in &config.regimes {
            let path = config.run_dir(root, regime, seed).join("result.json");
            let parsed = std::fs::read_to_string(path).ok().and_then(|t| serde_json::from_str::<RunResult>(&t).ok());
            if let Some(r) = parsed.filter(|r| r.iteration >= config.iterations) {
                out.push(r);
            }
        }
    }
    out
}

/// Outcome of a claim over experiment results.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

fn by_seed(results: &[RunResult], regime: Regime) -> BTreeMap<u64, &RunResult> {
    results.iter().filter(|r| r.regime == regime).map(|r| (r.seed, r)).collect()
}

fn complete<'a>(
    results: &'a [RunResult],
    seeds: &[u64],
    regimes: &[Regime],
) -> std::result::Result<BTreeMap<Regime, BTreeMap<u64, &'a RunResult>>, String> {
    let mut out = BTreeMap::new();
    for &r in regimes {
        let m = by_seed(results, r);
        let missing: Vec<u64> = seeds.iter().copied().filter(|s| !m.contains_key(s)).collect();
        if !missing.is_empty() {
            return Err(format!("{} has no finished run for seeds {missing:?}", r.name()));
        }
        out.insert(r, m);
    }
    Ok(out)
}

/// Info-GAN mean coverage at least `min_mean` (of 1), strictly above vanilla
/// and L2 in every seed, and unrolled mean coverage at least vanilla's.
pub fn check_mode_preservation(results: &[RunResult], seeds: &[u64], min_mean: f64) -> Verdict {
    let regimes = [Regime::InfoGan, Regime::Vanilla, Regime::L2, Regime::Unrolled];
    let runs = match complete(results, seeds, &regimes) {
        Ok(r) => r,
        Err(detail) => return Verdict { pass: false, detail },
    };
    let mean = |r: Regime| runs[&r].values().map(|x| x.coverage).sum::<f64>() / seeds.len() as f64;
    let info_mean = mean(Regime::InfoGan);
    let mut ok = info_mean >= min_mean - 1e-12;
    let mut notes = vec![format!("infogan mean coverage {info_mean:.3}")];
    for &s in seeds {
        let i = runs[&Regime::InfoGan][&s].coverage;
        let v = runs[&Regime::Vanilla][&s].coverage;
        let l = runs[&Regime::L2][&s].coverage;
        if !(i > v && i > l) {
            ok = false;
        }
        notes.push(format!("seed {s}: infogan {i:.3} vanilla {v:.3} l2 {l:.3}"));
    }
    let (u, v) = (mean(Regime::Unrolled), mean(Regime::Vanilla));
    if u < v {
        ok = false;
    }
    notes.push(format!("unrolled mean {u:.3} vs vanilla mean {v:.3}"));
    Verdict { pass: ok, detail: notes.join("; ") }
}

/// For every condition, Info-GAN beats vanilla on EMD and on 1-NN distance
/// to one half in a majority of seeds.
pub fn check_distribution_quality(results: &[RunResult], seeds: &[u64]) -> Verdict {
    let runs = match complete(results, seeds, &[Regime::InfoGan, Regime::Vanilla]) {
        Ok(r) => r,
        Err(detail) => return Verdict { pass: false, detail },
    };
    let n_cond = runs[&Regime::InfoGan].values().next().map_or(0, |r| r.emd.len());
    let mut ok = n_cond > 0;
    let mut notes = Vec::new();
    for c in 0..n_cond {
        let (mut emd_wins, mut nn_wins) = (0, 0);
        for &s in seeds {
            let (i, v) = (runs[&Regime::InfoGan][&s], runs[&Regime::Vanilla][&s]);
            if i.emd[c] < v.emd[c] {
                emd_wins += 1;
            }
            if (i.one_nn_accuracy[c] - 0.5).abs() < (v.one_nn_accuracy[c] - 0.5).abs() {
                nn_wins += 1;
            }
        }
        let need = seeds.len() / 2 + 1;
        if emd_wins < need || nn_wins < need {
            ok = false;
        }
        notes.push(format!("c{c}: emd {emd_wins}/{} 1nn {nn_wins}/{}", seeds.len(), seeds.len()));
    }
    Verdict { pass: ok, detail: notes.join("; ") }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(regime: Regime, seed: u64, coverage: f64, emd: f64, nn: f64) -> RunResult {
        RunResult { regime, seed, iteration: 1, coverage, emd: vec![emd; 2], one_nn_accuracy: vec![nn; 2] }
    }

    #[test]
    fn mode_preservation_verdicts() {
        let mut rs = Vec::new();
        for s in 0..3 {
            rs.push(run(Regime::InfoGan, s, 1.0, 0.1, 0.5));
            rs.push(run(Regime::Vanilla, s, 0.5, 0.3, 0.9));
            rs.push(run(Regime::L2, s, 0.33, 0.3, 1.0));
            rs.push(run(Regime::Unrolled, s, 0.6, 0.2, 0.8));
        }
        assert!(check_mode_preservation(&rs, &[0, 1, 2], 17.0 / 18.0).pass);
        assert!(check_distribution_quality(&rs, &[0, 1, 2]).pass);
        rs[1].coverage = 1.0;
        assert!(!check_mode_preservation(&rs, &[0, 1, 2], 17.0 / 18.0).pass);
        assert!(!check_mode_preservation(&rs[..4], &[0, 1, 2], 17.0 / 18.0).pass);
    }

    #[test]
    fn distribution_quality_needs_a_majority_per_condition() {
        let mut rs = Vec::new();
        for s in 0..3 {
            rs.push(run(Regime::InfoGan, s, 1.0, if s == 0 { 0.1 } else { 0.5 }, 0.5));
            rs.push(run(Regime::Vanilla, s, 0.5, 0.3, 0.9));
        }
        let v = check_distribution_quality(&rs, &[0, 1, 2]);
        assert!(!v.pass, "{}", v.detail);
    }
}
