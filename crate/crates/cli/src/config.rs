//! Flat key-value run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use trajsampler::datasets::{SplitSpec, ToyConfig, Window, DEFAULT_FRAME_RATE};
use trajsampler::kv::{self, KvConfig};
use trajsampler::model::ModelDims;
use trajsampler::training::{Regime, TrainConfig};
use trajsampler::Error;

/// Name of the resolved config written next to every run's outputs.
pub const RESOLVED_NAME: &str = "config.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Root seed; the toy generator and the trainer derive their streams from it.
    pub seed: u64,
    /// `toy` for the generated benchmark, otherwise a directory of trajectory files.
    pub data: String,
    pub frame_rate: f64,
    pub stride: usize,
    pub precision: Precision,
    pub toy: ToyConfig,
    pub model: ModelDims,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    /// Trajectory file holding the scenes to predict or evaluate.
    pub scenes: Option<PathBuf>,
    pub n_samples: usize,
    pub eval_k: usize,
    pub eval_set_size: usize,
    /// Samples per toy condition for mode coverage.
    pub coverage_samples: usize,
    pub baseline: Option<String>,
    pub plot_kind: String,
    pub plot_inputs: Vec<String>,
    pub plot_max_scenes: usize,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: "toy".into(),
            frame_rate: DEFAULT_FRAME_RATE,
            stride: 1,
            precision: Precision::F32,
            toy: ToyConfig::default(),
            model: ModelDims::default(),
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            checkpoint: None,
            resume: None,
            scenes: None,
            n_samples: 20,
            eval_k: 20,
            eval_set_size: 20,
            coverage_samples: 128,
            baseline: None,
            plot_kind: "metric_curves".into(),
            plot_inputs: Vec::new(),
            plot_max_scenes: 8,
            regimes: vec![Regime::InfoGan, Regime::Vanilla, Regime::L2, Regime::Variety, Regime::Unrolled],
            seeds: vec![0, 1, 2],
            out: PathBuf::from("out"),
        }
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn nested(prefix: &str, entries: Vec<(String, String)>) -> impl Iterator<Item = (String, String)> + '_ {
    entries.into_iter().filter(|(k, _)| k != "seed").map(move |(k, v)| (format!("{prefix}.{k}"), v))
}

impl KvConfig for RunConfig {
    fn set(&mut self, key: &str, v: &str) -> trajsampler::Result<bool> {
        if let Some((section, rest)) = key.split_once('.') {
            let nested_seed = rest == "seed";
            let known = match section {
                "toy" if !nested_seed => self.toy.set(rest, v)?,
                "model" => self.model.set(rest, v)?,
                "split" => self.split.set(rest, v)?,
                "train" if !nested_seed => self.train.set(rest, v)?,
                "data" if rest == "frame_rate" => {
                    self.frame_rate = kv::value(key, v)?;
                    true
                }
                "window" if rest == "stride" => {
                    self.stride = kv::value(key, v)?;
                    true
                }
                "predict" if rest == "n_samples" => {
                    self.n_samples = kv::value(key, v)?;
                    true
                }
                "eval" => match rest {
                    "k" => {
                        self.eval_k = kv::value(key, v)?;
                        true
                    }
                    "set_size" => {
                        self.eval_set_size = kv::value(key, v)?;
                        true
                    }
                    "coverage_samples" => {
                        self.coverage_samples = kv::value(key, v)?;
                        true
                    }
                    "baseline" => {
                        self.baseline = (!v.is_empty() && v != "none").then(|| v.to_string());
                        true
                    }
                    _ => false,
                },
                "plot" => match rest {
                    "kind" => {
                        self.plot_kind = v.to_string();
                        true
                    }
                    "inputs" => {
                        self.plot_inputs = kv::list(key, v)?;
                        true
                    }
                    "max_scenes" => {
                        self.plot_max_scenes = kv::value(key, v)?;
                        true
                    }
                    _ => false,
                },
                "experiment" => match rest {
                    "regimes" => {
                        self.regimes = kv::list(key, v)?;
                        true
                    }
                    "seeds" => {
                        self.seeds = kv::list(key, v)?;
                        true
                    }
                    _ => false,
                },
                _ => false,
            };
            return Ok(known);
        }
        match key {
            "seed" => self.seed = kv::value(key, v)?,
            "data" => self.data = v.to_string(),
            "precision" => {
                self.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::Config(format!("precision must be f32 or f64, got `{v}`"))),
                }
            }
            "checkpoint" => self.checkpoint = opt_path(v),
            "resume" => self.resume = opt_path(v),
            "scenes" => self.scenes = opt_path(v),
            "out" => self.out = PathBuf::from(v),
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        let e = |k: &str, v: String| (k.to_string(), v);
        let mut out = vec![
            e("seed", self.seed.to_string()),
            e("data", self.data.clone()),
            e("data.frame_rate", self.frame_rate.to_string()),
            e("window.stride", self.stride.to_string()),
            e("precision", if self.precision == Precision::F32 { "f32" } else { "f64" }.into()),
        ];
        out.extend(nested("toy", self.toy.entries()));
        out.extend(nested("model", self.model.entries()));
        out.extend(nested("split", self.split.entries()));
        out.extend(nested("train", self.train.entries()));
        out.extend([
            e("checkpoint", show_path(&self.checkpoint)),
            e("resume", show_path(&self.resume)),
            e("scenes", show_path(&self.scenes)),
            e("predict.n_samples", self.n_samples.to_string()),
            e("eval.k", self.eval_k.to_string()),
            e("eval.set_size", self.eval_set_size.to_string()),
            e("eval.coverage_samples", self.coverage_samples.to_string()),
            e("eval.baseline", self.baseline.clone().unwrap_or_else(|| "none".into())),
            e("plot.kind", self.plot_kind.clone()),
            e("plot.inputs", self.plot_inputs.join(",")),
            e("plot.max_scenes", self.plot_max_scenes.to_string()),
            e("experiment.regimes", self.regimes.iter().map(|r| r.name()).collect::<Vec<_>>().join(",")),
            e("experiment.seeds", self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")),
            e("out", self.out.display().to_string()),
        ]);
        out
    }
}

impl RunConfig {
    /// Defaults, then the config file, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let pairs = kv::read(path).with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply(&pairs)?;
        }
        cfg.apply(overrides)?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Propagate shared values and validate every section.
    fn resolve(&mut self) -> Result<()> {
        self.toy.seed = self.seed;
        self.train.seed = self.seed;
        self.toy.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.window().validate()?;
        if !(self.frame_rate > 0.0) {
            return Err(Error::Config("data.frame_rate must be > 0".into()).into());
        }
        Ok(())
    }

    pub fn window(&self) -> Window {
        Window { obs_len: self.model.obs_len, pred_len: self.model.pred_len, stride: self.stride }
    }

    pub fn is_toy(&self) -> bool {
        self.data == "toy"
    }

    /// Write the resolved config into the output directory.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Error::io(&self.out, e))
            .with_context(|| format!("creating output directory {}", self.out.display()))?;
        let path = self.out.join(RESOLVED_NAME);
        trajsampler::io::write_atomic(&path, self.to_kv_text().as_bytes())?;
        Ok(path)
    }
}

/// Parse `key=value` from the command line.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_round_trips() {
        let over = [("train.regime", "vanilla"), ("toy.samples_per_branch", "4"), ("seed", "9"), ("model.decoder_head_dims", "8,2")]
            .map(|(k, v)| (k.to_string(), v.to_string()));
        let cfg = RunConfig::load(None, &over).unwrap();
        assert_eq!(cfg.toy.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        let mut back = RunConfig::default();
        back.apply(&kv::parse(&cfg.to_kv_text(), "resolved").unwrap()).unwrap();
        back.resolve().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_and_shadowed_keys_are_rejected() {
        for key in ["bogus", "train.seed", "toy.seed", "eval.nope", "model.width"] {
            let err = RunConfig::load(None, &[(key.to_string(), "1".to_string())]).unwrap_err();
            let e = err.downcast_ref::<Error>().unwrap();
            assert!(matches!(e, Error::UnknownKey(k) if k == key), "{key}");
        }
    }
}
