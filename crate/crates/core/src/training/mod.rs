//! Adversarial training: the Info-GAN objective and the vanilla, L2,
//! variety and unrolled regimes.

mod log;
mod losses;
mod optim;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use log::{LogRecord, TrainLog, LOG_HEADER};
pub use losses::{
    bce_ones, bce_zeros, info_loss, l2_loss, mean_over_steps, mean_probability, mse, row_sq_error, variety_loss,
};
pub use optim::{clip_global_norm, Optimizer, OptimizerKind};
pub use trainer::{checkpoint_paths, train, StepGradients, StepInputs, StepStats, TrainOutcome, Trainer};

use crate::error::{Error, Result};
use crate::kv::{self, KvConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Adversarial loss plus the latent-code information term.
    InfoGan,
    /// Adversarial loss only.
    Vanilla,
    /// Adversarial loss plus an L2 term on one sample.
    L2,
    /// Adversarial loss plus best-of-V L2.
    Variety,
    /// Generator trained against an unrolled copy of D.
    Unrolled,
    /// Unrolled D combined with the information term.
    InfoUnrolled,
}

impl Regime {
    pub const ALL: [Regime; 6] =
        [Regime::InfoGan, Regime::Vanilla, Regime::L2, Regime::Variety, Regime::Unrolled, Regime::InfoUnrolled];

    pub fn name(self) -> &'static str {
        match self {
            Regime::InfoGan => "infogan",
            Regime::Vanilla => "vanilla",
            Regime::L2 => "l2",
            Regime::Variety => "variety",
            Regime::Unrolled => "unrolled",
            Regime::InfoUnrolled => "info_unrolled",
        }
    }

    pub fn uses_info(self) -> bool {
        matches!(self, Regime::InfoGan | Regime::InfoUnrolled)
    }

    pub fn is_unrolled(self) -> bool {
        matches!(self, Regime::Unrolled | Regime::InfoUnrolled)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime `{s}` (expected one of infogan, vanilla, l2, variety, unrolled, info_unrolled)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnrollMode {
    /// The generator sees the unrolled D as a constant.
    FirstOrder,
    /// Differentiate through the inner D updates.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    /// First-moment coefficient (Adam) or momentum (SGD).
    pub momentum: f64,
    pub optimizer: OptimizerKind,
    pub iterations: u64,
    pub info_lambda: f64,
    pub l2_weight: f64,
    pub variety_v: usize,
    pub variety_weight: f64,
    /// `None` picks 10 for `unrolled` and 5 for `info_unrolled`.
    pub unroll_steps: Option<usize>,
    pub unroll_mode: UnrollMode,
    /// Global-norm gradient clipping threshold; 0 disables it.
    pub clip_norm: f64,
    pub seed: u64,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            regime: Regime::InfoGan,
            batch_size: 64,
            lr_generator: 1e-3,
            lr_discriminator: 1e-4,
            momentum: 0.9,
            optimizer: OptimizerKind::Adam,
            iterations: 20_000,
            info_lambda: 1.0,
            l2_weight: 1.0,
            variety_v: 20,
            variety_weight: 1.0,
            unroll_steps: None,
            unroll_mode: UnrollMode::FirstOrder,
            clip_norm: 10.0,
            seed: 0,
            checkpoint_every: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr_generator > 0.0 && self.lr_discriminator > 0.0) {
            return bad("learning rates must be > 0");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.info_lambda >= 0.0 && self.l2_weight >= 0.0 && self.variety_weight >= 0.0) {
            return bad("loss weights must be >= 0");
        }
        if self.regime == Regime::Variety && self.variety_v < 1 {
            return bad("variety_v must be >= 1");
        }
        if self.log_every < 1 {
            return bad("log_every must be >= 1");
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be >= 0");
        }
        Ok(())
    }

    /// Inner discriminator steps used by this regime.
    pub fn effective_unroll_steps(&self) -> usize {
        match self.regime {
            Regime::Unrolled => self.unroll_steps.unwrap_or(10),
            Regime::InfoUnrolled => self.unroll_steps.unwrap_or(5),
            _ => 0,
        }
    }

    /// Generator samples drawn per scene per iteration.
    pub fn copies(&self) -> usize {
        if self.regime == Regime::Variety {
            self.variety_v.max(1)
        } else {
            1
        }
    }

    /// SHA-256 over everything except the iteration budget and output cadence,
    /// so that a resumed run with a larger budget keeps its hash.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if matches!(k.as_str(), "iterations" | "checkpoint_every" | "log_every") {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl KvConfig for TrainConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "regime" => self.regime = v.parse()?,
            "batch_size" => self.batch_size = kv::value(key, v)?,
            "lr_generator" => self.lr_generator = kv::value(key, v)?,
            "lr_discriminator" => self.lr_discriminator = kv::value(key, v)?,
            "momentum" => self.momentum = kv::value(key, v)?,
            "optimizer" => {
                self.optimizer = match v {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    _ => return Err(Error::Config(format!("optimizer must be adam or sgd, got `{v}`"))),
                }
            }
            "iterations" => self.iterations = kv::value(key, v)?,
            "info_lambda" => self.info_lambda = kv::value(key, v)?,
            "l2_weight" => self.l2_weight = kv::value(key, v)?,
            "variety_v" => self.variety_v = kv::value(key, v)?,
            "variety_weight" => self.variety_weight = kv::value(key, v)?,
            "unroll_steps" => self.unroll_steps = if v == "auto" { None } else { Some(kv::value(key, v)?) },
            "unroll_mode" => {
                self.unroll_mode = match v {
                    "first_order" => UnrollMode::FirstOrder,
                    "full" => UnrollMode::Full,
                    _ => return Err(Error::Config(format!("unroll_mode must be first_order or full, got `{v}`"))),
                }
            }
            "clip_norm" => self.clip_norm = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            "checkpoint_every" => self.checkpoint_every = kv::value(key, v)?,
            "log_every" => self.log_every = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        let e = |k: &str, v: String| (k.to_string(), v);
        vec![
            e("regime", self.regime.to_string()),
            e("batch_size", self.batch_size.to_string()),
            e("lr_generator", self.lr_generator.to_string()),
            e("lr_discriminator", self.lr_discriminator.to_string()),
            e("momentum", self.momentum.to_string()),
            e("optimizer", match self.optimizer {
                OptimizerKind::Adam => "adam".into(),
                OptimizerKind::Sgd => "sgd".into(),
            }),
            e("iterations", self.iterations.to_string()),
            e("info_lambda", self.info_lambda.to_string()),
            e("l2_weight", self.l2_weight.to_string()),
            e("variety_v", self.variety_v.to_string()),
            e("variety_weight", self.variety_weight.to_string()),
            e("unroll_steps", self.unroll_steps.map_or("auto".into(), |s| s.to_string())),
            e("unroll_mode", match self.unroll_mode {
                UnrollMode::FirstOrder => "first_order".into(),
                UnrollMode::Full => "full".into(),
            }),
            e("clip_norm", self.clip_norm.to_string()),
            e("seed", self.seed.to_string()),
            e("checkpoint_every", self.checkpoint_every.to_string()),
            e("log_every", self.log_every.to_string()),
        ]
    }
}
