//! Synthetic multi-modal benchmark: agents walk in from points on a circle,
//! and near the centre each one takes one of a few branch headings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::table::{TrajectoryRow, TrajectoryTable, DEFAULT_FRAME_RATE};
use crate::error::{Error, Result};
use crate::kv::{self, KvConfig};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub n_conditions: usize,
    pub n_branches: usize,
    pub samples_per_branch: usize,
    /// Radius of the circle carrying the start points (m).
    pub circle_radius: f64,
    /// Offset of the outer branches from the incoming heading (degrees).
    pub branch_half_angle: f64,
    /// Distance from the centre at which agents pick their branch (m).
    pub split_radius: f64,
    pub noise_sigma: f64,
    /// Metres travelled per annotated frame.
    pub speed: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            n_conditions: 6,
            n_branches: 3,
            samples_per_branch: 128,
            circle_radius: 8.0,
            branch_half_angle: 30.0,
            split_radius: 2.0,
            noise_sigma: 0.05,
            speed: 0.5,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_conditions < 1 {
            return bad("n_conditions must be >= 1");
        }
        if self.n_branches < 1 {
            return bad("n_branches must be >= 1");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.split_radius >= 0.0 && self.circle_radius > self.split_radius) {
            return bad("need circle_radius > split_radius >= 0");
        }
        if !(self.speed > 0.0) {
            return bad("speed must be > 0");
        }
        if !self.branch_half_angle.is_finite() {
            return bad("branch_half_angle must be finite");
        }
        Ok(())
    }

    pub fn n_trajectories(&self) -> usize {
        self.n_conditions * self.n_branches * self.samples_per_branch
    }

    pub fn n_modes(&self) -> usize {
        self.n_conditions * self.n_branches
    }

    /// Heading offsets of the branches, evenly spread over `±branch_half_angle`.
    pub fn branch_offsets(&self) -> Vec<f64> {
        let h = self.branch_half_angle.to_radians();
        if self.n_branches == 1 {
            return vec![0.0];
        }
        (0..self.n_branches).map(|b| -h + 2.0 * h * b as f64 / (self.n_branches - 1) as f64).collect()
    }

    /// Noise-free positions of one (condition, branch) path: `obs_len`
    /// frames ending at the split point, then `pred_len` frames after it.
    pub fn clean_path(&self, condition: usize, branch: usize, obs_len: usize, pred_len: usize) -> Vec<[f64; 2]> {
        let angle = condition as f64 * std::f64::consts::TAU / self.n_conditions as f64;
        let radial = [angle.cos(), angle.sin()];
        let inward = [-radial[0], -radial[1]];
        // First frame at or inside the split radius, counting from the circle.
        let travel = self.circle_radius - self.split_radius;
        let n_split = (travel / self.speed - 1e-9).ceil().max(0.0);
        let r_split = self.circle_radius - n_split * self.speed;
        let split = [radial[0] * r_split, radial[1] * r_split];

        let off = self.branch_offsets()[branch];
        let (s, c) = off.sin_cos();
        let heading = [c * inward[0] - s * inward[1], s * inward[0] + c * inward[1]];

        let mut path = Vec::with_capacity(obs_len + pred_len);
        for k in 0..obs_len {
            let back = (obs_len - 1 - k) as f64 * self.speed;
            path.push([split[0] - back * inward[0], split[1] - back * inward[1]]);
        }
        for m in 1..=pred_len {
            let d = m as f64 * self.speed;
            path.push([split[0] + d * heading[0], split[1] + d * heading[1]]);
        }
        path
    }
}

/// `agent -> (condition, branch)` for the toy set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ModeLabelTable {
    labels: BTreeMap<i64, (usize, usize)>,
}

impl ModeLabelTable {
    pub fn insert(&mut self, agent: i64, condition: usize, branch: usize) {
        self.labels.insert(agent, (condition, branch));
    }

    pub fn get(&self, agent: i64) -> Option<(usize, usize)> {
        self.labels.get(&agent).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, (usize, usize))> + '_ {
        self.labels.iter().map(|(&a, &l)| (a, l))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_conditions(&self) -> usize {
        self.labels.values().map(|l| l.0 + 1).max().unwrap_or(0)
    }

    pub fn n_branches(&self) -> usize {
        self.labels.values().map(|l| l.1 + 1).max().unwrap_or(0)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (a, (c, b)) in &self.labels {
            let _ = writeln!(s, "{a}\t{c}\t{b}");
        }
        s
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| Error::Parse { path: source.into(), line: i + 1, msg: msg.into() };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(err("expected `agent_id condition branch`"));
            }
            let agent = f[0].parse().map_err(|_| err("bad agent id"))?;
            let cond = f[1].parse().map_err(|_| err("bad condition"))?;
            let branch = f[2].parse().map_err(|_| err("bad branch"))?;
            out.insert(agent, cond, branch);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyDataset {
    pub table: TrajectoryTable,
    pub labels: ModeLabelTable,
}

/// Generate the toy set. Each agent gets its own block of frames, separated
/// from the next by one empty frame, so no two agents are ever co-present.
pub fn generate_toy_dataset(config: &ToyConfig, obs_len: usize, pred_len: usize) -> Result<ToyDataset> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, "toy");
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let len = obs_len + pred_len;
    let mut rows = Vec::with_capacity(config.n_trajectories() * len);
    let mut labels = ModeLabelTable::default();
    let mut agent: i64 = 0;
    for c in 0..config.n_conditions {
        for b in 0..config.n_branches {
            let clean = config.clean_path(c, b, obs_len, pred_len);
            for _ in 0..config.samples_per_branch {
                let first = agent * (len as i64 + 1);
                for (k, p) in clean.iter().enumerate() {
                    let (dx, dy) = if config.noise_sigma > 0.0 {
                        (noise.sample(&mut rng), noise.sample(&mut rng))
                    } else {
                        (0.0, 0.0)
                    };
                    rows.push(TrajectoryRow { frame: first + k as i64, agent, x: p[0] + dx, y: p[1] + dy });
                }
                labels.insert(agent, c, b);
                agent += 1;
            }
        }
    }
    let table = TrajectoryTable::new(rows, DEFAULT_FRAME_RATE, "toy")?.with_frame_step(1)?;
    Ok(ToyDataset { table, labels })
}

impl KvConfig for ToyConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "n_conditions" => self.n_conditions = kv::value(key, v)?,
            "n_branches" => self.n_branches = kv::value(key, v)?,
            "samples_per_branch" => self.samples_per_branch = kv::value(key, v)?,
            "circle_radius" => self.circle_radius = kv::value(key, v)?,
            "branch_half_angle" => self.branch_half_angle = kv::value(key, v)?,
            "split_radius" => self.split_radius = kv::value(key, v)?,
            "noise_sigma" => self.noise_sigma = kv::value(key, v)?,
            "speed" => self.speed = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        [
            ("n_conditions", self.n_conditions.to_string()),
            ("n_branches", self.n_branches.to_string()),
            ("samples_per_branch", self.samples_per_branch.to_string()),
            ("circle_radius", self.circle_radius.to_string()),
            ("branch_half_angle", self.branch_half_angle.to_string()),
            ("split_radius", self.split_radius.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("speed", self.speed.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
