use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Annotation rate of the ETH and UCY recordings.
pub const DEFAULT_FRAME_RATE: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub frame: i64,
    pub agent: i64,
    pub x: f64,
    pub y: f64,
}

/// Annotated positions, sorted by `(agent, frame)`.
///
/// Frame ids need not be consecutive integers: the table infers the frame step
/// (ETH/UCY annotations advance by 10 video frames per sample) and treats any
/// larger jump inside one agent's rows as a gap that splits the track.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    rows: Vec<TrajectoryRow>,
    frame_rate: f64,
    frame_step: i64,
    source_name: String,
}

impl TrajectoryTable {
    pub fn new(mut rows: Vec<TrajectoryRow>, frame_rate: f64, source_name: impl Into<String>) -> Result<Self> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::Validation(format!("frame rate must be positive, got {frame_rate}")));
        }
        rows.sort_by_key(|r| (r.agent, r.frame));
        for w in rows.windows(2) {
            if w[0].agent == w[1].agent && w[0].frame == w[1].frame {
                return Err(Error::Validation(format!(
                    "duplicate row for frame {} agent {}",
                    w[0].frame, w[0].agent
                )));
            }
        }
        if let Some(r) = rows.iter().find(|r| !(r.x.is_finite() && r.y.is_finite())) {
            return Err(Error::Validation(format!("non-finite position for frame {} agent {}", r.frame, r.agent)));
        }
        let frame_step = infer_frame_step(&rows);
        Ok(Self { rows, frame_rate, frame_step, source_name: source_name.into() })
    }

    pub fn with_frame_step(mut self, step: i64) -> Result<Self> {
        if step < 1 {
            return Err(Error::Validation(format!("frame step must be >= 1, got {step}")));
        }
        self.frame_step = step;
        Ok(self)
    }

    pub fn rows(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Seconds between consecutive annotated samples.
    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    pub fn frame_step(&self) -> i64 {
        self.frame_step
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn agent_ids(&self) -> Vec<i64> {
        let mut ids: Vec<i64> = self.rows.iter().map(|r| r.agent).collect();
        ids.dedup();
        ids
    }

    pub fn frame_span(&self) -> Option<(i64, i64)> {
        let min = self.rows.iter().map(|r| r.frame).min()?;
        let max = self.rows.iter().map(|r| r.frame).max()?;
        Some((min, max))
    }

    /// Maximal runs of consecutive frames per agent.
    pub fn tracklets(&self) -> Vec<Tracklet> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.rows.len() {
            let split = i == self.rows.len()
                || self.rows[i].agent != self.rows[i - 1].agent
                || self.rows[i].frame - self.rows[i - 1].frame != self.frame_step;
            if split {
                let run = &self.rows[start..i];
                out.push(Tracklet {
                    agent: run[0].agent,
                    first_frame: run[0].frame,
                    positions: run.iter().map(|r| [r.x, r.y]).collect(),
                });
                start = i;
            }
        }
        out
    }

    /// Canonical text form: one `frame agent x y` record per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * 32);
        let mut rows = self.rows.clone();
        rows.sort_by_key(|r| (r.frame, r.agent));
        for r in &rows {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", r.frame, r.agent, r.x, r.y);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }
}

/// One agent's uninterrupted run of annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    pub agent: i64,
    pub first_frame: i64,
    pub positions: Vec<[f64; 2]>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn infer_frame_step(rows: &[TrajectoryRow]) -> i64 {
    let step = rows
        .windows(2)
        .filter(|w| w[0].agent == w[1].agent)
        .map(|w| w[1].frame - w[0].frame)
        .fold(0, gcd);
    if step > 0 {
        return step;
    }
    // Single-sample agents only: fall back to the spacing of distinct frame ids.
    let mut frames: Vec<i64> = rows.iter().map(|r| r.frame).collect();
    frames.sort_unstable();
    frames.dedup();
    frames.windows(2).map(|w| w[1] - w[0]).fold(0, gcd).max(1)
}

/// Parse the canonical whitespace-separated format. Lines that are empty or
/// start with `#` are skipped.
pub fn parse_trajectory_text(text: &str, frame_rate: f64, source_name: &str) -> Result<TrajectoryTable> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { path: source_name.to_string(), line: lineno + 1, msg };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("not a number: `{s}`")));
        let frame = as_integer(num(fields[0])?).ok_or_else(|| err(format!("frame id `{}` is not an integer", fields[0])))?;
        let agent = as_integer(num(fields[1])?).ok_or_else(|| err(format!("agent id `{}` is not an integer", fields[1])))?;
        let (x, y) = (num(fields[2])?, num(fields[3])?);
        if !seen.insert((frame, agent)) {
            return Err(Error::Validation(format!(
                "{source_name}:{}: duplicate row for frame {frame} agent {agent}",
                lineno + 1
            )));
        }
        rows.push(TrajectoryRow { frame, agent, x, y });
    }
    TrajectoryTable::new(rows, frame_rate, source_name)
}

fn as_integer(v: f64) -> Option<i64> {
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

pub fn load_trajectory_file(path: &Path, frame_rate: f64) -> Result<TrajectoryTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectories");
    parse_trajectory_text(&text, frame_rate, name).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse { path: path.display().to_string(), line, msg },
        other => other,
    })
}

/// Convert an ETH `obsmat.txt` (`frame ped x z y vx vz vy`) to canonical rows.
pub fn parse_eth_obsmat(text: &str, source_name: &str) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { path: source_name.to_string(), line: lineno + 1, msg };
        if fields.len() < 5 {
            return Err(err(format!("expected at least 5 fields, found {}", fields.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("not a number: `{s}`")));
        let frame = as_integer(num(fields[0])?).ok_or_else(|| err("frame id is not an integer".into()))?;
        let agent = as_integer(num(fields[1])?).ok_or_else(|| err("agent id is not an integer".into()))?;
        rows.push(TrajectoryRow { frame, agent, x: num(fields[2])?, y: num(fields[4])? });
    }
    Ok(rows)
}

/// Finite-difference velocities: `v_t = (p_t - p_{t-1}) / dt`, with `v_0 = v_1`.
pub fn compute_velocities(positions: &[[f64; 2]], dt: f64) -> Result<Vec<[f64; 2]>> {
    if positions.len() < 2 {
        return Err(Error::Validation(format!(
            "velocity needs at least 2 positions, got {}",
            positions.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    let mut v = Vec::with_capacity(positions.len());
    v.push([0.0, 0.0]);
    for w in positions.windows(2) {
        v.push([(w[1][0] - w[0][0]) / dt, (w[1][1] - w[0][1]) / dt]);
    }
    v[0] = v[1];
    Ok(v)
}

/// Per-agent `(first frame, last frame, row count)` summary.
pub fn agent_spans(table: &TrajectoryTable) -> BTreeMap<i64, (i64, i64, usize)> {
    let mut out = BTreeMap::new();
    for r in table.rows() {
        let e = out.entry(r.agent).or_insert((r.frame, r.frame, 0));
        e.0 = e.0.min(r.frame);
        e.1 = e.1.max(r.frame);
        e.2 += 1;
    }
    out
}
