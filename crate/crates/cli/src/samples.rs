//! Prediction output: a trajectory table that the dataset loader reads back,
//! plus a sidecar with the scene and latent provenance of every record.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use trajsampler::datasets::{load_trajectory_file, Scene, TrajectoryRow, TrajectoryTable};
use trajsampler::io::write_atomic;
use trajsampler::model::PredictionSample;

pub const SAMPLES_NAME: &str = "samples.txt";
const META_HEADER: &str = "record\tsource\tstart_frame\ttarget_id\tsample\tversion\tz\tc";

/// One generated future with the observation it continues.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub record: i64,
    pub source: String,
    pub start_frame: i64,
    pub target_id: i64,
    pub sample: usize,
    pub version: String,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub observed: Vec<[f64; 2]>,
    pub predicted: Vec<[f64; 2]>,
}

impl SampleRecord {
    pub fn new(record: i64, scene: &Scene, sample: usize, s: PredictionSample) -> Self {
        Self {
            record,
            source: scene.source.clone(),
            start_frame: scene.start_frame,
            target_id: scene.target_id(),
            sample,
            version: s.version,
            z: s.z,
            c: s.c,
            observed: scene.target_observed().iter().map(|a| a.pos).collect(),
            predicted: s.positions,
        }
    }

    pub fn scene_key(&self) -> (String, i64, i64) {
        (self.source.clone(), self.start_frame, self.target_id)
    }
}

pub fn meta_path(samples: &Path) -> PathBuf {
    samples.with_extension("meta.tsv")
}

fn join(v: &[f64]) -> String {
    if v.is_empty() {
        return "-".into();
    }
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split_floats(s: &str) -> Result<Vec<f64>> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.parse::<f64>().with_context(|| format!("bad number `{x}`"))).collect()
}

/// Write `path` (one row per frame, record id as agent id) and its sidecar.
pub fn write_samples(path: &Path, records: &[SampleRecord], frame_step: i64, frame_rate: f64) -> Result<()> {
    let mut rows = Vec::new();
    let mut meta = String::from(META_HEADER);
    meta.push('\n');
    for r in records {
        for (t, p) in r.observed.iter().chain(&r.predicted).enumerate() {
            rows.push(TrajectoryRow { frame: r.start_frame + t as i64 * frame_step, agent: r.record, x: p[0], y: p[1] });
        }
        let _ = writeln!(
            meta,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.record,
            r.source,
            r.start_frame,
            r.target_id,
            r.sample,
            r.version,
            join(&r.z),
            join(&r.c)
        );
    }
    let table = TrajectoryTable::new(rows, frame_rate, "samples")?.with_frame_step(frame_step)?;
    table.write(path)?;
    write_atomic(&meta_path(path), meta.as_bytes())?;
    Ok(())
}

/// Read records back; `obs_len` splits each track into observation and future.
pub fn read_samples(path: &Path, obs_len: usize, frame_rate: f64) -> Result<Vec<SampleRecord>> {
    let table = load_trajectory_file(path, frame_rate)?;
    let mpath = meta_path(path);
    let text = std::fs::read_to_string(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
    let tracks: std::collections::BTreeMap<i64, Vec<[f64; 2]>> =
        table.tracklets().into_iter().map(|t| (t.agent, t.positions)).collect();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            bail!("{}:{}: expected 8 columns", mpath.display(), i + 1);
        }
        let record: i64 = f[0].parse().context("bad record id")?;
        let Some(track) = tracks.get(&record) else { bail!("record {record} has no trajectory rows") };
        if track.len() <= obs_len {
            bail!("record {record} has {} positions, expected more than {obs_len}", track.len());
        }
        out.push(SampleRecord {
            record,
            source: f[1].to_string(),
            start_frame: f[2].parse().context("bad start frame")?,
            target_id: f[3].parse().context("bad target id")?,
            sample: f[4].parse().context("bad sample index")?,
            version: f[5].to_string(),
            z: split_floats(f[6])?,
            c: split_floats(f[7])?,
            observed: track[..obs_len].to_vec(),
            predicted: track[obs_len..].to_vec(),
        });
    }
    Ok(out)
}
