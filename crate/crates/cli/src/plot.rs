//! Static SVG figures: toy samples per condition, metric curves over
//! training, and per-scene overlays.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use plotters::prelude::*;
use trajsampler::training::TrainLog;
use trajsampler::Error;

use crate::config::RunConfig;
use crate::data;
use crate::samples::{read_samples, SampleRecord};

pub const KINDS: [&str; 3] = ["toy_samples", "metric_curves", "scene_overlay"];

const OBSERVED: RGBColor = BLUE;
const TRUTH: RGBColor = CYAN;
const SAMPLE: RGBColor = MAGENTA;
const REAL: RGBColor = RGBColor(170, 170, 170);
const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(23, 190, 207),
];

/// Render `cfg.plot_kind` from `cfg.plot_inputs` into `cfg.out`; returns the files written.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match cfg.plot_kind.as_str() {
        "toy_samples" => toy_samples(cfg),
        "metric_curves" => metric_curves(cfg),
        "scene_overlay" => scene_overlay(cfg),
        other => Err(Error::Config(format!("unknown plot kind `{other}` (valid kinds: {})", KINDS.join(", "))).into()),
    }
}

fn plot_err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("drawing failed: {e:?}")
}

struct Bounds {
    x: (f64, f64),
    y: (f64, f64),
}

impl Bounds {
    fn of<'a>(points: impl IntoIterator<Item = &'a [f64; 2]>) -> Self {
        let mut b = Self { x: (f64::INFINITY, f64::NEG_INFINITY), y: (f64::INFINITY, f64::NEG_INFINITY) };
        for p in points {
            b.x = (b.x.0.min(p[0]), b.x.1.max(p[0]));
            b.y = (b.y.0.min(p[1]), b.y.1.max(p[1]));
        }
        if !b.x.0.is_finite() {
            return Self { x: (-1.0, 1.0), y: (-1.0, 1.0) };
        }
        // Square extent with a margin, so paths keep their shape.
        let half = ((b.x.1 - b.x.0).max(b.y.1 - b.y.0) / 2.0).max(0.5) * 1.1;
        let (cx, cy) = ((b.x.0 + b.x.1) / 2.0, (b.y.0 + b.y.1) / 2.0);
        Self { x: (cx - half, cx + half), y: (cy - half, cy + half) }
    }
}

/// A batch of polylines drawn in one colour.
struct Layer<'a> {
    paths: Vec<&'a [[f64; 2]]>,
    color: RGBColor,
    width: u32,
    label: Option<&'a str>,
}

fn draw_paths(path: &Path, title: &str, layers: &[Layer<'_>]) -> Result<()> {
    let bounds = Bounds::of(layers.iter().flat_map(|l| l.paths.iter().flat_map(|p| p.iter())));
    let root = SVGBackend::new(path, (640, 640)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(32)
        .y_label_area_size(40)
        .build_cartesian_2d(bounds.x.0..bounds.x.1, bounds.y.0..bounds.y.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("x (m)").y_desc("y (m)").light_line_style(WHITE).draw().map_err(plot_err)?;
    for layer in layers {
        let style = layer.color.stroke_width(layer.width);
        for (i, p) in layer.paths.iter().enumerate() {
            let series = chart.draw_series(LineSeries::new(p.iter().map(|q| (q[0], q[1])), style)).map_err(plot_err)?;
            if i == 0 {
                if let Some(label) = layer.label {
                    let c = layer.color;
                    series.label(label).legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], c.stroke_width(2)));
                }
            }
        }
    }
    if layers.iter().any(|l| l.label.is_some() && !l.paths.is_empty()) {
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}

fn load_records(cfg: &RunConfig) -> Result<Vec<SampleRecord>> {
    let mut out = Vec::new();
    for input in &cfg.plot_inputs {
        let path = Path::new(input.split_once('=').map_or(input.as_str(), |(_, p)| p));
        out.extend(read_samples(path, cfg.model.obs_len, cfg.frame_rate)?);
    }
    Ok(out)
}

fn toy_samples(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let toy = data::load_toy(cfg)?.ok_or_else(|| Error::Config("toy_samples needs toy data (`data = toy` or a gen-toy directory)".into()))?;
    let records = load_records(cfg)?;
    let tracks = toy.table.tracklets();
    let n_cond = toy.labels.n_conditions();
    let mut written = Vec::new();
    for c in 0..n_cond {
        let real: Vec<&[[f64; 2]]> = tracks
            .iter()
            .filter(|t| toy.labels.get(t.agent).is_some_and(|(k, _)| k == c))
            .map(|t| t.positions.as_slice())
            .collect();
        let mine: Vec<&SampleRecord> =
            records.iter().filter(|r| toy.labels.get(r.target_id).is_some_and(|(k, _)| k == c)).collect();
        let obs: Vec<&[[f64; 2]]> = mine.iter().take(1).map(|r| r.observed.as_slice()).collect();
        let gen: Vec<&[[f64; 2]]> = mine.iter().map(|r| r.predicted.as_slice()).collect();
        let path = cfg.out.join(format!("toy_samples_c{c}.svg"));
        draw_paths(
            &path,
            &format!("condition {c}: {} samples", gen.len()),
            &[
                Layer { paths: real, color: REAL, width: 1, label: Some("data") },
                Layer { paths: obs, color: OBSERVED, width: 2, label: Some("observed") },
                Layer { paths: gen, color: SAMPLE, width: 1, label: Some("samples") },
            ],
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Named metric columns of one input, each a series of `(iteration, value)`.
type Series = BTreeMap<String, Vec<(f64, f64)>>;

fn read_series(path: &Path) -> Result<Series> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Series::new();
    if text.starts_with("# iteration") {
        let log = TrainLog::parse(&text, &path.display().to_string())?;
        for r in &log.records {
            let x = r.iteration as f64;
            for (k, v) in [("d_loss", r.d_loss), ("g_loss", r.g_loss), ("info_loss", r.info_loss), ("d_real", r.d_real), ("d_fake", r.d_fake)] {
                out.entry(k.to_string()).or_default().push((x, v));
            }
        }
        return Ok(out);
    }
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| anyhow!("{} is empty", path.display()))?.split('\t').collect();
    if header.first() != Some(&"iteration") {
        bail!("{}: expected a training log or an `iteration`-keyed table", path.display());
    }
    for line in lines {
        let vals: Vec<f64> = line.split('\t').map(|v| v.parse().unwrap_or(f64::NAN)).collect();
        for (name, v) in header.iter().zip(&vals).skip(1) {
            out.entry(name.to_string()).or_default().push((vals[0], *v));
        }
    }
    Ok(out)
}

fn input_label(input: &str) -> (String, PathBuf) {
    if let Some((label, path)) = input.split_once('=') {
        return (label.to_string(), PathBuf::from(path));
    }
    let path = PathBuf::from(input);
    let parts: Vec<String> = path
        .parent()
        .into_iter()
        .flat_map(|p| p.components().rev().take(2))
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    let label = if parts.is_empty() { input.to_string() } else { parts.into_iter().rev().collect::<Vec<_>>().join("/") };
    (label, path)
}

fn metric_curves(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if cfg.plot_inputs.is_empty() {
        return Err(Error::Config("metric_curves needs at least one input".into()).into());
    }
    let mut by_metric: BTreeMap<String, Vec<(String, Vec<(f64, f64)>)>> = BTreeMap::new();
    for input in &cfg.plot_inputs {
        let (label, path) = input_label(input);
        for (metric, points) in read_series(&path)? {
            by_metric.entry(metric).or_default().push((label.clone(), points));
        }
    }
    let mut written = Vec::new();
    for (metric, curves) in &by_metric {
        let pts = curves.iter().flat_map(|(_, p)| p.iter()).filter(|p| p.1.is_finite());
        let (mut x1, mut y0, mut y1) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !y0.is_finite() {
            continue;
        }
        let pad = ((y1 - y0) * 0.05).max(1e-3);
        let path = cfg.out.join(format!("metric_curves_{metric}.svg"));
        let root = SVGBackend::new(&path, (720, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(metric, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(32)
            .y_label_area_size(56)
            .build_cartesian_2d(0.0..x1, (y0 - pad)..(y1 + pad))
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("iteration").y_desc(metric.as_str()).draw().map_err(plot_err)?;
        for (i, (label, points)) in curves.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(points.iter().copied().filter(|p| p.1.is_finite()), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
        }
        chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err)?;
        root.present().map_err(plot_err)?;
        drop(chart);
        drop(root);
        written.push(path);
    }
    Ok(written)
}

fn scene_overlay(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let records = load_records(cfg)?;
    if records.is_empty() {
        return Err(Error::Config("scene_overlay needs at least one samples file".into()).into());
    }
    let truth: BTreeMap<(String, i64, i64), Vec<[f64; 2]>> = match data::test_scenes(cfg) {
        Ok(set) => set
            .scenes
            .iter()
            .filter_map(|s| Some(((s.source.clone(), s.start_frame, s.target_id()), s.future_positions()?)))
            .collect(),
        Err(_) => BTreeMap::new(),
    };
    let mut scenes: BTreeMap<(String, i64, i64), Vec<&SampleRecord>> = BTreeMap::new();
    for r in &records {
        scenes.entry(r.scene_key()).or_default().push(r);
    }
    let mut written = Vec::new();
    for (i, (key, recs)) in scenes.iter().take(cfg.plot_max_scenes).enumerate() {
        let gt: Vec<&[[f64; 2]]> = truth
            .iter()
            .filter(|(k, _)| k.1 == key.1 && k.2 == key.2)
            .take(1)
            .map(|(_, v)| v.as_slice())
            .collect();
        let path = cfg.out.join(format!("scene_overlay_{i}.svg"));
        draw_paths(
            &path,
            &format!("{} frame {} agent {}", key.0, key.1, key.2),
            &[
                Layer { paths: recs.iter().map(|r| r.predicted.as_slice()).collect(), color: SAMPLE, width: 1, label: Some("samples") },
                Layer { paths: gt, color: TRUTH, width: 3, label: Some("ground truth") },
                Layer { paths: vec![recs[0].observed.as_slice()], color: OBSERVED, width: 3, label: Some("observed") },
            ],
        )?;
        written.push(path);
    }
    Ok(written)
}
