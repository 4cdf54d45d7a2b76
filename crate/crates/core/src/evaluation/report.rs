use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample as sample_indices;

use super::{ade, best_of_k, emd, fde, one_nn_accuracy, SampleLabel, SampleSet};
use crate::datasets::Scene;
use crate::error::{Error, Result};
use crate::kv;
use crate::model::Model;
use crate::rng::{self, Rng};
use crate::tensor::Real;

/// Anything that produces futures for a scene, in world coordinates.
pub trait Predictor {
    /// Up to `k` futures; deterministic predictors return exactly one.
    fn predict(&self, scene: &Scene, k: usize, rng: &mut Rng) -> Result<Vec<Vec<[f64; 2]>>>;

    fn is_deterministic(&self) -> bool;

    fn name(&self) -> String;
}

impl<T: Real> Predictor for Model<T> {
    fn predict(&self, scene: &Scene, k: usize, rng: &mut Rng) -> Result<Vec<Vec<[f64; 2]>>> {
        Ok(self.sample(scene, k, rng)?.into_iter().map(|s| s.positions).collect())
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        "model".into()
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    /// Samples per scene for best-of-K.
    pub k: usize,
    /// Size of the real and generated sets for 1-NN and EMD.
    pub set_size: usize,
    pub seed: u64,
    /// Group key per scene for the distribution metrics; defaults to the scene source.
    pub groups: Option<Vec<String>>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { k: 20, set_size: 20, seed: 0, groups: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneMetrics {
    pub source: String,
    pub start_frame: i64,
    pub target_id: i64,
    pub ade: f64,
    pub fde: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupMetrics {
    pub n_scenes: usize,
    pub ade: f64,
    pub fde: f64,
    pub one_nn_accuracy: f64,
    pub emd: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub predictor: String,
    /// Mean best-of-K ADE (m).
    pub ade: f64,
    /// Mean best-of-K FDE (m).
    pub fde: f64,
    pub k: usize,
    pub n_scenes: usize,
    pub one_nn_accuracy: Option<f64>,
    pub emd: Option<f64>,
    pub mode_coverage: Option<f64>,
    pub config_hash: String,
    pub groups: BTreeMap<String, GroupMetrics>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "nan".into())
}

impl MetricsReport {
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("predictor".to_string(), self.predictor.clone()),
            ("ade".into(), self.ade.to_string()),
            ("fde".into(), self.fde.to_string()),
            ("k".into(), self.k.to_string()),
            ("n_scenes".into(), self.n_scenes.to_string()),
            ("one_nn_accuracy".into(), opt(self.one_nn_accuracy)),
            ("emd".into(), opt(self.emd)),
            ("mode_coverage".into(), opt(self.mode_coverage)),
            ("config_hash".into(), self.config_hash.clone()),
        ];
        for (name, g) in &self.groups {
            out.push((format!("group.{name}.n_scenes"), g.n_scenes.to_string()));
            out.push((format!("group.{name}.ade"), g.ade.to_string()));
            out.push((format!("group.{name}.fde"), g.fde.to_string()));
            out.push((format!("group.{name}.one_nn_accuracy"), g.one_nn_accuracy.to_string()));
            out.push((format!("group.{name}.emd"), g.emd.to_string()));
        }
        out
    }

    pub fn to_kv_text(&self) -> String {
        kv::to_text(&self.entries())
    }
}

/// Tab-separated per-scene table with a header line.
pub fn scene_table(rows: &[SceneMetrics]) -> String {
    let mut s = String::from("source\tstart_frame\ttarget_id\tade\tfde\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.source, r.start_frame, r.target_id, r.ade, r.fde);
    }
    s
}

/// Best-of-K accuracy over all scenes, plus 1-NN and EMD per group between
/// `set_size` real futures and one prediction for each of the same scenes.
pub fn evaluate_model(
    predictor: &dyn Predictor,
    scenes: &[Scene],
    options: &EvalOptions,
) -> Result<(MetricsReport, Vec<SceneMetrics>)> {
    if scenes.is_empty() {
        return Err(Error::Empty("no test scenes".into()));
    }
    if options.k == 0 {
        return Err(Error::Config("K must be >= 1".into()));
    }
    if let Some(g) = &options.groups {
        if g.len() != scenes.len() {
            return Err(Error::LengthMismatch { expected: scenes.len(), got: g.len() });
        }
    }
    let k = if predictor.is_deterministic() { 1 } else { options.k };
    let mut sample_rng = rng::stream(options.seed, "eval.samples");
    let mut rows = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let gt = scene
            .future_positions()
            .ok_or_else(|| Error::Validation("test scene has no ground-truth future".into()))?;
        let samples = predictor.predict(scene, k, &mut sample_rng)?;
        rows.push(SceneMetrics {
            source: scene.source.clone(),
            start_frame: scene.start_frame,
            target_id: scene.target_id(),
            ade: best_of_k(&samples, &gt, ade)?,
            fde: best_of_k(&samples, &gt, fde)?,
        });
    }

    let group_of = |i: usize| match &options.groups {
        Some(g) => g[i].clone(),
        None => scenes[i].source.clone(),
    };
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in 0..scenes.len() {
        members.entry(group_of(i)).or_default().push(i);
    }

    let mut set_rng = rng::stream(options.seed, "eval.sets");
    let mut groups = BTreeMap::new();
    for (name, idx) in &members {
        let n = idx.len() as f64;
        let mut gm = GroupMetrics {
            n_scenes: idx.len(),
            ade: idx.iter().map(|&i| rows[i].ade).sum::<f64>() / n,
            fde: idx.iter().map(|&i| rows[i].fde).sum::<f64>() / n,
            ..GroupMetrics::default()
        };
        let size = options.set_size.min(idx.len()).max(1);
        let chosen: Vec<usize> = sample_indices(&mut set_rng, idx.len(), size).into_iter().map(|j| idx[j]).collect();
        let mut real = Vec::with_capacity(size);
        let mut fake = Vec::with_capacity(size);
        for &i in &chosen {
            real.push(scenes[i].future_positions().expect("checked above"));
            fake.push(predictor.predict(&scenes[i], 1, &mut set_rng)?.swap_remove(0));
        }
        let (sr, sg) = (SampleSet::new(real, SampleLabel::Real)?, SampleSet::new(fake, SampleLabel::Generated)?);
        gm.one_nn_accuracy = one_nn_accuracy(&sr, &sg)?;
        gm.emd = emd(&sr, &sg)?;
        groups.insert(name.clone(), gm);
    }

    let count = rows.len() as f64;
    let ng = groups.len() as f64;
    let report = MetricsReport {
        predictor: predictor.name(),
        ade: rows.iter().map(|r| r.ade).sum::<f64>() / count,
        fde: rows.iter().map(|r| r.fde).sum::<f64>() / count,
        k: options.k,
        n_scenes: rows.len(),
        one_nn_accuracy: Some(groups.values().map(|g| g.one_nn_accuracy).sum::<f64>() / ng),
        emd: Some(groups.values().map(|g| g.emd).sum::<f64>() / ng),
        mode_coverage: None,
        config_hash: String::new(),
        groups,
    };
    Ok((report, rows))
}
