//! Scene loading for the toy benchmark, ETH/UCY-style directories and
//! single trajectory files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use trajsampler::datasets::{
    build_observation_scenes, build_scenes, generate_toy_dataset, load_trajectory_file, split_leave_one_out,
    ModeLabelTable, Scene, ToyDataset, TrajectoryTable,
};
use trajsampler::Error;

use crate::config::RunConfig;

pub const TOY_TRAJECTORIES: &str = "toy_trajectories.txt";
pub const TOY_LABELS: &str = "toy_labels.txt";

/// Scenes plus, for toy data, the condition of every scene.
pub struct SceneSet {
    pub scenes: Vec<Scene>,
    pub conditions: Option<Vec<usize>>,
    pub frame_step: i64,
}

impl SceneSet {
    pub fn groups(&self) -> Option<Vec<String>> {
        self.conditions.as_ref().map(|c| c.iter().map(|c| format!("c{c}")).collect())
    }
}

fn data_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.data);
    if !dir.is_dir() {
        return Err(Error::MissingDataset(cfg.data.clone()).into());
    }
    Ok(dir)
}

/// The toy set, generated from `toy.*` or read back from a `gen-toy` directory.
pub fn load_toy(cfg: &RunConfig) -> Result<Option<ToyDataset>> {
    if cfg.is_toy() {
        return Ok(Some(generate_toy_dataset(&cfg.toy, cfg.model.obs_len, cfg.model.pred_len)?));
    }
    let dir = data_dir(cfg)?;
    let labels = dir.join(TOY_LABELS);
    if !labels.exists() {
        return Ok(None);
    }
    let table = load_trajectory_file(&dir.join(TOY_TRAJECTORIES), cfg.frame_rate)?;
    Ok(Some(ToyDataset { table: table.with_frame_step(1)?, labels: ModeLabelTable::load(&labels)? }))
}

fn toy_scenes(cfg: &RunConfig, toy: &ToyDataset) -> Result<SceneSet> {
    let scenes = build_scenes(&toy.table, cfg.window())?;
    let conditions = scenes
        .iter()
        .map(|s| {
            toy.labels
                .get(s.target_id())
                .map(|(c, _)| c)
                .ok_or_else(|| Error::Validation(format!("agent {} has no mode label", s.target_id())))
        })
        .collect::<trajsampler::Result<Vec<_>>>()?;
    Ok(SceneSet { scenes, conditions: Some(conditions), frame_step: toy.table.frame_step() })
}

fn split_tables(cfg: &RunConfig, dir: &Path) -> Result<BTreeMap<String, TrajectoryTable>> {
    let mut tables = BTreeMap::new();
    for name in &cfg.split.dataset_names {
        let path = dir.join(format!("{name}.txt"));
        if !path.exists() {
            return Err(Error::MissingDataset(path.display().to_string()).into());
        }
        tables.insert(name.clone(), load_trajectory_file(&path, cfg.frame_rate)?);
    }
    Ok(tables)
}

/// Training scenes: the whole toy set, or the training side of the split.
pub fn training_scenes(cfg: &RunConfig) -> Result<SceneSet> {
    if let Some(toy) = load_toy(cfg)? {
        return toy_scenes(cfg, &toy);
    }
    let dir = data_dir(cfg)?;
    let tables = split_tables(cfg, &dir)?;
    let step = tables.values().next().map_or(1, |t| t.frame_step());
    let split = split_leave_one_out(&cfg.split, &tables, cfg.window())?;
    Ok(SceneSet { scenes: split.train, conditions: None, frame_step: step })
}

/// Scenes with ground truth: `scenes` if given, else the toy set or the
/// held-out side of the split.
pub fn test_scenes(cfg: &RunConfig) -> Result<SceneSet> {
    if let Some(path) = &cfg.scenes {
        let table = load_scene_file(path, cfg)?;
        let scenes = build_scenes(&table, cfg.window())?;
        return Ok(SceneSet { scenes, conditions: None, frame_step: table.frame_step() });
    }
    if let Some(toy) = load_toy(cfg)? {
        return toy_scenes(cfg, &toy);
    }
    let dir = data_dir(cfg)?;
    let tables = split_tables(cfg, &dir)?;
    let step = tables[cfg.split.test_name()].frame_step();
    let split = split_leave_one_out(&cfg.split, &tables, cfg.window())?;
    Ok(SceneSet { scenes: split.test, conditions: None, frame_step: step })
}

/// Scenes to sample futures for: observation windows of `scenes` if given,
/// else one anchor scene per toy condition or the held-out split.
pub fn prediction_scenes(cfg: &RunConfig) -> Result<SceneSet> {
    if let Some(path) = &cfg.scenes {
        let table = load_scene_file(path, cfg)?;
        let scenes = build_observation_scenes(&table, cfg.window())?;
        return Ok(SceneSet { scenes, conditions: None, frame_step: table.frame_step() });
    }
    let all = test_scenes(cfg)?;
    match &all.conditions {
        Some(conds) => {
            let mut seen = Vec::new();
            let mut scenes = Vec::new();
            let mut conditions = Vec::new();
            for (s, &c) in all.scenes.iter().zip(conds) {
                if !seen.contains(&c) {
                    seen.push(c);
                    scenes.push(s.clone());
                    conditions.push(c);
                }
            }
            Ok(SceneSet { scenes, conditions: Some(conditions), frame_step: all.frame_step })
        }
        None => Ok(all),
    }
}

fn load_scene_file(path: &Path, cfg: &RunConfig) -> Result<TrajectoryTable> {
    if !path.exists() {
        return Err(Error::MissingDataset(path.display().to_string()).into());
    }
    load_trajectory_file(path, cfg.frame_rate).with_context(|| format!("loading scenes from {}", path.display()))
}
