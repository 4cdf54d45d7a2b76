use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scene::{build_scenes, Scene, Window};
use super::table::TrajectoryTable;
use crate::error::{Error, Result};
use crate::kv::{self, KvConfig};

pub const ETH_UCY: [&str; 5] = ["ETH", "Hotel", "Univ", "ZARA01", "ZARA02"];

/// Leave-one-out split over the five ETH/UCY recordings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub dataset_names: Vec<String>,
    pub test_index: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { dataset_names: ETH_UCY.iter().map(|s| s.to_string()).collect(), test_index: 0 }
    }
}

impl SplitSpec {
    pub fn with_test(test_index: usize) -> Self {
        Self { test_index, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.test_index >= self.dataset_names.len() {
            return Err(Error::Config(format!(
                "test_index {} out of range for {} datasets",
                self.test_index,
                self.dataset_names.len()
            )));
        }
        let mut names = self.dataset_names.clone();
        names.sort();
        names.dedup();
        if names.len() != self.dataset_names.len() {
            return Err(Error::Config("dataset names must be distinct".into()));
        }
        Ok(())
    }

    pub fn test_name(&self) -> &str {
        &self.dataset_names[self.test_index]
    }

    pub fn train_names(&self) -> impl Iterator<Item = &str> {
        self.dataset_names.iter().enumerate().filter(move |(i, _)| *i != self.test_index).map(|(_, n)| n.as_str())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Split {
    pub train: Vec<Scene>,
    pub test: Vec<Scene>,
}

pub fn split_leave_one_out(
    spec: &SplitSpec,
    tables: &BTreeMap<String, TrajectoryTable>,
    window: Window,
) -> Result<Split> {
    spec.validate()?;
    for name in &spec.dataset_names {
        if !tables.contains_key(name) {
            return Err(Error::MissingDataset(name.clone()));
        }
    }
    let mut out = Split::default();
    for (i, name) in spec.dataset_names.iter().enumerate() {
        let mut scenes = build_scenes(&tables[name], window)?;
        for s in &mut scenes {
            s.source = name.clone();
        }
        if i == spec.test_index {
            out.test = scenes;
        } else {
            out.train.extend(scenes);
        }
    }
    Ok(out)
}

impl KvConfig for SplitSpec {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        match key {
            "datasets" => self.dataset_names = kv::list(key, v)?,
            "test_index" => self.test_index = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        vec![
            ("datasets".into(), self.dataset_names.join(",")),
            ("test_index".into(), self.test_index.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::table::TrajectoryRow;

    fn tables() -> BTreeMap<String, TrajectoryTable> {
        ETH_UCY
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let rows = (0..20 + k as i64)
                    .map(|f| TrajectoryRow { frame: f, agent: 1, x: f as f64, y: k as f64 })
                    .collect();
                (name.to_string(), TrajectoryTable::new(rows, 2.5, *name).unwrap())
            })
            .collect()
    }

    #[test]
    fn held_out_dataset_never_reaches_train() {
        let split = split_leave_one_out(&SplitSpec::with_test(0), &tables(), Window::default()).unwrap();
        assert!(split.test.iter().all(|s| s.source == "ETH"));
        assert!(split.train.iter().all(|s| s.source != "ETH"));
    }

    #[test]
    fn train_and_test_partition_all_scenes() {
        let t = tables();
        let total: usize = t.values().map(|tb| build_scenes(tb, Window::default()).unwrap().len()).sum();
        for k in 0..5 {
            let s = split_leave_one_out(&SplitSpec::with_test(k), &t, Window::default()).unwrap();
            assert_eq!(s.train.len() + s.test.len(), total);
        }
    }

    #[test]
    fn cycling_test_index_visits_every_dataset_once() {
        let t = tables();
        let mut seen: Vec<String> = (0..5)
            .map(|k| {
                let s = split_leave_one_out(&SplitSpec::with_test(k), &t, Window::default()).unwrap();
                s.test[0].source.clone()
            })
            .collect();
        seen.sort();
        let mut expect: Vec<String> = ETH_UCY.iter().map(|s| s.to_string()).collect();
        expect.sort();
        assert_eq!(seen, expect);
    }

    #[test]
    fn missing_dataset_is_named() {
        let mut t = tables();
        t.remove("Hotel");
        let err = split_leave_one_out(&SplitSpec::with_test(0), &t, Window::default()).unwrap_err();
        assert!(err.to_string().contains("Hotel"), "{err}");
    }
}
