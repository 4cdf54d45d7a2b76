use std::collections::BTreeMap;

use super::SampleSet;
use crate::datasets::ToyDataset;
use crate::error::{Error, Result};

/// Endpoint clusters of the toy set, one per (condition, branch).
#[derive(Clone, Debug, PartialEq)]
pub struct ModeClusters {
    pub labels: Vec<(usize, usize)>,
    pub centers: Vec<[f64; 2]>,
    /// Root-mean-square distance of the real endpoints to their center.
    pub spreads: Vec<f64>,
    /// Accept a sample within `tolerance × spread` of its nearest center.
    pub tolerance: f64,
}

impl ModeClusters {
    pub fn from_toy(toy: &ToyDataset) -> Result<Self> {
        let mut ends: BTreeMap<(usize, usize), Vec<[f64; 2]>> = BTreeMap::new();
        for tr in toy.table.tracklets() {
            let label = toy
                .labels
                .get(tr.agent)
                .ok_or_else(|| Error::Validation(format!("agent {} has no mode label", tr.agent)))?;
            ends.entry(label).or_default().push(*tr.positions.last().expect("non-empty tracklet"));
        }
        if ends.is_empty() {
            return Err(Error::Empty("toy set has no trajectories".into()));
        }
        let mut out = Self { labels: Vec::new(), centers: Vec::new(), spreads: Vec::new(), tolerance: 3.0 };
        for (label, pts) in ends {
            let n = pts.len() as f64;
            let c = [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n];
            let ms = pts.iter().map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sum::<f64>() / n;
            out.labels.push(label);
            out.centers.push(c);
            out.spreads.push(ms.sqrt());
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Index of the cluster an endpoint falls into, if any.
    pub fn assign(&self, end: [f64; 2]) -> Option<usize> {
        let (k, d) = self
            .centers
            .iter()
            .map(|c| (c[0] - end[0]).hypot(c[1] - end[1]))
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (d <= self.tolerance * self.spreads[k]).then_some(k)
    }
}

/// Fraction of clusters hit by at least one sample endpoint.
pub fn mode_coverage(samples: &[SampleSet], clusters: &ModeClusters) -> f64 {
    if clusters.is_empty() {
        return 0.0;
    }
    let mut hit = vec![false; clusters.len()];
    for set in samples {
        for t in &set.trajectories {
            if let Some(k) = t.last().and_then(|&e| clusters.assign(e)) {
                hit[k] = true;
            }
        }
    }
    hit.iter().filter(|&&h| h).count() as f64 / clusters.len() as f64
}
