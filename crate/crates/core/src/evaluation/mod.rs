//! Accuracy metrics (ADE, FDE, best-of-K) and distribution metrics (1-NN
//! two-sample accuracy, EMD, toy mode coverage).
//!
//! All functions take trajectories as position sequences in world
//! coordinates (m).

mod assignment;
mod coverage;
mod report;
mod transport;

pub use assignment::min_cost_assignment;
pub use coverage::{mode_coverage, ModeClusters};
pub use report::{evaluate_model, scene_table, EvalOptions, GroupMetrics, MetricsReport, Predictor, SceneMetrics};
pub use transport::emd_from_costs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Trajectory = [[f64; 2]];

fn check_lengths(pred: &Trajectory, gt: &Trajectory) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { expected: gt.len(), got: pred.len() });
    }
    if gt.is_empty() {
        return Err(Error::Empty("trajectory has no steps".into()));
    }
    Ok(())
}

#[inline]
fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Average displacement error: mean Euclidean error over all steps.
pub fn ade(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_lengths(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(&p, &g)| dist(p, g)).sum::<f64>() / gt.len() as f64)
}

/// Final displacement error: Euclidean error at the last step.
pub fn fde(pred: &Trajectory, gt: &Trajectory) -> Result<f64> {
    check_lengths(pred, gt)?;
    Ok(dist(*pred.last().expect("non-empty"), *gt.last().expect("non-empty")))
}

/// Smallest `metric(sample, gt)` over the samples.
pub fn best_of_k<S: AsRef<Trajectory>>(
    samples: &[S],
    gt: &Trajectory,
    metric: impl Fn(&Trajectory, &Trajectory) -> Result<f64>,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("best-of-K needs at least one sample".into()));
    }
    let mut best = f64::INFINITY;
    for s in samples {
        best = best.min(metric(s.as_ref(), gt)?);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleLabel {
    Real,
    Generated,
}

/// Trajectories of equal length drawn from one source.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub trajectories: Vec<Vec<[f64; 2]>>,
    pub label: SampleLabel,
}

impl SampleSet {
    pub fn new(trajectories: Vec<Vec<[f64; 2]>>, label: SampleLabel) -> Result<Self> {
        let first = trajectories.first().ok_or_else(|| Error::Empty("sample set is empty".into()))?;
        let len = first.len();
        if let Some(bad) = trajectories.iter().find(|t| t.len() != len) {
            return Err(Error::LengthMismatch { expected: len, got: bad.len() });
        }
        Ok(Self { trajectories, label })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

fn cost_matrix(a: &SampleSet, b: &SampleSet) -> Result<Vec<Vec<f64>>> {
    a.trajectories.iter().map(|x| b.trajectories.iter().map(|y| ade(y, x)).collect()).collect()
}

/// Leave-one-out accuracy of a 1-NN classifier over `real ∪ generated`,
/// with ADE as the distance. A point whose nearest real and nearest
/// generated neighbors are equally far is classified as real.
pub fn one_nn_accuracy(real: &SampleSet, generated: &SampleSet) -> Result<f64> {
    if real.len() != generated.len() {
        return Err(Error::LengthMismatch { expected: real.len(), got: generated.len() });
    }
    if real.is_empty() {
        return Err(Error::Empty("1-NN needs non-empty sets".into()));
    }
    let all: Vec<(&Vec<[f64; 2]>, bool)> = real
        .trajectories
        .iter()
        .map(|t| (t, true))
        .chain(generated.trajectories.iter().map(|t| (t, false)))
        .collect();
    let mut correct = 0usize;
    for (i, (x, is_real)) in all.iter().enumerate() {
        let (mut near_real, mut near_gen) = (f64::INFINITY, f64::INFINITY);
        for (j, (y, r)) in all.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = ade(y, x)?;
            if *r {
                near_real = near_real.min(d);
            } else {
                near_gen = near_gen.min(d);
            }
        }
        let predicted_real = near_real <= near_gen;
        if predicted_real == *is_real {
            correct += 1;
        }
    }
    Ok(correct as f64 / all.len() as f64)
}

/// Earth Mover's Distance between two sets under the ADE ground distance.
pub fn emd(real: &SampleSet, generated: &SampleSet) -> Result<f64> {
    emd_from_costs(&cost_matrix(real, generated)?)
}

#[cfg(test)]
mod tests;
