//! Constant-velocity reference predictor.

use serde::{Deserialize, Serialize};

use crate::datasets::Scene;
use crate::error::{Error, Result};
use crate::evaluation::Predictor;
use crate::model::PredictionSample;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VelocityEstimate {
    /// Velocity at the last observed frame.
    LastFrame,
    /// Mean of the velocities at the last `k` observed frames.
    MeanOfLastK(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearPredictorConfig {
    pub velocity_estimate: VelocityEstimate,
}

impl Default for LinearPredictorConfig {
    fn default() -> Self {
        Self { velocity_estimate: VelocityEstimate::LastFrame }
    }
}

impl LinearPredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if let VelocityEstimate::MeanOfLastK(0) = self.velocity_estimate {
            return Err(Error::Config("k must be >= 1".into()));
        }
        Ok(())
    }
}

/// `p_t = p_0 + t·dt·v̂` for `t = 1..pred_len`.
pub fn linear_predict(scene: &Scene, pred_len: usize, config: &LinearPredictorConfig) -> Result<PredictionSample> {
    config.validate()?;
    let obs = scene.target_observed();
    let last = obs.last().ok_or_else(|| Error::Empty("scene has no observations".into()))?;
    let v = match config.velocity_estimate {
        VelocityEstimate::LastFrame => last.vel,
        VelocityEstimate::MeanOfLastK(k) => {
            let tail = &obs[obs.len().saturating_sub(k)..];
            let n = tail.len() as f64;
            [tail.iter().map(|s| s.vel[0]).sum::<f64>() / n, tail.iter().map(|s| s.vel[1]).sum::<f64>() / n]
        }
    };
    let positions = (1..=pred_len)
        .map(|t| {
            let s = t as f64 * scene.dt;
            [last.pos[0] + s * v[0], last.pos[1] + s * v[1]]
        })
        .collect();
    Ok(PredictionSample { positions, velocities: vec![v; pred_len], z: Vec::new(), c: Vec::new(), version: "linear".into() })
}

/// [`linear_predict`] as an evaluation predictor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearPredictor {
    pub config: LinearPredictorConfig,
    pub pred_len: usize,
}

impl Predictor for LinearPredictor {
    fn predict(&self, scene: &Scene, _k: usize, _rng: &mut Rng) -> Result<Vec<Vec<[f64; 2]>>> {
        let len = scene.pred_len().unwrap_or(self.pred_len);
        Ok(vec![linear_predict(scene, len, &self.config)?.positions])
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        match self.config.velocity_estimate {
            VelocityEstimate::LastFrame => "linear".into(),
            VelocityEstimate::MeanOfLastK(k) => format!("linear_mean{k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::AgentState;
    use crate::evaluation::{evaluate_model, EvalOptions};

    fn scene(vel: [f64; 2], origin: [f64; 2]) -> Scene {
        let obs = (0..8)
            .map(|t| {
                let s = (t as f64 - 7.0) * 0.4;
                AgentState::new([origin[0] + s * vel[0], origin[1] + s * vel[1]], vel)
            })
            .collect();
        let fut = (1..=12)
            .map(|t| {
                let s = t as f64 * 0.4;
                AgentState::new([origin[0] + s * vel[0], origin[1] + s * vel[1]], vel)
            })
            .collect();
        Scene {
            source: "cv".into(),
            start_frame: 0,
            agent_ids: vec![1],
            target_index: 0,
            observed: vec![obs],
            future: Some(fut),
            dt: 0.4,
        }
    }

    #[test]
    fn unit_speed_reaches_four_point_eight() {
        let p = linear_predict(&scene([1.0, 0.0], [0.0, 0.0]), 12, &LinearPredictorConfig::default()).unwrap();
        assert_eq!(p.positions.len(), 12);
        let last = p.positions[11];
        assert!((last[0] - 4.8).abs() < 1e-12 && last[1] == 0.0);
    }

    #[test]
    fn stationary_agent_stays_put() {
        let p = linear_predict(&scene([0.0, 0.0], [2.0, -1.0]), 12, &LinearPredictorConfig::default()).unwrap();
        assert!(p.positions.iter().all(|&q| q == [2.0, -1.0]));
    }

    #[test]
    fn translation_equivariance() {
        let cfg = LinearPredictorConfig { velocity_estimate: VelocityEstimate::MeanOfLastK(3) };
        let a = linear_predict(&scene([0.3, 0.7], [0.0, 0.0]), 12, &cfg).unwrap();
        let b = linear_predict(&scene([0.3, 0.7], [5.0, -2.0]), 12, &cfg).unwrap();
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!((p[0] + 5.0 - q[0]).abs() < 1e-12 && (p[1] - 2.0 - q[1]).abs() < 1e-12);
        }
        assert!(LinearPredictorConfig { velocity_estimate: VelocityEstimate::MeanOfLastK(0) }.validate().is_err());
    }

    #[test]
    fn constant_velocity_scenes_evaluate_to_zero_at_any_k() {
        let scenes: Vec<Scene> = (0..5).map(|k| scene([0.5 * k as f64, 1.0], [k as f64, 0.0])).collect();
        let pred = LinearPredictor { config: LinearPredictorConfig::default(), pred_len: 12 };
        let (r1, _) = evaluate_model(&pred, &scenes, &EvalOptions { k: 1, ..EvalOptions::default() }).unwrap();
        let (r20, rows) = evaluate_model(&pred, &scenes, &EvalOptions::default()).unwrap();
        assert!(r1.ade < 1e-12 && r1.fde < 1e-12);
        assert_eq!((r1.ade, r1.fde), (r20.ade, r20.fde));
        assert_eq!(rows.len(), 5);
        assert_eq!(r20.one_nn_accuracy, Some(0.0));
    }
}
