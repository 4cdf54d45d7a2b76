use crate::datasets::{normalize_scene, Scene, Translation};
use crate::error::{Error, Result};
use crate::interaction::{social_features, FeatureScaler, SocialFeatures};
use crate::tensor::{Matrix, Real};

/// A scene centred on its target, with interaction features precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedScene {
    /// `[agent][t]` normalized states; the target comes first.
    pub observed: Vec<Vec<[f64; 4]>>,
    pub future: Option<Vec<[f64; 4]>>,
    /// Raw features between the target and each neighbor, at the last observed frame.
    pub features: Vec<SocialFeatures>,
    pub translation: Translation,
    pub dt: f64,
}

impl PreparedScene {
    pub fn new(scene: &Scene) -> Result<Self> {
        scene.validate()?;
        let (norm, translation) = normalize_scene(scene);
        let ti = norm.target_index;
        let order = std::iter::once(ti).chain(norm.neighbor_indices());
        let observed: Vec<Vec<[f64; 4]>> =
            order.map(|j| norm.observed[j].iter().map(|s| s.to_array()).collect()).collect();
        let last = norm.target_last();
        let features = norm
            .neighbor_indices()
            .map(|j| social_features(&last, norm.observed[j].last().expect("validated")))
            .collect();
        let future = norm.future.as_ref().map(|f| f.iter().map(|s| s.to_array()).collect());
        Ok(Self { observed, future, features, translation, dt: scene.dt })
    }

    pub fn obs_len(&self) -> usize {
        self.observed[0].len()
    }

    pub fn num_neighbors(&self) -> usize {
        self.observed.len() - 1
    }
}

/// Fit the feature standardization on every target-neighbor pair.
pub fn fit_scaler(scenes: &[PreparedScene]) -> FeatureScaler {
    FeatureScaler::fit(scenes.iter().flat_map(|s| s.features.iter()))
}

/// Several scenes packed into row-stacked matrices.
///
/// Sequences are time-major: block `t` holds one row per agent (or per target).
#[derive(Clone, Debug)]
pub struct SceneBatch<T> {
    pub n_scenes: usize,
    pub n_agents: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    /// `(obs_len·n_agents) × 4`, every agent of every scene.
    pub obs: Matrix<T>,
    /// Row of each scene's target within an `obs` block.
    pub target_rows: Vec<usize>,
    /// Row of each neighbor, grouped by scene.
    pub pair_rows: Vec<usize>,
    pub pair_offsets: Vec<usize>,
    /// Standardized features, one row per pair.
    pub pair_features: Matrix<T>,
    /// `(N-1)/sqrt(pool_dim)` of the pair's scene, as a column.
    pub pair_scale: Matrix<T>,
    /// `(obs_len·n_scenes) × 4`, targets only.
    pub target_obs: Matrix<T>,
    /// `(pred_len·n_scenes) × 4`, if ground truth is known.
    pub future: Option<Matrix<T>>,
    pub inv_dt: Vec<f64>,
    pub translations: Vec<Translation>,
}

impl<T: Real> SceneBatch<T> {
    pub fn new(scenes: &[&PreparedScene], scaler: &FeatureScaler, pool_dim: usize, pred_len: usize) -> Result<Self> {
        let first = scenes.first().ok_or_else(|| Error::Empty("batch has no scenes".into()))?;
        let obs_len = first.obs_len();
        let b = scenes.len();
        let mut agent_offsets = Vec::with_capacity(b);
        let mut n_agents = 0;
        for s in scenes {
            if s.obs_len() != obs_len {
                return Err(Error::LengthMismatch { expected: obs_len, got: s.obs_len() });
            }
            if let Some(f) = &s.future {
                if f.len() != pred_len {
                    return Err(Error::LengthMismatch { expected: pred_len, got: f.len() });
                }
            }
            agent_offsets.push(n_agents);
            n_agents += s.observed.len();
        }

        let mut obs = Matrix::zeros(obs_len * n_agents, 4);
        let mut target_obs = Matrix::zeros(obs_len * b, 4);
        for (si, s) in scenes.iter().enumerate() {
            for (a, traj) in s.observed.iter().enumerate() {
                for (t, st) in traj.iter().enumerate() {
                    let row = obs.row_mut(t * n_agents + agent_offsets[si] + a);
                    for k in 0..4 {
                        row[k] = T::of(st[k]);
                    }
                }
            }
            for (t, st) in s.observed[0].iter().enumerate() {
                let row = target_obs.row_mut(t * b + si);
                for k in 0..4 {
                    row[k] = T::of(st[k]);
                }
            }
        }

        let mut pair_rows = Vec::new();
        let mut pair_offsets = vec![0];
        let mut feats = Vec::new();
        let mut scale = Vec::new();
        let denom = (pool_dim as f64).sqrt();
        for (si, s) in scenes.iter().enumerate() {
            let n = s.observed.len();
            for (k, f) in s.features.iter().enumerate() {
                pair_rows.push(agent_offsets[si] + 1 + k);
                feats.extend(scaler.apply(*f).map(T::of));
                scale.push(T::of((n - 1) as f64 / denom));
            }
            pair_offsets.push(pair_rows.len());
        }

        let future = if scenes.iter().all(|s| s.future.is_some()) {
            let mut m = Matrix::zeros(pred_len * b, 4);
            for (si, s) in scenes.iter().enumerate() {
                for (t, st) in s.future.as_ref().expect("checked").iter().enumerate() {
                    let row = m.row_mut(t * b + si);
                    for k in 0..4 {
                        row[k] = T::of(st[k]);
                    }
                }
            }
            Some(m)
        } else {
            None
        };

        let p = pair_rows.len();
        Ok(Self {
            n_scenes: b,
            n_agents,
            obs_len,
            pred_len,
            obs,
            target_rows: agent_offsets,
            pair_rows,
            pair_offsets,
            pair_features: Matrix::from_vec(p, 3, feats),
            pair_scale: Matrix::from_vec(p, 1, scale),
            target_obs,
            future,
            inv_dt: scenes.iter().map(|s| 1.0 / s.dt).collect(),
            translations: scenes.iter().map(|s| s.translation).collect(),
        })
    }

    /// Future positions only, `(pred_len·n_scenes) × 2`.
    pub fn future_positions(&self) -> Option<Matrix<T>> {
        self.future.as_ref().map(|f| Matrix::from_fn(f.rows(), 2, |r, c| f.get(r, c)))
    }
}
