//! The attention-pooling generator, the joint discriminator and the
//! latent-code reconstructor.
//!
//! Everything is built on the tape in [`crate::tensor`], generic over `f32`
//! and `f64`. Batched entry points live on [`nets`]; [`Model`] wraps them in
//! per-scene calls that take and return world coordinates.

mod batch;
mod checkpoint;
mod dims;
mod layers;
mod nets;
mod params;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use batch::{fit_scaler, PreparedScene, SceneBatch};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use dims::{ModelDims, LEAKY_SLOPE};
pub use layers::{Linear, LstmCell, Mlp};
pub use nets::{time_major_index, Decoded, DiscriminatorNet, Encoded, GeneratorNet, QNet};
pub use params::{fan_in_uniform, Bound, ParamId, ParamStore};

use crate::datasets::{AgentState, Scene};
use crate::error::{Error, Result};
use crate::interaction::FeatureScaler;
use crate::rng::{self, Rng};
use crate::tensor::{Graph, Matrix, Real, Var};

/// All learnable tensors of the model, grouped by network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T> {
    pub dims: ModelDims,
    pub scaler: FeatureScaler,
    pub generator: ParamStore<T>,
    pub discriminator: ParamStore<T>,
    pub q: ParamStore<T>,
    /// Identifies the parameter state; recorded with every generated sample.
    pub version: String,
}

/// Parameter layouts of the three networks for one set of dims.
#[derive(Clone, Debug)]
pub struct Networks {
    pub generator: GeneratorNet,
    pub discriminator: DiscriminatorNet,
    pub q: QNet,
}

fn build<T: Real>(dims: &ModelDims, rng: &mut Rng) -> (Networks, [ParamStore<T>; 3]) {
    let (mut g, mut d, mut q) = (ParamStore::default(), ParamStore::default(), ParamStore::default());
    let nets = Networks {
        generator: GeneratorNet::new(dims, &mut g, rng),
        discriminator: DiscriminatorNet::new(dims, &mut d, rng),
        q: QNet::new(dims, &mut q, rng),
    };
    (nets, [g, d, q])
}

fn same_layout<T: Real>(a: &ParamStore<T>, b: &ParamStore<T>) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
}

/// A generated future for one scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSample {
    /// World coordinates (m), one per predicted frame.
    pub positions: Vec<[f64; 2]>,
    /// Per-frame displacement divided by `dt` (m/s).
    pub velocities: Vec<[f64; 2]>,
    pub z: Vec<f64>,
    pub c: Vec<f64>,
    pub version: String,
}

/// Latent draws: `z ~ N(0, 1)` and `c ~ U(-1, 1)`, one row per sample.
pub fn draw_latent<T: Real>(rng: &mut Rng, rows: usize, dims: &ModelDims) -> (Matrix<T>, Matrix<T>) {
    let z = Matrix::from_fn(rows, dims.noise_dim, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        T::of(v)
    });
    let c = Matrix::from_fn(rows, dims.code_dim, |_, _| T::of(rng.random_range(-1.0..1.0)));
    (z, c)
}

/// Generator, discriminator and Q with their parameters.
#[derive(Clone, Debug)]
pub struct Model<T> {
    pub nets: Networks,
    pub params: ModelParameters<T>,
}

impl<T: Real> Model<T> {
    /// Fresh parameters drawn from the `init` stream of `seed`.
    pub fn init(dims: ModelDims, scaler: FeatureScaler, seed: u64) -> Result<Self> {
        dims.validate()?;
        let (nets, [generator, discriminator, q]) = build(&dims, &mut rng::stream(seed, "init"));
        let params = ModelParameters { dims, scaler, generator, discriminator, q, version: "init".into() };
        Ok(Self { nets, params })
    }

    /// Wrap existing parameters, checking names and shapes against the dims.
    pub fn from_parameters(params: ModelParameters<T>) -> Result<Self> {
        params.dims.validate()?;
        let (nets, [g, d, q]) = build::<T>(&params.dims, &mut rng::stream(0, "layout"));
        for (what, want, got) in
            [("generator", &g, &params.generator), ("discriminator", &d, &params.discriminator), ("q", &q, &params.q)]
        {
            if !same_layout(want, got) {
                return Err(Error::Checkpoint(format!("{what} tensors do not match the model dimensions")));
            }
        }
        if !(params.generator.all_finite() && params.discriminator.all_finite() && params.q.all_finite()) {
            return Err(Error::Checkpoint("parameters contain non-finite values".into()));
        }
        Ok(Self { nets, params })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.params.dims
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint<T> {
        let p = &self.params;
        let mut meta = meta;
        if let Some(obj) = meta.as_object_mut() {
            obj.insert("version".into(), p.version.clone().into());
        }
        Checkpoint {
            dims: p.dims.clone(),
            scaler: p.scaler,
            sections: vec![
                ("generator".into(), p.generator.clone()),
                ("discriminator".into(), p.discriminator.clone()),
                ("q".into(), p.q.clone()),
            ],
            meta,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let get = |n: &str| ck.section(n).cloned().ok_or_else(|| Error::Checkpoint(format!("missing section `{n}`")));
        let version = ck.meta.get("version").and_then(|v| v.as_str()).unwrap_or("unknown").to_string();
        Self::from_parameters(ModelParameters {
            dims: ck.dims.clone(),
            scaler: ck.scaler,
            generator: get("generator")?,
            discriminator: get("discriminator")?,
            q: get("q")?,
            version,
        })
    }

    pub fn batch(&self, scenes: &[&PreparedScene]) -> Result<SceneBatch<T>> {
        let d = self.dims();
        for s in scenes {
            if s.obs_len() != d.obs_len {
                return Err(Error::LengthMismatch { expected: d.obs_len, got: s.obs_len() });
            }
        }
        SceneBatch::new(scenes, &self.params.scaler, d.pool_dim, d.pred_len)
    }

    /// `LeakyReLU(W_μ x + b)` for one state.
    pub fn embed_state(&self, x: &AgentState) -> Vec<f64> {
        let mut g = Graph::new();
        let p = self.params.generator.bind(&mut g, false);
        let xv = g.constant(Matrix::from_vec(1, 4, x.to_array().map(T::of).to_vec()));
        let e = self.nets.generator.embed_states(&mut g, &p, xv);
        g.value(e).data().iter().map(|v| v.as_f64()).collect()
    }

    /// Encoder hidden states over an observed sequence, `obs_len × hidden_dim`.
    pub fn encode_history(&self, states: &[AgentState]) -> Vec<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.generator.bind(&mut g, false);
        let data: Vec<T> = states.iter().flat_map(|s| s.to_array().map(T::of)).collect();
        let x = g.constant(Matrix::from_vec(states.len(), 4, data));
        let net = &self.nets.generator;
        let e = net.embed_states(&mut g, &p, x);
        let xp = net.encoder.project(&mut g, &p, e);
        let hs = net.encoder.run(&mut g, &p, xp, states.len(), 1);
        hs.iter().map(|&h| g.value(h).data().iter().map(|v| v.as_f64()).collect()).collect()
    }

    fn encode_one(&self, scene: &Scene) -> Result<(Graph<T>, Encoded, PreparedScene)> {
        let prep = PreparedScene::new(scene)?;
        let batch = self.batch(&[&prep])?;
        let mut g = Graph::new();
        let p = self.params.generator.bind(&mut g, false);
        let enc = self.nets.generator.encode(&mut g, &p, &batch, self.dims());
        Ok((g, enc, prep))
    }

    /// Attention over the scene's neighbors, in the scene's neighbor order.
    /// Empty when the target is alone.
    pub fn attention_weights(&self, scene: &Scene) -> Result<Vec<f64>> {
        let (g, enc, _) = self.encode_one(scene)?;
        Ok(enc.attention.map(|a| g.value(a).data().iter().map(|v| v.as_f64()).collect()).unwrap_or_default())
    }

    /// Attention-weighted sum of projected neighbor hiddens, `pool_dim` wide.
    pub fn pool_neighbors(&self, scene: &Scene) -> Result<Vec<f64>> {
        let (g, enc, _) = self.encode_one(scene)?;
        Ok(g.value(enc.pooled).data().iter().map(|v| v.as_f64()).collect())
    }

    /// One future for `scene` from explicit latent vectors.
    pub fn generate(&self, scene: &Scene, z: &[f64], c: &[f64]) -> Result<PredictionSample> {
        let d = self.dims();
        if z.len() != d.noise_dim {
            return Err(Error::LengthMismatch { expected: d.noise_dim, got: z.len() });
        }
        if c.len() != d.code_dim {
            return Err(Error::LengthMismatch { expected: d.code_dim, got: c.len() });
        }
        let zm = Matrix::from_vec(1, z.len(), z.iter().map(|&v| T::of(v)).collect());
        let cm = Matrix::from_vec(1, c.len(), c.iter().map(|&v| T::of(v)).collect());
        Ok(self.decode_many(scene, zm, cm)?.pop().expect("one sample"))
    }

    /// `n` futures for `scene` with latents drawn from `rng`.
    pub fn sample(&self, scene: &Scene, n: usize, rng: &mut Rng) -> Result<Vec<PredictionSample>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let (z, c) = draw_latent(rng, n, self.dims());
        self.decode_many(scene, z, c)
    }

    fn decode_many(&self, scene: &Scene, z: Matrix<T>, c: Matrix<T>) -> Result<Vec<PredictionSample>> {
        let n = z.rows();
        let pred_len = self.dims().pred_len;
        let (mut g, enc, prep) = self.encode_one(scene)?;
        let p = self.params.generator.bind(&mut g, false);
        let ctx = g.gather_rows(enc.context, vec![0; n]);
        let (zv, cv) = (g.constant(z.clone()), g.constant(c.clone()));
        let out = self.nets.generator.decode(&mut g, &p, ctx, zv, cv, &vec![1.0 / prep.dt; n], pred_len);
        let states = g.value(out.states);
        if !states.all_finite() {
            return Err(Error::NonFinite { context: "generator output".into(), last_checkpoint: None });
        }
        let tr = prep.translation;
        Ok((0..n)
            .map(|m| {
                let rows = (0..pred_len).map(|t| states.row(t * n + m));
                let (mut positions, mut velocities) = (Vec::new(), Vec::new());
                for r in rows {
                    positions.push(tr.inverse([r[0].as_f64(), r[1].as_f64()]));
                    velocities.push([r[2].as_f64(), r[3].as_f64()]);
                }
                PredictionSample {
                    positions,
                    velocities,
                    z: z.row(m).iter().map(|v| v.as_f64()).collect(),
                    c: c.row(m).iter().map(|v| v.as_f64()).collect(),
                    version: self.params.version.clone(),
                }
            })
            .collect())
    }

    fn trunk_one(&self, g: &mut Graph<T>, obs: &[AgentState], pred: &[AgentState]) -> Result<Var> {
        let d = self.dims();
        if obs.len() != d.obs_len {
            return Err(Error::LengthMismatch { expected: d.obs_len, got: obs.len() });
        }
        if pred.len() != d.pred_len {
            return Err(Error::LengthMismatch { expected: d.pred_len, got: pred.len() });
        }
        let origin = obs.last().expect("obs_len >= 2").pos;
        let rel = |s: &AgentState| [s.pos[0] - origin[0], s.pos[1] - origin[1], s.vel[0], s.vel[1]].map(T::of);
        let o: Vec<T> = obs.iter().flat_map(rel).collect();
        let f: Vec<T> = pred.iter().flat_map(rel).collect();
        let p = self.params.discriminator.bind(g, false);
        let ov = g.constant(Matrix::from_vec(obs.len(), 4, o));
        let fv = g.constant(Matrix::from_vec(pred.len(), 4, f));
        let net = &self.nets.discriminator;
        let of = net.encode_obs(g, &p, ov, obs.len());
        Ok(net.trunk(g, &p, of, fv, pred.len()))
    }

    /// Probability that `(obs, pred)` came from the data.
    pub fn discriminate(&self, obs: &[AgentState], pred: &[AgentState]) -> Result<f64> {
        let mut g = Graph::new();
        let trunk = self.trunk_one(&mut g, obs, pred)?;
        let p = self.params.discriminator.bind(&mut g, false);
        let logit = self.nets.discriminator.logits(&mut g, &p, trunk);
        Ok(crate::tensor::sigmoid(g.scalar(logit).as_f64()))
    }

    /// Q's estimate of the latent code behind `pred`.
    pub fn reconstruct_code(&self, obs: &[AgentState], pred: &[AgentState]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let trunk = self.trunk_one(&mut g, obs, pred)?;
        let p = self.params.q.bind(&mut g, false);
        let c = self.nets.q.forward(&mut g, &p, trunk);
        Ok(g.value(c).data().iter().map(|v| v.as_f64()).collect())
    }
}

#[cfg(test)]
mod tests;
