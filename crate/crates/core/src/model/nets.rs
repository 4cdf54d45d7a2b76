use super::batch::SceneBatch;
use super::dims::{ModelDims, LEAKY_SLOPE};
use super::layers::{Linear, LstmCell, Mlp};
use super::params::{Bound, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Graph, Matrix, Real, Var};

/// Parameter layout of the generator.
#[derive(Clone, Debug)]
pub struct GeneratorNet {
    pub embed: Linear,
    pub encoder: LstmCell,
    pub phi: Linear,
    pub sigma: Linear,
    pub decoder: LstmCell,
    pub head: Mlp,
}

/// Parameter layout of the discriminator trunk and D-head.
#[derive(Clone, Debug)]
pub struct DiscriminatorNet {
    pub obs_encoder: LstmCell,
    pub pred_encoder: LstmCell,
    pub obs_proj: Linear,
    pub pred_proj: Linear,
    pub fuse: Linear,
    pub d_head: Linear,
}

/// Latent-code reconstructor on top of the discriminator trunk.
#[derive(Clone, Debug)]
pub struct QNet {
    pub head: Linear,
}

impl GeneratorNet {
    pub fn new<T: Real>(dims: &ModelDims, store: &mut ParamStore<T>, rng: &mut Rng) -> Self {
        let embed = Linear::new(store, "embed", dims.state_dim, dims.embed_dim, true, rng);
        let encoder = LstmCell::new(store, "encoder", dims.embed_dim, dims.hidden_dim, rng);
        let phi = Linear::new(store, "phi", 3, dims.pool_dim, true, rng);
        let sigma = Linear::new(store, "sigma", dims.hidden_dim, dims.pool_dim, false, rng);
        let decoder = LstmCell::new(store, "decoder", dims.decoder_input_dim(), dims.hidden_dim, rng);
        let head = Mlp::new(store, "head", dims.hidden_dim, &dims.decoder_head_dims, rng);
        Self { embed, encoder, phi, sigma, decoder, head }
    }
}

impl DiscriminatorNet {
    pub fn new<T: Real>(dims: &ModelDims, store: &mut ParamStore<T>, rng: &mut Rng) -> Self {
        let h = dims.hidden_dim;
        let p = dims.disc_proj_dim;
        Self {
            obs_encoder: LstmCell::new(store, "obs_encoder", dims.state_dim, h, rng),
            pred_encoder: LstmCell::new(store, "pred_encoder", dims.state_dim, h, rng),
            obs_proj: Linear::new(store, "obs_proj", h, p, true, rng),
            pred_proj: Linear::new(store, "pred_proj", h, p, true, rng),
            fuse: Linear::new(store, "fuse", 2 * p, p, true, rng),
            d_head: Linear::new(store, "d_head", p, 1, true, rng),
        }
    }
}

impl QNet {
    pub fn new<T: Real>(dims: &ModelDims, store: &mut ParamStore<T>, rng: &mut Rng) -> Self {
        Self { head: Linear::new(store, "q_head", dims.disc_proj_dim, dims.code_dim, true, rng) }
    }
}

/// Encoder outputs for a batch of scenes.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// `[h_target | pooled]`, one row per scene.
    pub context: Var,
    /// Attention weights per pair, absent when the batch has no neighbors.
    pub attention: Option<Var>,
    pub pooled: Var,
    /// Encoder hiddens at every observed step, `n_agents` rows each.
    pub hiddens: Vec<Var>,
}

/// Decoder outputs for `rows` samples.
#[derive(Clone, Debug)]
pub struct Decoded {
    pub rows: usize,
    /// Per-step displacements, time-major `(pred_len·rows) × 2`.
    pub displacements: Var,
    /// Positions relative to the last observed point, time-major.
    pub positions: Var,
    /// `[position | velocity]` states, time-major `(pred_len·rows) × 4`.
    pub states: Var,
}

/// Row `t·rows + m` picks `t·base + index[m]`, for time-major stacks.
pub fn time_major_index(steps: usize, base: usize, index: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(steps * index.len());
    for t in 0..steps {
        out.extend(index.iter().map(|&i| t * base + i));
    }
    out
}

impl GeneratorNet {
    pub fn embed_states<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        let e = self.embed.forward(g, p, x);
        g.leaky_relu(e, T::of(LEAKY_SLOPE))
    }

    pub fn encode<T: Real>(&self, g: &mut Graph<T>, p: &Bound, batch: &SceneBatch<T>, dims: &ModelDims) -> Encoded {
        let r = batch.n_agents;
        let x = g.constant(batch.obs.clone());
        let e = self.embed_states(g, p, x);
        let xp = self.encoder.project(g, p, e);
        let hiddens = self.encoder.run(g, p, xp, batch.obs_len, r);
        let h_last = *hiddens.last().expect("obs_len >= 1");
        let h_target = g.gather_rows(h_last, batch.target_rows.clone());

        let (pooled, attention) = if batch.pair_rows.is_empty() {
            (g.constant(Matrix::zeros(batch.n_scenes, dims.pool_dim)), None)
        } else {
            let keys = self.sigma.forward(g, p, h_last);
            let keys = g.gather_rows(keys, batch.pair_rows.clone());
            let feats = g.constant(batch.pair_features.clone());
            let f = self.phi.forward(g, p, feats);
            let f = g.leaky_relu(f, T::of(LEAKY_SLOPE));
            let dot = g.row_dot(f, keys);
            let scale = g.constant(batch.pair_scale.clone());
            let scores = g.mul(dot, scale);
            let a = g.segment_softmax(scores, batch.pair_offsets.clone());
            let pooled = g.segment_weighted_sum(a, keys, batch.pair_offsets.clone());
            (pooled, Some(a))
        };
        let context = g.concat_cols(&[h_target, pooled]);
        Encoded { context, attention, pooled, hiddens }
    }

    /// Decode `rows` samples. `context` has one row per sample; `z` and `c`
    /// likewise; `inv_dt` gives `1/dt` per sample.
    #[allow(clippy::too_many_arguments)]
    pub fn decode<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        context: Var,
        z: Var,
        c: Var,
        inv_dt: &[f64],
        pred_len: usize,
    ) -> Decoded {
        let rows = g.shape(context).0;
        let o = g.concat_cols(&[context, z, c]);
        let xp = self.decoder.project(g, p, o);
        let mut state = None;
        let mut hs = Vec::with_capacity(pred_len);
        for _ in 0..pred_len {
            let (h, cc) = self.decoder.step(g, p, xp, state);
            hs.push(h);
            state = Some((h, cc));
        }
        let stacked = if pred_len == 1 { hs[0] } else { g.concat_rows(&hs) };
        let disp = self.head.forward(g, p, stacked, T::of(LEAKY_SLOPE));

        let mut pos = Vec::with_capacity(pred_len);
        let mut acc: Option<Var> = None;
        for t in 0..pred_len {
            let d = g.slice_rows(disp, t * rows, (t + 1) * rows);
            let next = match acc {
                Some(prev) => g.add(prev, d),
                None => d,
            };
            pos.push(next);
            acc = Some(next);
        }
        let positions = if pred_len == 1 { pos[0] } else { g.concat_rows(&pos) };
        let inv = Matrix::from_fn(pred_len * rows, 2, |r, _| T::of(inv_dt[r % rows]));
        let inv = g.constant(inv);
        let vel = g.mul(disp, inv);
        let states = g.concat_cols(&[positions, vel]);
        Decoded { rows, displacements: disp, positions, states }
    }
}

impl DiscriminatorNet {
    fn encode_final<T: Real>(cell: &LstmCell, g: &mut Graph<T>, p: &Bound, seq: Var, steps: usize) -> Var {
        let rows = g.shape(seq).0 / steps;
        let xp = cell.project(g, p, seq);
        *cell.run(g, p, xp, steps, rows).last().expect("steps >= 1")
    }

    /// Projected observation features, one row per sequence.
    pub fn encode_obs<T: Real>(&self, g: &mut Graph<T>, p: &Bound, obs: Var, obs_len: usize) -> Var {
        let h = Self::encode_final(&self.obs_encoder, g, p, obs, obs_len);
        let y = self.obs_proj.forward(g, p, h);
        g.leaky_relu(y, T::of(LEAKY_SLOPE))
    }

    /// Shared trunk features for (observation feature, future sequence) pairs.
    pub fn trunk<T: Real>(&self, g: &mut Graph<T>, p: &Bound, obs_feat: Var, pred: Var, pred_len: usize) -> Var {
        let h = Self::encode_final(&self.pred_encoder, g, p, pred, pred_len);
        let y = self.pred_proj.forward(g, p, h);
        let y = g.leaky_relu(y, T::of(LEAKY_SLOPE));
        let joint = g.concat_cols(&[obs_feat, y]);
        let f = self.fuse.forward(g, p, joint);
        g.leaky_relu(f, T::of(LEAKY_SLOPE))
    }

    /// Logits of D; the probability is their sigmoid.
    pub fn logits<T: Real>(&self, g: &mut Graph<T>, p: &Bound, trunk: Var) -> Var {
        self.d_head.forward(g, p, trunk)
    }
}

impl QNet {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, trunk: Var) -> Var {
        self.head.forward(g, p, trunk)
    }
}
