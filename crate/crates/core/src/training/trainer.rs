use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde_json::json;

use super::log::{LogRecord, TrainLog};
use super::losses::{bce_ones, bce_zeros, mean_over_steps, mean_probability, mse, row_sq_error};
use super::optim::{clip_global_norm, Optimizer, OptimizerKind};
use super::{Regime, TrainConfig, UnrollMode};
use crate::datasets::Scene;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::kv::KvConfig;
use crate::model::{
    draw_latent, fit_scaler, time_major_index, Bound, Checkpoint, Model, ModelDims, ParamStore, PreparedScene,
    SceneBatch,
};
use crate::rng::{self, Rng};
use crate::tensor::{Graph, Matrix, Real, Var};

type Grads<T> = Vec<Option<Matrix<T>>>;

/// Losses and diagnostics of one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub d_loss: f64,
    pub g_loss: f64,
    pub info_loss: f64,
    pub d_real: f64,
    pub d_fake: f64,
    pub grad_norm_d: f64,
    pub grad_norm_g: f64,
    pub clipped_d: bool,
    pub clipped_g: bool,
}

/// A mini-batch together with its latent draws, `copies·B` rows, copy-major.
#[derive(Clone, Debug)]
pub struct StepInputs<T> {
    pub batch: SceneBatch<T>,
    pub z: Matrix<T>,
    pub c: Matrix<T>,
    pub copies: usize,
}

impl<T: Real> StepInputs<T> {
    fn b(&self) -> usize {
        self.batch.n_scenes
    }

    fn real_future(&self) -> &Matrix<T> {
        self.batch.future.as_ref().expect("training scenes carry futures")
    }

    fn first_copy_codes(&self) -> Matrix<T> {
        Matrix::from_fn(self.b(), self.c.cols(), |r, k| self.c.get(r, k))
    }
}

/// Unapplied gradients of one iteration, one slot per parameter tensor.
#[derive(Clone, Debug)]
pub struct StepGradients<T> {
    pub generator: Vec<Option<Matrix<T>>>,
    pub discriminator: Vec<Option<Matrix<T>>>,
    /// Present in the info regimes only.
    pub q: Option<Vec<Option<Matrix<T>>>>,
}

struct GenOut {
    /// Copy-0 states, time-major `(pred_len·B) × 4`.
    fake: Var,
    /// All copies' positions, time-major `(pred_len·copies·B) × 2`.
    positions: Var,
}

struct DiscOut {
    real_logits: Var,
    fake_logits: Var,
    fake_trunk: Var,
}

struct GenObjective<T> {
    adv: f64,
    extra: f64,
    info: f64,
    grads_g: Grads<T>,
    grads_d: Option<Grads<T>>,
}

fn grads_of<T: Real>(grads: &mut crate::tensor::Gradients<T>, bound: &Bound) -> Grads<T> {
    bound.vars().iter().map(|&v| grads.take(v)).collect()
}

fn sgd_in_place<T: Real>(params: &mut ParamStore<T>, grads: &Grads<T>, lr: f64) {
    let lr = T::of(lr);
    for (p, g) in params.tensors_mut().iter_mut().zip(grads) {
        if let Some(g) = g {
            for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                *pv = *pv - lr * gv;
            }
        }
    }
}

fn norm_of<T: Real>(params: &ParamStore<T>) -> f64 {
    params.tensors().iter().map(|t| t.sq_norm().as_f64()).sum::<f64>().sqrt()
}

fn grads_norm<T: Real>(g: &Grads<T>) -> f64 {
    g.iter().flatten().map(|m| m.sq_norm().as_f64()).sum::<f64>().sqrt()
}

/// `params + s·dir`, with missing directions treated as zero.
fn offset<T: Real>(params: &ParamStore<T>, dir: &Grads<T>, s: f64) -> ParamStore<T> {
    let mut out = params.clone();
    let s = T::of(s);
    for (p, d) in out.tensors_mut().iter_mut().zip(dir) {
        if let Some(d) = d {
            for (pv, &dv) in p.data_mut().iter_mut().zip(d.data()) {
                *pv = *pv + s * dv;
            }
        }
    }
    out
}

/// `acc += s·(a - b)` elementwise, treating `None` as zero.
fn accumulate_difference<T: Real>(acc: &mut Grads<T>, a: &Grads<T>, b: &Grads<T>, s: f64) {
    let s = T::of(s);
    for ((slot, a), b) in acc.iter_mut().zip(a).zip(b) {
        let diff = match (a, b) {
            (Some(a), Some(b)) => a.zip_map(b, |x, y| x - y),
            (Some(a), None) => a.clone(),
            (None, Some(b)) => b.map(|y| -y),
            (None, None) => continue,
        };
        let diff = diff.map(|x| x * s);
        match slot {
            Some(m) => m.add_assign(&diff),
            None => *slot = Some(diff),
        }
    }
}

fn non_finite(what: &str, last: &Option<PathBuf>) -> Error {
    Error::NonFinite { context: what.into(), last_checkpoint: last.clone() }
}

/// Single-writer training state: parameters, optimizer moments, sampler and
/// RNG positions.
#[derive(Debug)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub config: TrainConfig,
    pub iteration: u64,
    pub log: TrainLog,
    scenes: Vec<PreparedScene>,
    opt_g: Optimizer<T>,
    opt_d: Optimizer<T>,
    opt_q: Optimizer<T>,
    shuffle_rng: Rng,
    latent_rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    last_checkpoint: Option<PathBuf>,
    started: Instant,
}

fn prepare(scenes: &[Scene]) -> Result<Vec<PreparedScene>> {
    if scenes.is_empty() {
        return Err(Error::Empty("training set has no scenes".into()));
    }
    scenes
        .iter()
        .map(|s| {
            if s.future.is_none() {
                return Err(Error::Validation(format!(
                    "training scene from `{}` at frame {} has no ground-truth future",
                    s.source, s.start_frame
                )));
            }
            PreparedScene::new(s)
        })
        .collect()
}

impl<T: Real> Trainer<T> {
    /// Fresh model and optimizers. The feature scaler is fitted on `scenes`.
    pub fn new(scenes: &[Scene], dims: ModelDims, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let prepared = prepare(scenes)?;
        let scaler = fit_scaler(&prepared);
        let model = Model::init(dims, scaler, config.seed)?;
        Self::assemble(model, prepared, config)
    }

    /// Start from an existing model (for example a shrunken test model).
    pub fn with_model(scenes: &[Scene], model: Model<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Self::assemble(model, prepare(scenes)?, config)
    }

    fn assemble(mut model: Model<T>, scenes: Vec<PreparedScene>, config: TrainConfig) -> Result<Self> {
        let p = &model.params;
        let kind = config.optimizer;
        let opt_g = Optimizer::new(kind, config.lr_generator, config.momentum, &p.generator);
        let opt_d = Optimizer::new(kind, config.lr_discriminator, config.momentum, &p.discriminator);
        let opt_q = Optimizer::new(kind, config.lr_discriminator, config.momentum, &p.q);
        let mut shuffle_rng = rng::stream(config.seed, "shuffle");
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        order.shuffle(&mut shuffle_rng);
        model.params.version = format!("{}@0", &config.hash()[..12]);
        Ok(Self {
            model,
            iteration: 0,
            log: TrainLog::default(),
            scenes,
            opt_g,
            opt_d,
            opt_q,
            latent_rng: rng::stream(config.seed, "latent"),
            shuffle_rng,
            order,
            cursor: 0,
            epoch: 0,
            last_checkpoint: None,
            started: Instant::now(),
            config,
        })
    }

    /// Continue from a checkpoint written by [`Trainer::checkpoint`]. The
    /// configuration must hash identically apart from the iteration budget
    /// and output cadence.
    pub fn resume(scenes: &[Scene], ck: &Checkpoint<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let meta = &ck.meta;
        let stored = meta.get("config_hash").and_then(|v| v.as_str()).unwrap_or_default();
        if stored != config.hash() {
            return Err(Error::Config("checkpoint was trained with a different configuration".into()));
        }
        let prepared = prepare(scenes)?;
        let n_scenes = meta.get("n_scenes").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        if n_scenes != prepared.len() {
            return Err(Error::Config(format!(
                "checkpoint was trained on {n_scenes} scenes, resume got {}",
                prepared.len()
            )));
        }
        let model = Model::from_checkpoint(ck)?;
        let mut t = Self::assemble(model, prepared, config)?;
        let bad = |what: &str| Error::Checkpoint(format!("training state lacks `{what}`"));
        let int = |key: &str| meta.get(key).and_then(|v| v.as_u64()).ok_or_else(|| bad(key));
        let word = |key: &str| -> Result<u128> {
            meta.get("rng")
                .and_then(|r| r.get(key))
                .and_then(|v| v.as_str())
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(key))
        };
        t.iteration = int("iteration")?;
        t.cursor = int("cursor")? as usize;
        t.epoch = int("epoch")?;
        t.order = meta
            .get("order")
            .and_then(|v| v.as_array())
            .ok_or_else(|| bad("order"))?
            .iter()
            .map(|v| v.as_u64().map(|x| x as usize).filter(|&x| x < n_scenes))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("order"))?;
        if t.order.len() != n_scenes || t.cursor > n_scenes {
            return Err(bad("order"));
        }
        t.shuffle_rng.set_word_pos(word("shuffle")?);
        t.latent_rng.set_word_pos(word("latent")?);
        for (name, opt) in [("g", &mut t.opt_g), ("d", &mut t.opt_d), ("q", &mut t.opt_q)] {
            let m = ck.section(&format!("opt.{name}.m")).ok_or_else(|| bad("optimizer state"))?;
            let v = ck.section(&format!("opt.{name}.v")).ok_or_else(|| bad("optimizer state"))?;
            if m.len() != opt.m.len() || v.len() != opt.v.len() {
                return Err(bad("optimizer state"));
            }
            opt.m = m.clone();
            opt.v = v.clone();
            opt.steps = meta.get("opt_steps").and_then(|s| s.get(name)).and_then(|v| v.as_u64()).unwrap_or(0);
        }
        t.model.params.version = format!("{}@{}", &t.config.hash()[..12], t.iteration);
        Ok(t)
    }

    pub fn scenes(&self) -> &[PreparedScene] {
        &self.scenes
    }

    pub fn set_last_checkpoint(&mut self, path: Option<PathBuf>) {
        self.last_checkpoint = path;
    }

    fn next_indices(&mut self, b: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(b);
        while out.len() < b {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.shuffle_rng);
                self.cursor = 0;
                self.epoch += 1;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// Draw the next mini-batch and its latents.
    pub fn next_inputs(&mut self) -> Result<StepInputs<T>> {
        let idx = self.next_indices(self.config.batch_size);
        self.inputs_for(&idx)
    }

    /// Inputs for chosen scenes, with latents from the trainer's latent stream.
    pub fn inputs_for(&mut self, idx: &[usize]) -> Result<StepInputs<T>> {
        let refs: Vec<&PreparedScene> = idx.iter().map(|&i| &self.scenes[i]).collect();
        let batch = self.model.batch(&refs)?;
        let copies = self.config.copies();
        let (z, c) = draw_latent(&mut self.latent_rng, copies * batch.n_scenes, self.model.dims());
        Ok(StepInputs { batch, z, c, copies })
    }

    fn generate(&self, g: &mut Graph<T>, p: &Bound, inputs: &StepInputs<T>) -> GenOut {
        let net = &self.model.nets.generator;
        let dims = self.model.dims();
        let b = inputs.b();
        let rows = inputs.copies * b;
        let enc = net.encode(g, p, &inputs.batch, dims);
        let ctx = if inputs.copies == 1 { enc.context } else { g.gather_rows(enc.context, (0..rows).map(|r| r % b).collect()) };
        let z = g.constant(inputs.z.clone());
        let c = g.constant(inputs.c.clone());
        let inv_dt: Vec<f64> = (0..rows).map(|r| inputs.batch.inv_dt[r % b]).collect();
        let dec = net.decode(g, p, ctx, z, c, &inv_dt, dims.pred_len);
        let fake = if inputs.copies == 1 {
            dec.states
        } else {
            g.gather_rows(dec.states, time_major_index(dims.pred_len, rows, &(0..b).collect::<Vec<_>>()))
        };
        GenOut { fake, positions: dec.positions }
    }

    fn discriminate(&self, g: &mut Graph<T>, p: &Bound, inputs: &StepInputs<T>, fake: Var) -> DiscOut {
        let net = &self.model.nets.discriminator;
        let dims = self.model.dims();
        let b = inputs.b();
        let obs = g.constant(inputs.batch.target_obs.clone());
        let of = net.encode_obs(g, p, obs, dims.obs_len);
        let of2 = g.gather_rows(of, (0..2 * b).map(|r| r % b).collect());
        let real = g.constant(inputs.real_future().clone());
        let mut blocks = Vec::with_capacity(2 * dims.pred_len);
        for t in 0..dims.pred_len {
            blocks.push(g.slice_rows(real, t * b, (t + 1) * b));
            blocks.push(g.slice_rows(fake, t * b, (t + 1) * b));
        }
        let pred = g.concat_rows(&blocks);
        let trunk = net.trunk(g, p, of2, pred, dims.pred_len);
        let logits = net.logits(g, p, trunk);
        DiscOut {
            real_logits: g.slice_rows(logits, 0, b),
            fake_logits: g.slice_rows(logits, b, 2 * b),
            fake_trunk: g.slice_rows(trunk, b, 2 * b),
        }
    }

    /// Discriminator loss on a fixed fake batch. Returns
    /// `(loss, D(real), D(fake), grads_D, Some((info, grads_Q)))`.
    #[allow(clippy::type_complexity)]
    fn disc_step_grads(
        &self,
        d: &ParamStore<T>,
        inputs: &StepInputs<T>,
        fake: &Matrix<T>,
        with_q: bool,
    ) -> (f64, f64, f64, Grads<T>, Option<(f64, Grads<T>)>) {
        let mut g = Graph::new();
        let pd = d.bind(&mut g, true);
        let fv = g.constant(fake.clone());
        let out = self.discriminate(&mut g, &pd, inputs, fv);
        let lr = bce_ones(&mut g, out.real_logits);
        let lf = bce_zeros(&mut g, out.fake_logits);
        let loss = g.add(lr, lf);
        let d_loss = g.scalar(loss).as_f64();
        let d_real = mean_probability(g.value(out.real_logits));
        let d_fake = mean_probability(g.value(out.fake_logits));
        let (total, q) = if with_q {
            // Q reads a detached copy of the trunk, so the info term cannot reach θ_D.
            let trunk = g.constant(g.value(out.fake_trunk).clone());
            let pq = self.model.params.q.bind(&mut g, true);
            let c_hat = self.model.nets.q.forward(&mut g, &pq, trunk);
            let c = g.constant(inputs.first_copy_codes());
            let li = mse(&mut g, c_hat, c, self.config.info_lambda);
            (g.add(loss, li), Some((li, pq)))
        } else {
            (loss, None)
        };
        let mut grads = g.backward(total);
        let gd = grads_of(&mut grads, &pd);
        let q = q.map(|(li, pq)| (g.scalar(li).as_f64(), grads_of(&mut grads, &pq)));
        (d_loss, d_real, d_fake, gd, q)
    }

    /// Generator objective against discriminator `d`, with gradients for
    /// θ_G and optionally θ_D.
    fn gen_objective(
        &self,
        gp: &ParamStore<T>,
        d: &ParamStore<T>,
        inputs: &StepInputs<T>,
        wrt_d: bool,
    ) -> GenObjective<T> {
        let cfg = &self.config;
        let dims = self.model.dims();
        let b = inputs.b();
        let mut g = Graph::new();
        let pg = gp.bind(&mut g, true);
        let out = self.generate(&mut g, &pg, inputs);
        let pd = d.bind(&mut g, wrt_d);
        let disc = self.discriminate(&mut g, &pd, inputs, out.fake);
        let adv = bce_ones(&mut g, disc.fake_logits);
        let mut total = adv;

        let mut info = None;
        if cfg.regime.uses_info() && cfg.info_lambda > 0.0 {
            let pq = self.model.params.q.bind(&mut g, false);
            let c_hat = self.model.nets.q.forward(&mut g, &pq, disc.fake_trunk);
            let c = g.constant(inputs.first_copy_codes());
            let li = mse(&mut g, c_hat, c, cfg.info_lambda);
            total = g.add(total, li);
            info = Some(li);
        }

        let gt = inputs.batch.future_positions().expect("training scenes carry futures");
        let mut extra = None;
        match cfg.regime {
            Regime::L2 if cfg.l2_weight > 0.0 => {
                let pos = g.slice_cols(out.fake, 0, 2);
                let gt = g.constant(gt);
                let sq = row_sq_error(&mut g, pos, gt);
                let m = g.mean(sq);
                extra = Some(g.scale(m, T::of(cfg.l2_weight)));
            }
            Regime::Variety if cfg.variety_weight > 0.0 => {
                let rows = inputs.copies * b;
                let tiled = Matrix::from_fn(dims.pred_len * rows, 2, |r, k| {
                    let (t, m) = (r / rows, r % rows);
                    gt.get(t * b + m % b, k)
                });
                let gt = g.constant(tiled);
                let sq = row_sq_error(&mut g, out.positions, gt);
                let per = mean_over_steps(&mut g, sq, dims.pred_len, rows);
                let vals = g.value(per).clone();
                let best: Vec<usize> = (0..b)
                    .map(|s| {
                        (0..inputs.copies)
                            .map(|v| v * b + s)
                            .min_by(|&x, &y| vals.get(x, 0).partial_cmp(&vals.get(y, 0)).expect("finite"))
                            .expect("copies >= 1")
                    })
                    .collect();
                let sel = g.gather_rows(per, best);
                let m = g.mean(sel);
                extra = Some(g.scale(m, T::of(cfg.variety_weight)));
            }
            _ => {}
        }
        if let Some(e) = extra {
            total = g.add(total, e);
        }

        let mut grads = g.backward(total);
        GenObjective {
            adv: g.scalar(adv).as_f64(),
            extra: extra.map_or(0.0, |e| g.scalar(e).as_f64()),
            info: info.map_or(0.0, |i| g.scalar(i).as_f64()),
            grads_g: grads_of(&mut grads, &pg),
            grads_d: wrt_d.then(|| grads_of(&mut grads, &pd)),
        }
    }

    /// Gradients of the discriminator loss w.r.t. θ_D and θ_G through the
    /// generated samples (no info term).
    fn disc_full_grads(&self, gp: &ParamStore<T>, d: &ParamStore<T>, inputs: &StepInputs<T>) -> (Grads<T>, Grads<T>) {
        let mut g = Graph::new();
        let pg = gp.bind(&mut g, true);
        let out = self.generate(&mut g, &pg, inputs);
        let pd = d.bind(&mut g, true);
        let disc = self.discriminate(&mut g, &pd, inputs, out.fake);
        let lr = bce_ones(&mut g, disc.real_logits);
        let lf = bce_zeros(&mut g, disc.fake_logits);
        let loss = g.add(lr, lf);
        let mut grads = g.backward(loss);
        (grads_of(&mut grads, &pd), grads_of(&mut grads, &pg))
    }

    fn fake_value(&self, gp: &ParamStore<T>, inputs: &StepInputs<T>) -> Matrix<T> {
        let mut g = Graph::new();
        let pg = gp.bind(&mut g, false);
        let out = self.generate(&mut g, &pg, inputs);
        g.value(out.fake).clone()
    }

    /// Discriminator parameters the generator is trained against, advanced
    /// by the configured number of inner steps from the live ones. Full mode
    /// also returns every intermediate iterate.
    fn unrolled_discriminator(&self, inputs: &StepInputs<T>, fake: &Matrix<T>) -> (ParamStore<T>, Vec<ParamStore<T>>) {
        let k = self.config.effective_unroll_steps();
        let mut d = self.model.params.discriminator.clone();
        let mut iterates = Vec::new();
        match self.config.unroll_mode {
            UnrollMode::FirstOrder => {
                let mut opt = self.opt_d.clone();
                for _ in 0..k {
                    let (_, _, _, mut gd, _) = self.disc_step_grads(&d, inputs, fake, false);
                    clip_global_norm(&mut gd, self.config.clip_norm);
                    opt.update(&mut d, &gd);
                }
            }
            UnrollMode::Full => {
                for _ in 0..k {
                    let (_, _, _, gd, _) = self.disc_step_grads(&d, inputs, fake, false);
                    iterates.push(d.clone());
                    sgd_in_place(&mut d, &gd, self.config.lr_discriminator);
                }
            }
        }
        (d, iterates)
    }

    /// Generator gradient for the configured regime, evaluated against the
    /// current live discriminator. Returns the objective parts and the
    /// unclipped θ_G gradient.
    pub fn generator_gradient(&self, inputs: &StepInputs<T>) -> (f64, f64, f64, Grads<T>) {
        let unrolled = self.config.regime.is_unrolled() && self.config.effective_unroll_steps() > 0;
        if !unrolled {
            let o = self.gen_objective(&self.model.params.generator, &self.model.params.discriminator, inputs, false);
            return (o.adv, o.extra, o.info, o.grads_g);
        }
        let fake = self.fake_value(&self.model.params.generator, inputs);
        let (d_k, iterates) = self.unrolled_discriminator(inputs, &fake);
        if self.config.unroll_mode == UnrollMode::FirstOrder {
            let o = self.gen_objective(&self.model.params.generator, &d_k, inputs, false);
            return (o.adv, o.extra, o.info, o.grads_g);
        }

        // Reverse pass through the inner SGD steps. Hessian-vector and mixed
        // second-derivative products come from central differences of
        // full-graph gradients along the adjoint direction.
        let gp = &self.model.params.generator;
        let o = self.gen_objective(gp, &d_k, inputs, true);
        let mut grads_g = o.grads_g;
        let mut adj = o.grads_d.expect("requested");
        let eta = self.config.lr_discriminator;
        let cbrt_eps = T::epsilon().as_f64().cbrt();
        for theta in iterates.iter().rev() {
            let an = grads_norm(&adj);
            if an == 0.0 {
                break;
            }
            let h = cbrt_eps * (1.0 + norm_of(theta)) / an;
            let (dp, gp_plus) = self.disc_full_grads(gp, &offset(theta, &adj, h), inputs);
            let (dm, gp_minus) = self.disc_full_grads(gp, &offset(theta, &adj, -h), inputs);
            let s = -eta / (2.0 * h);
            accumulate_difference(&mut grads_g, &gp_plus, &gp_minus, s);
            accumulate_difference(&mut adj, &dp, &dm, s);
        }
        (o.adv, o.extra, o.info, grads_g)
    }

    /// Generator objective value against the discriminator the configured
    /// regime would train against, for gradient checks.
    pub fn generator_objective(&self, generator: &ParamStore<T>, inputs: &StepInputs<T>) -> f64 {
        let d = if self.config.regime.is_unrolled() {
            let fake = self.fake_value(generator, inputs);
            self.unrolled_discriminator(inputs, &fake).0
        } else {
            self.model.params.discriminator.clone()
        };
        let o = self.gen_objective(generator, &d, inputs, false);
        o.adv + o.extra + o.info
    }

    /// Discriminator loss at θ_D and, in the info regimes, the information
    /// term at θ_Q (zero otherwise), against the current generator's fakes.
    /// The info term is what θ_Q descends; it never reaches θ_D. For gradient checks.
    pub fn discriminator_objective(&self, d: &ParamStore<T>, q: &ParamStore<T>, inputs: &StepInputs<T>) -> (f64, f64) {
        let fake = self.fake_value(&self.model.params.generator, inputs);
        let mut g = Graph::new();
        let pd = d.bind(&mut g, false);
        let fv = g.constant(fake);
        let out = self.discriminate(&mut g, &pd, inputs, fv);
        let lr = bce_ones(&mut g, out.real_logits);
        let lf = bce_zeros(&mut g, out.fake_logits);
        let loss = g.add(lr, lf);
        let info = if self.config.regime.uses_info() {
            let trunk = g.constant(g.value(out.fake_trunk).clone());
            let pq = q.bind(&mut g, false);
            let c_hat = self.model.nets.q.forward(&mut g, &pq, trunk);
            let c = g.constant(inputs.first_copy_codes());
            let li = mse(&mut g, c_hat, c, self.config.info_lambda);
            g.scalar(li).as_f64()
        } else {
            0.0
        };
        (g.scalar(loss).as_f64(), info)
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self) -> Result<StepStats> {
        let inputs = self.next_inputs()?;
        self.step_on(&inputs)
    }

    /// Gradients of one iteration at the current parameters, without
    /// applying them: θ_D and θ_Q from the discriminator loss, θ_G from the
    /// generator objective against the live discriminator.
    pub fn gradients(&self, inputs: &StepInputs<T>) -> StepGradients<T> {
        let fake = self.fake_value(&self.model.params.generator, inputs);
        let with_q = self.config.regime.uses_info();
        let (_, _, _, discriminator, q) =
            self.disc_step_grads(&self.model.params.discriminator, inputs, &fake, with_q);
        let (_, _, _, generator) = self.generator_gradient(inputs);
        StepGradients { generator, discriminator, q: q.map(|(_, g)| g) }
    }

    /// Update θ_D (and θ_Q in the info regimes) once on `inputs`, leaving θ_G alone.
    pub fn discriminator_step(&mut self, inputs: &StepInputs<T>) -> Result<StepStats> {
        let clip = self.config.clip_norm;
        let fake = self.fake_value(&self.model.params.generator, inputs);
        if !fake.all_finite() {
            return Err(non_finite("generator output", &self.last_checkpoint));
        }
        let with_q = self.config.regime.uses_info();
        let (d_loss, d_real, d_fake, mut gd, q) =
            self.disc_step_grads(&self.model.params.discriminator, inputs, &fake, with_q);
        if !d_loss.is_finite() {
            return Err(non_finite("discriminator loss", &self.last_checkpoint));
        }
        let (grad_norm_d, clipped_d) = clip_global_norm(&mut gd, clip);
        if !grad_norm_d.is_finite() {
            return Err(non_finite("discriminator gradients", &self.last_checkpoint));
        }
        self.opt_d.update(&mut self.model.params.discriminator, &gd);
        let mut info_loss = 0.0;
        if let Some((li, mut gq)) = q {
            let (n, _) = clip_global_norm(&mut gq, clip);
            if !(li.is_finite() && n.is_finite()) {
                return Err(non_finite("information loss", &self.last_checkpoint));
            }
            self.opt_q.update(&mut self.model.params.q, &gq);
            info_loss = li;
        }
        Ok(StepStats { d_loss, d_real, d_fake, info_loss, grad_norm_d, clipped_d, ..StepStats::default() })
    }

    /// [`Trainer::step`] on explicit inputs. The sampler is not advanced.
    pub fn step_on(&mut self, inputs: &StepInputs<T>) -> Result<StepStats> {
        let mut stats = self.discriminator_step(inputs)?;
        let (adv, extra, info_g, mut gg) = self.generator_gradient(inputs);
        stats.g_loss = adv + extra;
        if !(stats.g_loss.is_finite() && info_g.is_finite()) {
            return Err(non_finite("generator loss", &self.last_checkpoint));
        }
        let (grad_norm_g, clipped_g) = clip_global_norm(&mut gg, self.config.clip_norm);
        if !grad_norm_g.is_finite() {
            return Err(non_finite("generator gradients", &self.last_checkpoint));
        }
        self.opt_g.update(&mut self.model.params.generator, &gg);
        stats.grad_norm_g = grad_norm_g;
        stats.clipped_g = clipped_g;

        self.iteration += 1;
        self.model.params.version = format!("{}@{}", &self.config.hash()[..12], self.iteration);
        if self.iteration % self.config.log_every == 0 || self.iteration == self.config.iterations {
            self.log.push(self.record(&stats));
        }
        Ok(stats)
    }

    fn record(&self, s: &StepStats) -> LogRecord {
        LogRecord {
            iteration: self.iteration,
            d_loss: s.d_loss,
            g_loss: s.g_loss,
            info_loss: s.info_loss,
            d_real: s.d_real,
            d_fake: s.d_fake,
            wall: self.started.elapsed().as_secs_f64(),
            grad_norm_d: s.grad_norm_d,
            grad_norm_g: s.grad_norm_g,
            clipped: u8::from(s.clipped_d) | (u8::from(s.clipped_g) << 1),
        }
    }

    /// Parameters, optimizer moments and sampler state.
    pub fn checkpoint(&self) -> Checkpoint<T> {
        let meta = json!({
            "iteration": self.iteration,
            "config": self.config.to_kv_text(),
            "config_hash": self.config.hash(),
            "n_scenes": self.scenes.len(),
            "order": self.order,
            "cursor": self.cursor,
            "epoch": self.epoch,
            "rng": {
                "shuffle": self.shuffle_rng.get_word_pos().to_string(),
                "latent": self.latent_rng.get_word_pos().to_string(),
            },
            "opt_steps": { "g": self.opt_g.steps, "d": self.opt_d.steps, "q": self.opt_q.steps },
        });
        let mut ck = self.model.to_checkpoint(meta);
        for (name, opt) in [("g", &self.opt_g), ("d", &self.opt_d), ("q", &self.opt_q)] {
            ck.sections.push((format!("opt.{name}.m"), opt.m.clone()));
            ck.sections.push((format!("opt.{name}.v"), opt.v.clone()));
        }
        ck
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        self.opt_g.kind
    }
}

/// Result of [`train`].
#[derive(Debug)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub log: TrainLog,
    /// Final checkpoint path, when an output directory was given.
    pub checkpoint: Option<PathBuf>,
}

/// Output layout of a training run:
/// `model.tsck` (final), `last.tsck` (latest periodic),
/// `snapshots/iter_NNNNNNN.tsck` and `train.log`.
pub fn checkpoint_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    (dir.join("model.tsck"), dir.join("last.tsck"), dir.join("snapshots"), dir.join("train.log"))
}

/// Run `config.iterations` iterations, writing checkpoints and the log into
/// `out_dir` when given. With `resume`, training continues from that
/// checkpoint and the log is truncated to its iteration.
pub fn train<T: Real>(
    scenes: &[Scene],
    dims: ModelDims,
    config: &TrainConfig,
    out_dir: Option<&Path>,
    resume: Option<&Path>,
    mut observer: impl FnMut(&LogRecord),
) -> Result<TrainOutcome<T>> {
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::<T>::load(path)?;
            let mut t = Trainer::resume(scenes, &ck, config.clone())?;
            t.set_last_checkpoint(Some(path.to_path_buf()));
            if let Some(dir) = out_dir {
                let log_path = checkpoint_paths(dir).3;
                if log_path.exists() {
                    let mut log = TrainLog::load(&log_path)?;
                    log.records.retain(|r| r.iteration <= t.iteration);
                    t.log = log;
                }
            }
            t
        }
        None => Trainer::new(scenes, dims, config.clone())?,
    };
    let save = |t: &Trainer<T>, path: &Path| -> Result<()> {
        t.checkpoint().save(path)?;
        if let Some(dir) = out_dir {
            write_atomic(&checkpoint_paths(dir).3, t.log.to_text().as_bytes())?;
        }
        Ok(())
    };
    while trainer.iteration < config.iterations {
        let before = trainer.log.records.len();
        trainer.step()?;
        if trainer.log.records.len() > before {
            observer(trainer.log.records.last().expect("pushed"));
        }
        if let Some(dir) = out_dir {
            let every = config.checkpoint_every;
            if every > 0 && trainer.iteration % every == 0 && trainer.iteration < config.iterations {
                let (_, last, snaps, _) = checkpoint_paths(dir);
                let snap = snaps.join(format!("iter_{:07}.tsck", trainer.iteration));
                save(&trainer, &snap)?;
                save(&trainer, &last)?;
                trainer.set_last_checkpoint(Some(last));
            }
        }
    }
    let checkpoint = match out_dir {
        Some(dir) => {
            let (fin, ..) = checkpoint_paths(dir);
            save(&trainer, &fin)?;
            if config.checkpoint_every > 0 {
                let snap = checkpoint_paths(dir).2.join(format!("iter_{:07}.tsck", trainer.iteration));
                save(&trainer, &snap)?;
            }
            Some(fin)
        }
        None => None,
    };
    Ok(TrainOutcome { model: trainer.model, log: trainer.log, checkpoint })
}
