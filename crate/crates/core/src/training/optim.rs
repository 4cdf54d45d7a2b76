use serde::{Deserialize, Serialize};

use crate::model::ParamStore;
use crate::tensor::{Matrix, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Adaptive moments with bias correction.
    Adam,
    /// Heavy-ball momentum.
    Sgd,
}

/// Optimizer state for one parameter store.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(kind: OptimizerKind, lr: f64, beta1: f64, params: &ParamStore<T>) -> Self {
        let zeros = |s: &ParamStore<T>| {
            let mut out = ParamStore::default();
            for (n, t) in s.iter() {
                out.add(n, Matrix::zeros(t.rows(), t.cols()));
            }
            out
        };
        Self { kind, lr, beta1, beta2: 0.999, eps: 1e-8, steps: 0, m: zeros(params), v: zeros(params) }
    }

    /// Apply one update. Tensors without a gradient are left alone.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &[Option<Matrix<T>>]) {
        assert_eq!(grads.len(), params.len(), "one gradient slot per tensor");
        self.steps += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let lr = T::of(self.lr);
        let eps = T::of(self.eps);
        let bc1 = T::of(1.0 - self.beta1.powi(self.steps.min(i32::MAX as u64) as i32));
        let bc2 = T::of(1.0 - self.beta2.powi(self.steps.min(i32::MAX as u64) as i32));
        let one = T::one();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (k, p) in params.tensors_mut().iter_mut().enumerate() {
            let Some(g) = &grads[k] else { continue };
            match self.kind {
                OptimizerKind::Adam => {
                    let (m, v) = (&mut ms[k], &mut vs[k]);
                    for (((pv, mv), vv), &gv) in
                        p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g.data())
                    {
                        *mv = b1 * *mv + (one - b1) * gv;
                        *vv = b2 * *vv + (one - b2) * gv * gv;
                        *pv = *pv - lr * (*mv / bc1) / ((*vv / bc2).sqrt() + eps);
                    }
                }
                OptimizerKind::Sgd => {
                    let m = &mut ms[k];
                    for ((pv, mv), &gv) in p.data_mut().iter_mut().zip(m.data_mut()).zip(g.data()) {
                        *mv = b1 * *mv + gv;
                        *pv = *pv - lr * *mv;
                    }
                }
            }
        }
    }
}

/// Scale gradients down to `max_norm` if their joint norm exceeds it.
/// Returns the norm before clipping and whether clipping happened.
pub fn clip_global_norm<T: Real>(grads: &mut [Option<Matrix<T>>], max_norm: f64) -> (f64, bool) {
    let norm = grads.iter().flatten().map(|g| g.sq_norm().as_f64()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            g.scale_in_place(s);
        }
        (norm, true)
    } else {
        (norm, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::default();
        s.add("w", Matrix::from_vec(1, 2, vec![v, -v]));
        s
    }

    #[test]
    fn first_adam_step_moves_by_lr_times_sign() {
        let mut p = store(1.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, 0.9, &p);
        opt.update(&mut p, &[Some(Matrix::from_vec(1, 2, vec![3.0, -0.01]))]);
        let d = p.tensors()[0].data();
        assert!((d[0] - 0.9).abs() < 1e-6);
        assert!((d[1] - (-1.0 + 0.1)).abs() < 1e-4);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut p = store(0.0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.5, 0.9, &p);
        let g = Matrix::from_vec(1, 2, vec![1.0, 0.0]);
        opt.update(&mut p, &[Some(g.clone())]);
        opt.update(&mut p, &[Some(g)]);
        // -0.5·1 then -0.5·1.9
        assert!((p.tensors()[0].data()[0] + 1.45).abs() < 1e-12);
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = store(3.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.05, 0.9, &p);
        for _ in 0..2000 {
            let g = p.tensors()[0].map(|x| 2.0 * x);
            opt.update(&mut p, &[Some(g)]);
        }
        assert!(p.tensors()[0].data().iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn clipping_rescales_to_the_limit() {
        let mut g = vec![Some(Matrix::from_vec(1, 2, vec![30.0, 40.0])), None];
        let (n, c) = clip_global_norm(&mut g, 10.0);
        assert_eq!((n, c), (50.0, true));
        assert_eq!(g[0].as_ref().unwrap().data(), &[6.0, 8.0]);
        let (_, c) = clip_global_norm(&mut g, 10.0);
        assert!(!c);
    }
}
