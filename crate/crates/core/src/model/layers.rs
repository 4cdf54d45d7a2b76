use super::params::{fan_in_uniform, Bound, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Graph, Matrix, Real, Var};

/// `x·W + b` with `W` stored as `in × out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let w = store.add(format!("{name}.w"), fan_in_uniform(input, output, input, rng));
        let b = bias.then(|| store.add(format!("{name}.b"), Matrix::zeros(1, output)));
        Self { w, b, input, output }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.affine(x, p.var(self.w), self.b.map(|b| p.var(b)))
    }
}

/// LSTM cell with gate order `[input, forget, candidate, output]`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let wx = store.add(format!("{name}.wx"), fan_in_uniform(input, 4 * hidden, input, rng));
        let wh = store.add(format!("{name}.wh"), fan_in_uniform(hidden, 4 * hidden, hidden, rng));
        let mut bias = Matrix::zeros(1, 4 * hidden);
        for k in hidden..2 * hidden {
            bias.data_mut()[k] = T::one();
        }
        let b = store.add(format!("{name}.b"), bias);
        Self { wx, wh, b, input, hidden }
    }

    /// Input contribution to the gates, `x·Wx + b`, for any number of rows.
    pub fn project<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Var {
        g.affine(x, p.var(self.wx), Some(p.var(self.b)))
    }

    /// One recurrence step from projected inputs. `state = None` is the zero state.
    pub fn step<T: Real>(&self, g: &mut Graph<T>, p: &Bound, xproj: Var, state: Option<(Var, Var)>) -> (Var, Var) {
        let hsz = self.hidden;
        let gates = match state {
            Some((h, _)) => {
                let hh = g.matmul(h, p.var(self.wh));
                g.add(xproj, hh)
            }
            None => xproj,
        };
        let hc = g.lstm_cell(gates, state.map(|(_, c)| c));
        let h = g.slice_cols(hc, 0, hsz);
        let c = g.slice_cols(hc, hsz, 2 * hsz);
        (h, c)
    }

    /// Run over a time-major stack of `steps` blocks of `rows` rows each,
    /// returning every hidden state.
    pub fn run<T: Real>(&self, g: &mut Graph<T>, p: &Bound, xproj: Var, steps: usize, rows: usize) -> Vec<Var> {
        let mut state = None;
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = if steps == 1 { xproj } else { g.slice_rows(xproj, t * rows, (t + 1) * rows) };
            let (h, c) = self.step(g, p, xt, state);
            out.push(h);
            state = Some((h, c));
        }
        out
    }
}

/// Stack of linear layers with LeakyReLU between them and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, input: usize, widths: &[usize], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = input;
        for (k, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}.{k}"), prev, w, true, rng));
            prev = w;
        }
        Self { layers }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var, slope: T) -> Var {
        let mut h = x;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, p, h);
            if k + 1 < self.layers.len() {
                h = g.leaky_relu(h, slope);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sigmoid;

    #[test]
    fn lstm_step_matches_hand_gate_arithmetic() {
        // Two hidden units, one input, two steps from the zero state.
        let mut store = ParamStore::<f64>::default();
        let mut rng = crate::rng::stream(0, "t");
        let cell = LstmCell::new(&mut store, "c", 1, 2, &mut rng);
        let wx = vec![0.5, -0.25, 0.1, 0.2, 0.3, -0.4, 0.6, 0.05];
        let wh = vec![
            0.1, 0.2, -0.3, 0.4, 0.05, -0.15, 0.25, 0.35, //
            -0.2, 0.1, 0.3, -0.1, 0.2, 0.15, -0.05, 0.45,
        ];
        let b = vec![0.0, 0.1, 1.0, 1.0, -0.1, 0.2, 0.05, -0.05];
        *store.get_mut(cell.wx) = Matrix::from_vec(1, 8, wx.clone());
        *store.get_mut(cell.wh) = Matrix::from_vec(2, 8, wh.clone());
        *store.get_mut(cell.b) = Matrix::from_vec(1, 8, b.clone());

        let xs = [0.7, -1.3];
        let mut g = Graph::new();
        let p = store.bind(&mut g, false);
        let x = g.constant(Matrix::from_vec(2, 1, xs.to_vec()));
        let xp = cell.project(&mut g, &p, x);
        let hs = cell.run(&mut g, &p, xp, 2, 1);

        let (mut h, mut c) = ([0.0f64; 2], [0.0f64; 2]);
        for (t, &x) in xs.iter().enumerate() {
            let mut z = [0.0; 8];
            for j in 0..8 {
                z[j] = x * wx[j] + b[j] + h[0] * wh[j] + h[1] * wh[8 + j];
            }
            let mut nh = [0.0; 2];
            for u in 0..2 {
                let (i, f, gg, o) = (sigmoid(z[u]), sigmoid(z[2 + u]), z[4 + u].tanh(), sigmoid(z[6 + u]));
                c[u] = f * c[u] + i * gg;
                nh[u] = o * c[u].tanh();
            }
            h = nh;
            let got = g.value(hs[t]);
            for u in 0..2 {
                assert!((got.get(0, u) - h[u]).abs() < 1e-15, "step {t} unit {u}");
            }
        }
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut store = ParamStore::<f32>::default();
        let cell = LstmCell::new(&mut store, "c", 3, 4, &mut crate::rng::stream(1, "t"));
        let b = store.get(cell.b);
        assert_eq!(&b.data()[..4], &[0.0; 4]);
        assert_eq!(&b.data()[4..8], &[1.0; 4]);
        assert_eq!(&b.data()[8..], &[0.0; 8]);
    }

    #[test]
    fn fan_in_bounds_hold() {
        let mut store = ParamStore::<f64>::default();
        let lin = Linear::new(&mut store, "l", 16, 8, true, &mut crate::rng::stream(2, "t"));
        assert!(store.get(lin.w).data().iter().all(|v| v.abs() <= 0.25));
        assert!(store.get(lin.b.unwrap()).data().iter().all(|&v| v == 0.0));
    }
}
