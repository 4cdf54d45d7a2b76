//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its value and
//! the indices of its inputs. [`Graph::backward`] walks the tape in reverse and
//! accumulates adjoints. Nodes created from constants never receive gradients,
//! and neither does anything computed only from constants.

use super::matrix::{Matrix, Real};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, T),
    Softplus(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    RowDot(Var, Var),
    RowSum(Var),
    SegmentSoftmax(Var, Vec<usize>),
    SegmentWeightedSum(Var, Var, Vec<usize>),
    /// Gate pre-activations and optional previous cell; caches the
    /// activated gates and `tanh(c)`.
    Lstm { gates: Var, c_prev: Option<Var>, act: Matrix<T>, tc: Matrix<T> },
    Sum(Var),
    Mean(Var),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Computation tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoints produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(512) }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> T {
        let m = self.value(v);
        debug_assert_eq!(m.len(), 1);
        m.data()[0]
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = Matrix::matmul_t(self.value(a), false, self.value(b), false);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// `a + bias` where `bias` is a single row broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(bias));
        assert_eq!(bv.rows(), 1, "bias must be a row vector");
        assert_eq!(av.cols(), bv.cols(), "bias width mismatch");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        let ng = self.ng(a) || self.ng(bias);
        self.push(out, Op::AddRow(a, bias), ng)
    }

    /// `x·w + b`
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Var {
        let y = self.matmul(x, w);
        match b {
            Some(b) => self.add_row(y, b),
            None => y,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, s), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        T::sigmoid_slice(v.data_mut());
        let ng = self.ng(a);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        T::tanh_slice(v.data_mut());
        let ng = self.ng(a);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let v = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        let ng = self.ng(a);
        self.push(v, Op::LeakyRelu(a, slope), ng)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        let ng = self.ng(a);
        self.push(v, Op::Softplus(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "row mismatch in concat_cols");
            let w = pv.cols();
            for r in 0..rows {
                out.row_mut(r)[off..off + w].copy_from_slice(pv.row(r));
            }
            off += w;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(out, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start <= end && end <= av.cols(), "column slice out of range");
        let mut out = Matrix::zeros(av.rows(), end - start);
        for r in 0..av.rows() {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..end]);
        }
        let ng = self.ng(a);
        self.push(out, Op::SliceCols(a, start), ng)
    }

    /// One LSTM update from gate pre-activations `[i | f | g | o]`
    /// (`rows × 4H`) and the previous cell state (zero when `None`).
    /// The result is `[h | c]`, `rows × 2H`.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Option<Var>) -> Var {
        let gv = self.value(gates);
        let (rows, four_h) = gv.shape();
        assert_eq!(four_h % 4, 0, "gate width must be 4H");
        let h = four_h / 4;
        let mut act = gv.clone();
        for r in 0..rows {
            let row = act.row_mut(r);
            T::sigmoid_slice(&mut row[..2 * h]);
            T::tanh_slice(&mut row[2 * h..3 * h]);
            T::sigmoid_slice(&mut row[3 * h..]);
        }
        let mut c = Matrix::zeros(rows, h);
        for r in 0..rows {
            let a = act.row(r);
            let cp = c_prev.map(|v| self.value(v).row(r));
            let out = c.row_mut(r);
            for k in 0..h {
                let prev = cp.map_or(T::zero(), |p| a[h + k] * p[k]);
                out[k] = prev + a[k] * a[2 * h + k];
            }
        }
        let mut tc = c.clone();
        T::tanh_slice(tc.data_mut());
        let mut out = Matrix::zeros(rows, 2 * h);
        for r in 0..rows {
            let (a, t, cr) = (act.row(r), tc.row(r), c.row(r));
            let o = out.row_mut(r);
            for k in 0..h {
                o[k] = a[3 * h + k] * t[k];
            }
            o[h..].copy_from_slice(cr);
        }
        let ng = self.ng(gates) || c_prev.is_some_and(|v| self.ng(v));
        self.push(out, Op::Lstm { gates, c_prev, act, tc }, ng)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "column mismatch in concat_rows");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let av = self.value(a);
        assert!(start <= end && end <= av.rows(), "row slice out of range");
        let cols = av.cols();
        let out = Matrix::from_vec(end - start, cols, av.data()[start * cols..end * cols].to_vec());
        let ng = self.ng(a);
        self.push(out, Op::SliceRows(a, start), ng)
    }

    /// Row `r` of the output is row `index[r]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Var {
        let av = self.value(a);
        let cols = av.cols();
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in &index {
            data.extend_from_slice(av.row(i));
        }
        let out = Matrix::from_vec(index.len(), cols, data);
        let ng = self.ng(a);
        self.push(out, Op::GatherRows(a, index), ng)
    }

    /// Per-row inner product, `n×1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "row_dot shape mismatch");
        let out = Matrix::from_fn(av.rows(), 1, |r, _| {
            av.row(r).iter().zip(bv.row(r)).fold(T::zero(), |s, (&x, &y)| s + x * y)
        });
        let ng = self.ng(a) || self.ng(b);
        self.push(out, Op::RowDot(a, b), ng)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Matrix::from_fn(av.rows(), 1, |r, _| av.row(r).iter().fold(T::zero(), |s, &x| s + x));
        let ng = self.ng(a);
        self.push(out, Op::RowSum(a), ng)
    }

    /// Softmax of a column vector within each segment `offsets[s]..offsets[s+1]`.
    pub fn segment_softmax(&mut self, scores: Var, offsets: Vec<usize>) -> Var {
        let sv = self.value(scores);
        assert_eq!(sv.cols(), 1, "segment softmax expects a column");
        assert_eq!(offsets.last().copied().unwrap_or(0), sv.rows(), "offsets must cover all rows");
        let mut out = Matrix::zeros(sv.rows(), 1);
        for w in offsets.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if lo == hi {
                continue;
            }
            let seg = &sv.data()[lo..hi];
            let max = seg.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let mut total = T::zero();
            for (k, &x) in seg.iter().enumerate() {
                let e = (x - max).exp();
                out.data_mut()[lo + k] = e;
                total = total + e;
            }
            for o in &mut out.data_mut()[lo..hi] {
                *o = *o / total;
            }
        }
        let ng = self.ng(scores);
        self.push(out, Op::SegmentSoftmax(scores, offsets), ng)
    }

    /// Row `s` of the output is `Σ_{p in segment s} weights[p]·values[p]`; empty segments give zero rows.
    pub fn segment_weighted_sum(&mut self, weights: Var, values: Var, offsets: Vec<usize>) -> Var {
        let (wv, vv) = (self.value(weights), self.value(values));
        assert_eq!(wv.cols(), 1, "weights must be a column");
        assert_eq!(wv.rows(), vv.rows(), "weights and values disagree on length");
        let segs = offsets.len().saturating_sub(1);
        let mut out = Matrix::zeros(segs, vv.cols());
        for s in 0..segs {
            for p in offsets[s]..offsets[s + 1] {
                let w = wv.data()[p];
                let src = vv.row(p);
                for (o, &x) in out.row_mut(s).iter_mut().zip(src) {
                    *o = *o + w * x;
                }
            }
        }
        let ng = self.ng(weights) || self.ng(values);
        self.push(out, Op::SegmentWeightedSum(weights, values, offsets), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = T::of(av.len().max(1) as f64);
        let v = Matrix::scalar(av.sum() / n);
        let ng = self.ng(a);
        self.push(v, Op::Mean(a), ng)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].needs_grad {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Matrix::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.propagate(i, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn acc(&self, grads: &mut [Option<Matrix<T>>], v: Var, m: Matrix<T>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&m),
            slot @ None => *slot = Some(m),
        }
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Matrix<T>>], v: Var) -> &'a mut Matrix<T> {
        let (r, c) = self.shape(v);
        grads[v.0].get_or_insert_with(|| Matrix::zeros(r, c))
    }

    fn propagate(&self, i: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let bv = self.value(*b);
                    let slot = self.slot(grads, *a);
                    Matrix::gemm_into(g, false, bv, true, T::one(), slot);
                }
                if self.ng(*b) {
                    let av = self.value(*a);
                    let slot = self.slot(grads, *b);
                    Matrix::gemm_into(av, true, g, false, T::one(), slot);
                }
            }
            Op::AddRow(a, bias) => {
                if self.ng(*bias) {
                    let mut db = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, &x) in db.data_mut().iter_mut().zip(g.row(r)) {
                            *d = *d + x;
                        }
                    }
                    self.acc(grads, *bias, db);
                }
                self.acc(grads, *a, g.clone());
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                if self.ng(*b) {
                    self.acc(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                }
                if self.ng(*b) {
                    self.acc(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.acc(grads, *a, g.map(|x| x * s));
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, |x, y| x * y * (T::one() - y));
                self.acc(grads, *a, d);
            }
            Op::Tanh(a) => {
                let d = g.zip_map(&node.value, |x, y| x * (T::one() - y * y));
                self.acc(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let d = g.zip_map(self.value(*a), |x, inp| if inp > T::zero() { x } else { x * s });
                self.acc(grads, *a, d);
            }
            Op::Softplus(a) => {
                let d = g.zip_map(self.value(*a), |x, inp| x * sigmoid(inp));
                self.acc(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.ng(p) {
                        let part = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, off + c));
                        self.acc(grads, p, part);
                    }
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                if !self.ng(*a) {
                    return;
                }
                let start = *start;
                let w = g.cols();
                let slot = self.slot(grads, *a);
                for r in 0..g.rows() {
                    for (d, &x) in slot.row_mut(r)[start..start + w].iter_mut().zip(g.row(r)) {
                        *d = *d + x;
                    }
                }
            }
            Op::Lstm { gates, c_prev, act, tc } => {
                let (rows, h) = tc.shape();
                let one = T::one();
                let mut dgates = Matrix::zeros(rows, 4 * h);
                let mut dcp = c_prev.map(|_| Matrix::zeros(rows, h));
                for r in 0..rows {
                    let (gr, a, t) = (g.row(r), act.row(r), tc.row(r));
                    let cp = c_prev.map(|v| self.value(v).row(r));
                    let dg = dgates.row_mut(r);
                    for k in 0..h {
                        let (i, f, gg, o) = (a[k], a[h + k], a[2 * h + k], a[3 * h + k]);
                        let dh = gr[k];
                        let dc = gr[h + k] + dh * o * (one - t[k] * t[k]);
                        dg[k] = dc * gg * i * (one - i);
                        dg[2 * h + k] = dc * i * (one - gg * gg);
                        dg[3 * h + k] = dh * t[k] * o * (one - o);
                        if let Some(p) = cp {
                            dg[h + k] = dc * p[k] * f * (one - f);
                        }
                    }
                    if let Some(d) = dcp.as_mut() {
                        let dr = d.row_mut(r);
                        for k in 0..h {
                            let dh = gr[k];
                            let dc = gr[h + k] + dh * a[3 * h + k] * (one - t[k] * t[k]);
                            dr[k] = dc * a[h + k];
                        }
                    }
                }
                self.acc(grads, *gates, dgates);
                if let (Some(v), Some(d)) = (c_prev, dcp) {
                    self.acc(grads, *v, d);
                }
            }
            Op::ConcatRows(parts) => {
                let cols = g.cols();
                let mut off = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if self.ng(p) {
                        let part = Matrix::from_vec(rows, cols, g.data()[off * cols..(off + rows) * cols].to_vec());
                        self.acc(grads, p, part);
                    }
                    off += rows;
                }
            }
            Op::SliceRows(a, start) => {
                let cols = g.cols();
                let start = *start;
                let slot = self.slot(grads, *a);
                for (d, &x) in slot.data_mut()[start * cols..start * cols + g.len()].iter_mut().zip(g.data()) {
                    *d = *d + x;
                }
            }
            Op::GatherRows(a, index) => {
                let slot = self.slot(grads, *a);
                for (r, &src) in index.iter().enumerate() {
                    for (d, &x) in slot.row_mut(src).iter_mut().zip(g.row(r)) {
                        *d = *d + x;
                    }
                }
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let d = Matrix::from_fn(bv.rows(), bv.cols(), |r, c| g.get(r, 0) * bv.get(r, c));
                    self.acc(grads, *a, d);
                }
                if self.ng(*b) {
                    let d = Matrix::from_fn(av.rows(), av.cols(), |r, c| g.get(r, 0) * av.get(r, c));
                    self.acc(grads, *b, d);
                }
            }
            Op::RowSum(a) => {
                let (r, c) = self.shape(*a);
                let d = Matrix::from_fn(r, c, |i, _| g.get(i, 0));
                self.acc(grads, *a, d);
            }
            Op::SegmentSoftmax(a, offsets) => {
                let y = &node.value;
                let mut d = Matrix::zeros(y.rows(), 1);
                for w in offsets.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let dot = (lo..hi).fold(T::zero(), |s, p| s + g.data()[p] * y.data()[p]);
                    for p in lo..hi {
                        d.data_mut()[p] = y.data()[p] * (g.data()[p] - dot);
                    }
                }
                self.acc(grads, *a, d);
            }
            Op::SegmentWeightedSum(w, v, offsets) => {
                let (wv, vv) = (self.value(*w), self.value(*v));
                if self.ng(*w) {
                    let mut dw = Matrix::zeros(wv.rows(), 1);
                    for s in 0..offsets.len() - 1 {
                        for p in offsets[s]..offsets[s + 1] {
                            dw.data_mut()[p] =
                                g.row(s).iter().zip(vv.row(p)).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                        }
                    }
                    self.acc(grads, *w, dw);
                }
                if self.ng(*v) {
                    let mut dv = Matrix::zeros(vv.rows(), vv.cols());
                    for s in 0..offsets.len() - 1 {
                        for p in offsets[s]..offsets[s + 1] {
                            let wp = wv.data()[p];
                            for (d, &x) in dv.row_mut(p).iter_mut().zip(g.row(s)) {
                                *d = wp * x;
                            }
                        }
                    }
                    self.acc(grads, *v, dv);
                }
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                self.acc(grads, *a, Matrix::filled(r, c, g.data()[0]));
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let n = T::of((r * c).max(1) as f64);
                self.acc(grads, *a, Matrix::filled(r, c, g.data()[0] / n));
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    type Build = dyn Fn(&mut Graph<f64>, &[Var]) -> Var;

    /// Compare tape gradients against central differences for every input.
    fn check(inputs: Vec<Matrix<f64>>, build: &Build) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.param(m.clone())).collect();
        let out = build(&mut g, &vars);
        let grads = g.backward(out);
        let eps = 1e-6;
        for (k, base) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Matrix::zeros(base.rows(), base.cols()));
            for e in 0..base.len() {
                let eval = |delta: f64| {
                    let mut perturbed = inputs.clone();
                    perturbed[k].data_mut()[e] += delta;
                    let mut g = Graph::new();
                    let vs: Vec<Var> = perturbed.into_iter().map(|m| g.param(m)).collect();
                    let o = build(&mut g, &vs);
                    g.scalar(o)
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let a = analytic.data()[e];
                assert!(
                    (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "input {k} elem {e}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    fn m(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Matrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn affine_and_activations() {
        check(vec![m(3, 4, 1), m(4, 5, 2), m(1, 5, 3)], &|g, v| {
            let y = g.affine(v[0], v[1], Some(v[2]));
            let a = g.tanh(y);
            let b = g.sigmoid(y);
            let c = g.leaky_relu(y, 0.1);
            let d = g.softplus(y);
            let ab = g.mul(a, b);
            let cd = g.sub(c, d);
            let s = g.add(ab, cd);
            let s = g.scale(s, 0.7);
            g.mean(s)
        });
    }

    #[test]
    fn concat_slice_gather() {
        check(vec![m(3, 2, 4), m(3, 3, 5), m(2, 5, 6)], &|g, v| {
            let c = g.concat_cols(&[v[0], v[1]]);
            let r = g.concat_rows(&[c, v[2]]);
            let s = g.slice_cols(r, 1, 4);
            let t = g.slice_rows(s, 1, 5);
            let u = g.gather_rows(t, vec![3, 0, 0, 2]);
            let sq = g.mul(u, u);
            let rs = g.row_sum(sq);
            g.sum(rs)
        });
    }

    #[test]
    fn segment_attention_ops() {
        check(vec![m(5, 3, 7), m(5, 3, 8)], &|g, v| {
            let scores = g.row_dot(v[0], v[1]);
            let w = g.segment_softmax(scores, vec![0, 2, 2, 5]);
            let pooled = g.segment_weighted_sum(w, v[1], vec![0, 2, 2, 5]);
            let t = g.tanh(pooled);
            g.sum(t)
        });
    }

    #[test]
    fn fused_lstm_cell() {
        check(vec![m(3, 8, 9), m(3, 2, 10), m(3, 8, 11)], &|g, v| {
            let hc = g.lstm_cell(v[0], Some(v[1]));
            let c = g.slice_cols(hc, 2, 4);
            let next = g.lstm_cell(v[2], Some(c));
            let first = g.lstm_cell(v[2], None);
            let s = g.concat_cols(&[hc, next, first]);
            let t = g.tanh(s);
            let sq = g.mul(t, s);
            g.sum(sq)
        });
    }

    #[test]
    fn fused_lstm_matches_composed_ops() {
        let gates = m(2, 12, 12);
        let c0 = m(2, 3, 13);
        let mut g = Graph::<f64>::new();
        let (gv, cv) = (g.constant(gates), g.constant(c0));
        let hc = g.lstm_cell(gv, Some(cv));
        let sl = |g: &mut Graph<f64>, k: usize| g.slice_cols(gv, 3 * k, 3 * k + 3);
        let (i, f, gg, o) = (sl(&mut g, 0), sl(&mut g, 1), sl(&mut g, 2), sl(&mut g, 3));
        let (i, f, gg, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(gg), g.sigmoid(o));
        let fc = g.mul(f, cv);
        let ig = g.mul(i, gg);
        let c = g.add(fc, ig);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        let want = g.concat_cols(&[h, c]);
        for (a, b) in g.value(hc).data().iter().zip(g.value(want).data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let c = g.constant(Matrix::filled(2, 2, 1.0));
        let p = g.param(Matrix::filled(2, 2, 2.0));
        let y = g.mul(c, p);
        let s = g.sum(y);
        let grads = g.backward(s);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn segment_softmax_of_singleton_is_one() {
        let mut g = Graph::<f64>::new();
        let s = g.constant(Matrix::from_vec(3, 1, vec![0.3, -4.0, 2.0]));
        let w = g.segment_softmax(s, vec![0, 1, 3]);
        let wv = g.value(w).data();
        assert_eq!(wv[0], 1.0);
        assert!((wv[1] + wv[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert!((softplus(800.0f64) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0f64) >= 0.0 && softplus(-800.0f64) < 1e-300);
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
    }
}
