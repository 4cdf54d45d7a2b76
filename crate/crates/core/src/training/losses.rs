use crate::error::{Error, Result};
use crate::tensor::{Graph, Matrix, Real, Var};

/// `λ · mean((c - ĉ)²)`.
pub fn info_loss(c: &[f64], c_hat: &[f64], lambda: f64) -> Result<f64> {
    if c.len() != c_hat.len() {
        return Err(Error::LengthMismatch { expected: c.len(), got: c_hat.len() });
    }
    if c.is_empty() || lambda == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda * c.iter().zip(c_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / c.len() as f64)
}

/// Mean over steps of the squared Euclidean position error.
pub fn l2_loss(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch { expected: gt.len(), got: pred.len() });
    }
    if gt.is_empty() {
        return Err(Error::Empty("trajectory has no steps".into()));
    }
    let s: f64 = pred.iter().zip(gt).map(|(p, g)| (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2)).sum();
    Ok(s / gt.len() as f64)
}

/// Smallest [`l2_loss`] over the samples, with the index achieving it.
pub fn variety_loss<S: AsRef<[[f64; 2]]>>(samples: &[S], gt: &[[f64; 2]]) -> Result<(f64, usize)> {
    if samples.is_empty() {
        return Err(Error::Empty("variety loss needs at least one sample".into()));
    }
    let mut best = (f64::INFINITY, 0);
    for (k, s) in samples.iter().enumerate() {
        let l = l2_loss(s.as_ref(), gt)?;
        if l < best.0 {
            best = (l, k);
        }
    }
    Ok(best)
}

/// `mean(softplus(-x))`, the cross-entropy of logits against the label 1.
pub fn bce_ones<T: Real>(g: &mut Graph<T>, logits: Var) -> Var {
    let neg = g.scale(logits, -T::one());
    let sp = g.softplus(neg);
    g.mean(sp)
}

/// `mean(softplus(x))`, the cross-entropy of logits against the label 0.
pub fn bce_zeros<T: Real>(g: &mut Graph<T>, logits: Var) -> Var {
    let sp = g.softplus(logits);
    g.mean(sp)
}

/// `λ · mean((a - b)²)` on the tape.
pub fn mse<T: Real>(g: &mut Graph<T>, a: Var, b: Var, lambda: f64) -> Var {
    let d = g.sub(a, b);
    let sq = g.mul(d, d);
    let m = g.mean(sq);
    g.scale(m, T::of(lambda))
}

/// Squared position error per row, `n × 1`.
pub fn row_sq_error<T: Real>(g: &mut Graph<T>, pred: Var, gt: Var) -> Var {
    let d = g.sub(pred, gt);
    let sq = g.mul(d, d);
    g.row_sum(sq)
}

/// Per-sample mean over steps of a time-major `(steps·rows) × 1` column.
pub fn mean_over_steps<T: Real>(g: &mut Graph<T>, col: Var, steps: usize, rows: usize) -> Var {
    let mut acc = g.slice_rows(col, 0, rows);
    for t in 1..steps {
        let s = g.slice_rows(col, t * rows, (t + 1) * rows);
        acc = g.add(acc, s);
    }
    g.scale(acc, T::of(1.0 / steps as f64))
}

/// Mean of sigmoid over a column of logits.
pub fn mean_probability<T: Real>(logits: &Matrix<T>) -> f64 {
    if logits.is_empty() {
        return f64::NAN;
    }
    logits.data().iter().map(|&x| crate::tensor::sigmoid(x.as_f64())).sum::<f64>() / logits.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn info_loss_examples() {
        assert_eq!(info_loss(&[0.3, -0.2], &[0.3, -0.2], 1.0).unwrap(), 0.0);
        assert_eq!(info_loss(&[0.3, -0.2], &[5.0, 5.0], 0.0).unwrap(), 0.0);
        assert_eq!(info_loss(&[0.5, -0.5], &[0.0, 0.0], 1.0).unwrap(), 0.25);
        assert!(info_loss(&[0.5], &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn l2_loss_examples() {
        let gt = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert_eq!(l2_loss(&gt, &gt).unwrap(), 0.0);
        let off: Vec<[f64; 2]> = gt.iter().map(|p| [p[0] + 3.0, p[1] + 4.0]).collect();
        assert_eq!(l2_loss(&off, &gt).unwrap(), 25.0);
        // errors (1, 0) and (0, 2): (1 + 4) / 2
        assert_eq!(l2_loss(&[[1.0, 0.0], [1.0, 3.0]], &[[0.0, 0.0], [1.0, 1.0]]).unwrap(), 2.5);
        assert!(l2_loss(&gt[..2], &gt).is_err());
    }

    #[test]
    fn variety_loss_examples() {
        let gt = [[0.0, 0.0]];
        let s = [vec![[2.0, 0.0]], vec![[0.0, 1.0]], vec![[3.0, 0.0]]];
        assert_eq!(variety_loss(&s, &gt).unwrap(), (1.0, 1));
        assert_eq!(variety_loss(&s[..1], &gt).unwrap().0, l2_loss(&s[0], &gt).unwrap());
        let with_exact = [vec![[9.0, 9.0]], vec![[0.0, 0.0]]];
        assert_eq!(variety_loss(&with_exact, &gt).unwrap().0, 0.0);
        // moving a non-argmin sample leaves the value unchanged
        let moved = [vec![[2.5, 0.0]], vec![[0.0, 1.0]], vec![[3.0, -1.0]]];
        assert_eq!(variety_loss(&moved, &gt).unwrap().0, 1.0);
    }

    #[test]
    fn bce_matches_log_sigmoid() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Matrix::from_vec(2, 1, vec![0.3, -1.7]));
        let l1 = bce_ones(&mut g, x);
        let l0 = bce_zeros(&mut g, x);
        let s = |v: f64| crate::tensor::sigmoid(v);
        let want1 = -(s(0.3).ln() + s(-1.7).ln()) / 2.0;
        let want0 = -((1.0 - s(0.3)).ln() + (1.0 - s(-1.7)).ln()) / 2.0;
        assert!((g.scalar(l1) - want1).abs() < 1e-12);
        assert!((g.scalar(l0) - want0).abs() < 1e-12);
    }
}
