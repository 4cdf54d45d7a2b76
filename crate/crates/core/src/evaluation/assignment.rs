//! Minimum-cost assignment (Hungarian method with potentials, O(n²m)).

use crate::error::{Error, Result};

/// Solve `min Σ cost[i][col[i]]` over injective `col`, for an `n × m` matrix
/// with `n <= m`. Returns the column of each row and the total cost.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let m = cost[0].len();
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::Validation("cost matrix rows differ in length".into()));
    }
    if n > m {
        return Err(Error::Validation(format!("assignment needs rows <= columns, got {n}x{m}")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Validation("cost matrix has non-finite entries".into()));
    }

    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            col[p[j] - 1] = j - 1;
        }
    }
    let total = col.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((col, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_known_instance() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let (col, total) = min_cost_assignment(&c).unwrap();
        assert_eq!(total, 5.0);
        assert_eq!(col, vec![1, 0, 2]);
    }

    #[test]
    fn rectangular_picks_best_columns() {
        let c = vec![vec![9.0, 1.0, 5.0, 7.0], vec![1.0, 9.0, 9.0, 0.5]];
        assert_eq!(min_cost_assignment(&c).unwrap(), (vec![1, 3], 1.5));
        assert!(min_cost_assignment(&[vec![1.0], vec![2.0]]).is_err());
        assert_eq!(min_cost_assignment(&[]).unwrap().1, 0.0);
    }
}
