//! Earth Mover's Distance between two finite point sets with uniform weights.

use super::assignment::min_cost_assignment;
use crate::error::{Error, Result};

/// EMD with uniform marginals `1/n` and `1/m` for a ground-cost matrix
/// `cost[i][j]` (`n × m`).
///
/// Equal sizes reduce to a perfect matching; otherwise the transport problem
/// is solved as an integer min-cost flow with supplies `m` and demands `n`.
pub fn emd_from_costs(cost: &[Vec<f64>]) -> Result<f64> {
    let n = cost.len();
    if n == 0 || cost[0].is_empty() {
        return Err(Error::Empty("EMD needs two non-empty sets".into()));
    }
    let m = cost[0].len();
    if n == m {
        let (_, total) = min_cost_assignment(cost)?;
        return Ok(total / n as f64);
    }
    if cost.iter().any(|r| r.len() != m) {
        return Err(Error::Validation("cost matrix rows differ in length".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::Validation("ground costs must be finite and non-negative".into()));
    }
    let total = transport(cost, m as i64, n as i64);
    Ok(total / (n * m) as f64)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

/// Min-cost flow from rows (supply `row_supply` each) to columns (demand
/// `col_demand` each), by successive shortest paths with potentials.
fn transport(cost: &[Vec<f64>], row_supply: i64, col_demand: i64) -> f64 {
    let (n, m) = (cost.len(), cost[0].len());
    let v = n + m + 2;
    let (s, t) = (n + m, n + m + 1);
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); v];
    let mut add = |edges: &mut Vec<Edge>, a: usize, b: usize, cap: i64, c: f64| {
        adj[a].push(edges.len());
        edges.push(Edge { to: b, cap, cost: c });
        adj[b].push(edges.len());
        edges.push(Edge { to: a, cap: 0, cost: -c });
    };
    let big = row_supply * n as i64;
    for i in 0..n {
        add(&mut edges, s, i, row_supply, 0.0);
        for j in 0..m {
            add(&mut edges, i, n + j, big, cost[i][j]);
        }
    }
    for j in 0..m {
        add(&mut edges, n + j, t, col_demand, 0.0);
    }

    let mut potential = vec![0.0f64; v];
    let mut remaining = big;
    let mut total = 0.0;
    while remaining > 0 {
        // Dense Dijkstra on reduced costs.
        let mut dist = vec![f64::INFINITY; v];
        let mut prev_edge = vec![usize::MAX; v];
        let mut done = vec![false; v];
        dist[s] = 0.0;
        loop {
            let mut best = usize::MAX;
            for x in 0..v {
                if !done[x] && dist[x].is_finite() && (best == usize::MAX || dist[x] < dist[best]) {
                    best = x;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            for &e in &adj[best] {
                let ed = &edges[e];
                if ed.cap <= 0 || done[ed.to] {
                    continue;
                }
                let rc = (ed.cost + potential[best] - potential[ed.to]).max(0.0);
                let nd = dist[best] + rc;
                if nd < dist[ed.to] {
                    dist[ed.to] = nd;
                    prev_edge[ed.to] = e;
                }
            }
        }
        if !dist[t].is_finite() {
            break;
        }
        for x in 0..v {
            if dist[x].is_finite() {
                potential[x] += dist[x];
            }
        }
        let mut push = remaining;
        let mut x = t;
        while x != s {
            let e = prev_edge[x];
            push = push.min(edges[e].cap);
            x = edges[e ^ 1].to;
        }
        let mut x = t;
        while x != s {
            let e = prev_edge[x];
            edges[e].cap -= push;
            edges[e ^ 1].cap += push;
            total += push as f64 * edges[e].cost;
            x = edges[e ^ 1].to;
        }
        remaining -= push;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unequal_sizes_match_replicated_matching() {
        // 2 vs 3 points on a line: replicate to 6 vs 6 and match exactly.
        let a: [f64; 2] = [0.0, 4.0];
        let b: [f64; 3] = [1.0, 2.0, 7.0];
        let cost: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| (x - y).abs()).collect()).collect();
        let got = emd_from_costs(&cost).unwrap();
        let ra: Vec<f64> = a.iter().flat_map(|&x| [x; 3]).collect();
        let rb: Vec<f64> = b.iter().flat_map(|&y| [y; 2]).collect();
        let rc: Vec<Vec<f64>> = ra.iter().map(|x| rb.iter().map(|y| (x - y).abs()).collect()).collect();
        let want = min_cost_assignment(&rc).unwrap().1 / 6.0;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn singletons_give_the_ground_distance() {
        assert_eq!(emd_from_costs(&[vec![2.5]]).unwrap(), 2.5);
        assert_eq!(emd_from_costs(&[vec![2.0, 4.0]]).unwrap(), 3.0);
        assert!(emd_from_costs(&[]).is_err());
    }
}
