//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use roadcast::graph::{HopMask, RoadGraph};
use roadcast::model::ModelParams;

/// Graph on links `n0..n{len-1}` with `adj[i][j]` meaning `i → j`; the
/// diagonal is ignored.
pub fn graph_from_adjacency(adj: &[Vec<bool>]) -> RoadGraph {
    let links: Vec<String> = (0..adj.len()).map(|i| format!("n{i}")).collect();
    let mut edges = Vec::new();
    for (i, row) in adj.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            if e && i != j {
                edges.push((links[i].clone(), links[j].clone()));
            }
        }
    }
    RoadGraph::build(&links, &edges).unwrap()
}

/// All-pairs shortest walk lengths by Floyd–Warshall.
pub fn floyd(g: &RoadGraph) -> Vec<Vec<Option<usize>>> {
    let n = g.link_count();
    let mut d = vec![vec![None; n]; n];
    for i in 0..n {
        d[i][i] = Some(0);
        for j in 0..n {
            if g.has_edge(i, j) {
                d[i][j] = Some(1);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// `d(i, j) ≤ K` or `i = j`.
pub fn cumulative_oracle(g: &RoadGraph, k: usize) -> Vec<Vec<u8>> {
    floyd(g)
        .into_iter()
        .map(|row| row.into_iter().map(|d| u8::from(d.is_some_and(|d| d <= k))).collect())
        .collect()
}

fn matmul(a: &[Vec<u64>], b: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum::<u64>().min(1))
                .collect()
        })
        .collect()
}

/// `Ci(A^K + I)` from integer matrix powers (clipped each step so counts
/// cannot overflow; clipping keeps the zero pattern).
pub fn exact_oracle(g: &RoadGraph, k: usize) -> Vec<Vec<u8>> {
    let n = g.link_count();
    let a: Vec<Vec<u64>> = g
        .adjacency()
        .iter()
        .map(|r| r.iter().map(|&x| u64::from(x)).collect())
        .collect();
    let mut p: Vec<Vec<u64>> = (0..n).map(|i| (0..n).map(|j| u64::from(i == j)).collect()).collect();
    for _ in 0..k {
        p = matmul(&p, &a);
    }
    (0..n)
        .map(|i| (0..n).map(|j| u8::from(p[i][j] + u64::from(i == j) > 0)).collect())
        .collect()
}

/// Explicit neighbour-set loop for the graph convolution of `link`.
pub fn convolve_loop(params: &ModelParams, mask: &HopMask, v: &[f64], link: usize) -> f64 {
    let mut acc = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        if mask.get(link, j) {
            acc += params.w_gc.get(link, j) * vj;
        }
    }
    acc
}

/// Dense `(W ⊙ M) v` row.
pub fn convolve_dense(params: &ModelParams, mask: &HopMask, v: &[f64], link: usize) -> f64 {
    let m = mask.dense();
    let mut acc = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        acc += params.w_gc.get(link, j) * f64::from(m[link][j]) * vj;
    }
    acc
}
