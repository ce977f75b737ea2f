use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::adjacency_lambda;
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, SubgraphSpec};
use crate::laplacian::WeightedWalk;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterlacingReport {
    /// Second largest eigenvalue in magnitude of the subgraph walk.
    pub lambda_prime: f64,
    /// `w+ k+ / (w- k-) - 1 + w+ mu / (w- k-)` with degrees and `mu` of `G`.
    pub bound: f64,
    /// The same expression with `k-` replaced by the minimum degree inside
    /// the subgraph.
    pub subgraph_degree_bound: f64,
    pub mu: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub subgraph_k_min: usize,
    pub holds: bool,
    pub subgraph_degree_holds: bool,
}

/// Compares the walk eigenvalue of a weighted subgraph with the
/// degree/adjacency-spectrum bound.
///
/// `weights` is aligned with `sub.edges()` and must lie in
/// `[w_minus, w_plus]`. The bound built from the minimum degree of `G`
/// can fail on proper subgraphs whose own minimum degree is smaller (a
/// tree inside an expander has a bipartite walk with eigenvalue `-1`); the
/// report therefore also carries the variant that uses the subgraph's
/// minimum degree.
pub fn interlacing_bound(
    g: &DirectedGraph,
    sub: &SubgraphSpec,
    weights: &DVector<f64>,
    w_minus: f64,
    w_plus: f64,
) -> Result<InterlacingReport> {
    if !(w_minus > 0.0 && w_minus <= w_plus && w_plus.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "weight range must satisfy 0 < w- <= w+ (got [{w_minus}, {w_plus}])"
        )));
    }
    if weights.len() != sub.edges().len() {
        return Err(Error::Dimension {
            expected: sub.edges().len(),
            got: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|&&w| !(w_minus..=w_plus).contains(&w)) {
        return Err(Error::WeightOutOfRange {
            weight: w,
            lo: w_minus,
            hi: w_plus,
        });
    }
    let local: std::collections::HashMap<usize, usize> =
        sub.vertices().iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let m = sub.vertices().len();
    let mut w = DMatrix::zeros(m, m);
    let mut inner_degree = vec![0usize; m];
    for (&j, &wj) in sub.edges().iter().zip(weights.iter()) {
        let e = g.edge(j);
        let (a, b) = (local[&e.tail], local[&e.head]);
        w[(a, b)] = wj;
        w[(b, a)] = wj;
        inner_degree[a] += 1;
        inner_degree[b] += 1;
    }
    let lambda_prime = WeightedWalk::from_weight_matrix(w)?.spectrum().lambda();
    let mu = adjacency_lambda(g);
    let (k_min, k_max) = g.degree_range();
    let subgraph_k_min = inner_degree.iter().copied().min().unwrap_or(0);
    let ratio = w_plus / w_minus;
    let formula = |k_lo: usize| ratio * k_max as f64 / k_lo as f64 - 1.0 + ratio * mu / k_lo as f64;
    let bound = formula(k_min);
    let subgraph_degree_bound = formula(subgraph_k_min);
    Ok(InterlacingReport {
        lambda_prime,
        bound,
        subgraph_degree_bound,
        mu,
        k_min,
        k_max,
        subgraph_k_min,
        holds: lambda_prime <= bound + 1e-12,
        subgraph_degree_holds: lambda_prime <= subgraph_degree_bound + 1e-12,
    })
}
