use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DirectedGraph;
use crate::error::{Error, Result};

const MAX_RESTARTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphKind {
    Complete { n: usize },
    Cycle { n: usize },
    Grid2d { rows: usize, cols: usize },
    RandomRegular { n: usize, k: usize },
}

/// Builds a connected graph of the given family.
///
/// Deterministic families orient every edge from the lower to the higher
/// index (the cycle's closing edge runs `n-1 -> 0`). Random regular graphs
/// use the pairing model and a random orientation per edge, both drawn from
/// a ChaCha stream seeded with `seed`.
pub fn generate(kind: GraphKind, seed: u64) -> Result<DirectedGraph> {
    match kind {
        GraphKind::Complete { n } => {
            if n < 2 {
                return Err(Error::InvalidParameter("complete graph needs n >= 2".into()));
            }
            let pairs: Vec<_> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            DirectedGraph::from_index_pairs(n, &pairs)
        }
        GraphKind::Cycle { n } => {
            if n < 3 {
                return Err(Error::InvalidParameter("cycle needs n >= 3".into()));
            }
            let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            DirectedGraph::from_index_pairs(n, &pairs)
        }
        GraphKind::Grid2d { rows, cols } => {
            if rows == 0 || cols == 0 || rows * cols < 2 {
                return Err(Error::InvalidParameter("grid needs at least two vertices".into()));
            }
            let id = |r: usize, c: usize| r * cols + c;
            let mut pairs = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        pairs.push((id(r, c), id(r, c + 1)));
                    }
                    if r + 1 < rows {
                        pairs.push((id(r, c), id(r + 1, c)));
                    }
                }
            }
            DirectedGraph::from_index_pairs(rows * cols, &pairs)
        }
        GraphKind::RandomRegular { n, k } => random_regular(n, k, seed),
    }
}

fn random_regular(n: usize, k: usize, seed: u64) -> Result<DirectedGraph> {
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "random regular graph needs 0 < k < n (k = {k}, n = {n})"
        )));
    }
    if (n * k) % 2 == 1 {
        return Err(Error::InvalidParameter(format!("n*k must be even (n = {n}, k = {k})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESTARTS {
        let Some(pairs) = try_pairing(n, k, &mut rng) else {
            continue;
        };
        let oriented: Vec<(usize, usize)> = pairs
            .into_iter()
            .map(|(u, v)| if rng.gen_bool(0.5) { (u, v) } else { (v, u) })
            .collect();
        match DirectedGraph::from_index_pairs(n, &oriented) {
            Ok(g) => return Ok(g),
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InvalidParameter(format!(
        "no simple connected {k}-regular graph on {n} vertices after {MAX_RESTARTS} attempts"
    )))
}

/// One round of the pairing model. Pairs are drawn from the remaining
/// points; a draw that would create a loop or a repeated pair is redrawn a
/// bounded number of times before the whole round is abandoned.
fn try_pairing(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    points.shuffle(rng);
    let mut adjacent = vec![Vec::<usize>::with_capacity(k); n];
    let mut pairs = Vec::with_capacity(n * k / 2);
    while !points.is_empty() {
        let mut found = false;
        for _ in 0..(4 * points.len()).max(64) {
            let i = rng.gen_range(0..points.len());
            let j = rng.gen_range(0..points.len());
            let (u, v) = (points[i], points[j]);
            if i == j || u == v || adjacent[u].contains(&v) {
                continue;
            }
            let (hi, lo) = if i > j { (i, j) } else { (j, i) };
            points.swap_remove(hi);
            points.swap_remove(lo);
            adjacent[u].push(v);
            adjacent[v].push(u);
            pairs.push((u.min(v), u.max(v)));
            found = true;
            break;
        }
        if !found {
            return None;
        }
    }
    Some(pairs)
}
