//! Weighted Laplacians, random-walk transition matrices and Green's functions.
//!
//! Edge weights come from the inverse Hessian of the objective. A
//! [`WeightedWalk`] packages the weight matrix with its degrees, Laplacian,
//! transition matrix and stationary law; [`RestrictedLaplacian`] is the
//! Laplacian with one vertex deleted, which governs the walk killed on
//! hitting that vertex.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::objective::ObjectiveBundle;

/// Relative eigenvalue cutoff used to detect the kernel of a symmetric matrix.
pub const KERNEL_CUTOFF: f64 = 1e-12;

/// Relative tail tolerance for the truncated walk series.
pub const SERIES_TOLERANCE: f64 = 1e-12;

const SERIES_MAX_TERMS: usize = 2_000_000;

/// Moore-Penrose pseudoinverse of a symmetric matrix by eigendecomposition.
///
/// Eigenvalues with magnitude below `KERNEL_CUTOFF * max |eigenvalue|` are
/// treated as zero.
pub fn pseudoinverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.amax();
    let cutoff = KERNEL_CUTOFF * max;
    let inv = eig
        .eigenvalues
        .map(|l| if l.abs() > cutoff { 1.0 / l } else { 0.0 });
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&inv) * q.transpose()
}

/// Laplacian `A diag(w) A^T` assembled edge by edge.
pub fn weighted_laplacian(g: &DirectedGraph, w: &DVector<f64>) -> DMatrix<f64> {
    let n = g.n_vertices();
    let mut l = DMatrix::zeros(n, n);
    for (e, &we) in g.edges().iter().zip(w.iter()) {
        l[(e.tail, e.tail)] += we;
        l[(e.head, e.head)] += we;
        l[(e.tail, e.head)] -= we;
        l[(e.head, e.tail)] -= we;
    }
    l
}

/// Solves `L y = r` for a connected Laplacian and balanced `r` by fixing
/// the last potential to zero.
///
/// The solution differs from `L^+ r` by a constant vector, which is
/// invisible to differences and to `A^T`.
#[derive(Debug, Clone)]
pub struct GroundedSolver {
    chol: Cholesky<f64, Dyn>,
    n: usize,
}

impl GroundedSolver {
    pub fn new(l: &DMatrix<f64>) -> Result<Self> {
        let n = l.nrows();
        if n == 0 || l.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: l.ncols(),
            });
        }
        let reduced = l.view((0, 0), (n - 1, n - 1)).into_owned();
        let chol = reduced
            .cholesky()
            .ok_or_else(|| Error::Singular("grounded Laplacian is not positive definite".into()))?;
        Ok(Self { chol, n })
    }

    pub fn solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let head = self.chol.solve(&r.rows(0, self.n - 1).into_owned());
        let mut y = DVector::zeros(self.n);
        y.rows_mut(0, self.n - 1).copy_from(&head);
        y
    }
}

/// Eigenvalues of a walk's transition matrix, sorted in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    fn from_symmetric(m: DMatrix<f64>) -> Self {
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Second largest eigenvalue in magnitude, `max(|l_2|, |l_n|)`.
    pub fn lambda(&self) -> f64 {
        match self.eigenvalues.as_slice() {
            [] | [_] => 0.0,
            [_, second, .., last] => second.abs().max(last.abs()),
            [_, second] => second.abs(),
        }
    }
}

/// A reversible random walk on a weighted undirected graph.
#[derive(Debug, Clone)]
pub struct WeightedWalk {
    weights: DMatrix<f64>,
    degrees: DVector<f64>,
}

impl WeightedWalk {
    /// Walk whose edge weights are `sigma_e = 1 / f_e''(x_e)`.
    pub fn from_state(g: &DirectedGraph, costs: &ObjectiveBundle, x: &DVector<f64>) -> Result<Self> {
        Self::from_edge_weights(g, &costs.sigma(x)?)
    }

    pub fn from_edge_weights(g: &DirectedGraph, sigma: &DVector<f64>) -> Result<Self> {
        if sigma.len() != g.n_edges() {
            return Err(Error::Dimension {
                expected: g.n_edges(),
                got: sigma.len(),
            });
        }
        let n = g.n_vertices();
        let mut w = DMatrix::zeros(n, n);
        for (e, &s) in g.edges().iter().zip(sigma.iter()) {
            w[(e.tail, e.head)] = s;
            w[(e.head, e.tail)] = s;
        }
        Self::from_weight_matrix(w)
    }

    /// Validates a symmetric, nonnegative, zero-diagonal weight matrix with
    /// a connected support.
    pub fn from_weight_matrix(weights: DMatrix<f64>) -> Result<Self> {
        let n = weights.nrows();
        if n < 2 || weights.ncols() != n {
            return Err(Error::InvalidGraph("weight matrix must be square with n >= 2".into()));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal weight at {i}")));
            }
            for j in 0..i {
                let (a, b) = (weights[(i, j)], weights[(j, i)]);
                if a != b || a < 0.0 || !a.is_finite() {
                    return Err(Error::InvalidGraph(format!(
                        "weights at ({i}, {j}) must be symmetric, finite and nonnegative"
                    )));
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for u in 0..n {
                if weights[(v, u)] > 0.0 && !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if seen.contains(&false) {
            return Err(Error::Disconnected);
        }
        let degrees = DVector::from_iterator(n, weights.row_iter().map(|r| r.sum()));
        Ok(Self { weights, degrees })
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    /// `L = D - W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees) - &self.weights
    }

    /// `P = D^{-1} W`.
    pub fn transition(&self) -> DMatrix<f64> {
        let mut p = self.weights.clone();
        for (mut row, &d) in p.row_iter_mut().zip(self.degrees.iter()) {
            row /= d;
        }
        p
    }

    pub fn stationary(&self) -> DVector<f64> {
        &self.degrees / self.degrees.sum()
    }

    pub fn laplacian_pinv(&self) -> DMatrix<f64> {
        pseudoinverse(&self.laplacian())
    }

    /// `D^{-1/2} W D^{-1/2}`, similar to `P` and symmetric.
    pub fn normalized_adjacency(&self) -> DMatrix<f64> {
        let s = self.degrees.map(|d| 1.0 / d.sqrt());
        let mut m = self.weights.clone();
        for i in 0..self.n() {
            for j in 0..self.n() {
                m[(i, j)] *= s[i] * s[j];
            }
        }
        m
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum::from_symmetric(self.normalized_adjacency())
    }

    /// `P v` without forming `P`.
    fn apply_transition(&self, v: &DVector<f64>) -> DVector<f64> {
        (&self.weights * v).component_div(&self.degrees)
    }

    /// `(e_u - e_v)^T L^+ (e_w - e_z)` from a precomputed pseudoinverse.
    pub fn green_difference(lplus: &DMatrix<f64>, u: usize, v: usize, w: usize, z: usize) -> f64 {
        lplus[(u, w)] - lplus[(u, z)] - lplus[(v, w)] + lplus[(v, z)]
    }

    /// Truncated `sum_t P^t D^{-1} f` for a balanced `f`.
    ///
    /// Differences of the returned potential between two vertices equal the
    /// corresponding differences of `L^+ f`. The sum is cut once the tail,
    /// bounded through the walk's spectral gap, falls below
    /// `SERIES_TOLERANCE` relative to the size of `f`.
    pub fn green_series(&self, f: &DVector<f64>) -> Result<SeriesValue> {
        self.green_series_with(f, self.spectrum().lambda())
    }

    /// As [`green_series`](Self::green_series) with a precomputed `lambda`.
    pub fn green_series_with(&self, f: &DVector<f64>, lambda: f64) -> Result<SeriesValue> {
        if f.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: f.len(),
            });
        }
        let total: f64 = f.sum();
        let scale = f.amax().max(f64::MIN_POSITIVE);
        if total.abs() > 1e-9 * scale * (self.n() as f64) {
            return Err(Error::Unbalanced(total));
        }
        if lambda >= 1.0 - 1e-10 {
            return Err(Error::Periodic);
        }
        let mut term = f.component_div(&self.degrees);
        // |(P^t g)_v| <= lambda^t ||D^{1/2} g|| / sqrt(d_min)
        let d_min = self.degrees.min();
        let weight = term
            .iter()
            .zip(self.degrees.iter())
            .map(|(g, d)| g * g * d)
            .sum::<f64>()
            .sqrt()
            / d_min.sqrt();
        let floor = SERIES_TOLERANCE * weight.max(f64::MIN_POSITIVE);
        let mut sum = term.clone();
        // bound on the part of the sum not yet accumulated
        let mut tail = weight * lambda / (1.0 - lambda);
        let mut terms = 1;
        while 2.0 * tail > floor {
            if terms >= SERIES_MAX_TERMS {
                return Err(Error::NoConvergence {
                    iterations: terms,
                    residual: tail,
                });
            }
            term = self.apply_transition(&term);
            sum += &term;
            terms += 1;
            tail *= lambda;
        }
        Ok(SeriesValue { value: sum, terms })
    }

    /// Series form of `(e_u - e_v)^T L^+ (e_w - e_z)`.
    pub fn green_difference_series(&self, u: usize, v: usize, w: usize, z: usize) -> Result<(f64, usize)> {
        let mut f = DVector::zeros(self.n());
        f[w] += 1.0;
        f[z] -= 1.0;
        let s = self.green_series(&f)?;
        Ok((s.value[u] - s.value[v], s.terms))
    }

    pub fn restrict(&self, kill: usize) -> Result<RestrictedLaplacian> {
        RestrictedLaplacian::new(self, kill)
    }
}

/// A truncated walk series and the number of terms summed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesValue {
    pub value: DVector<f64>,
    pub terms: usize,
}

/// Laplacian with the row and column of one vertex deleted.
#[derive(Debug, Clone)]
pub struct RestrictedLaplacian {
    kill: usize,
    keep: Vec<usize>,
    matrix: DMatrix<f64>,
    degrees: DVector<f64>,
}

impl RestrictedLaplacian {
    pub fn new(walk: &WeightedWalk, kill: usize) -> Result<Self> {
        let n = walk.n();
        if kill >= n {
            return Err(Error::InvalidParameter(format!("kill vertex {kill} out of range")));
        }
        let keep: Vec<usize> = (0..n).filter(|&v| v != kill).collect();
        let l = walk.laplacian();
        let matrix = DMatrix::from_fn(keep.len(), keep.len(), |i, j| l[(keep[i], keep[j])]);
        let degrees = DVector::from_iterator(keep.len(), keep.iter().map(|&v| walk.degrees()[v]));
        Ok(Self {
            kill,
            keep,
            matrix,
            degrees,
        })
    }

    pub fn kill(&self) -> usize {
        self.kill
    }

    /// Original vertex index of each row.
    pub fn kept(&self) -> &[usize] {
        &self.keep
    }

    /// Row of vertex `v`, or `None` for the killed vertex.
    pub fn position(&self, v: usize) -> Option<usize> {
        match v.cmp(&self.kill) {
            std::cmp::Ordering::Less => Some(v),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(v - 1),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Killed transition matrix `D^{-1} W` on the kept vertices.
    pub fn transition(&self) -> DMatrix<f64> {
        let w = DMatrix::from_diagonal(&self.degrees) - &self.matrix;
        let mut p = w;
        for (mut row, &d) in p.row_iter_mut().zip(self.degrees.iter()) {
            row /= d;
        }
        p
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.matrix
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::Singular(format!("restricted Laplacian (kill {})", self.kill)))
    }

    /// Expected visits `G_vw = sum_t Pbar^t_vw = (Lbar^{-1} D)_vw`.
    pub fn killed_green(&self) -> Result<DMatrix<f64>> {
        Ok(self.inverse()? * DMatrix::from_diagonal(&self.degrees))
    }

    /// Spectral radius of the killed transition matrix.
    pub fn spectral_radius(&self) -> f64 {
        let s = self.degrees.map(|d| 1.0 / d.sqrt());
        let w = DMatrix::from_diagonal(&self.degrees) - &self.matrix;
        let m = DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)] * s[i] * s[j]);
        SymmetricEigen::new(m).eigenvalues.amax()
    }

    /// Truncated Neumann series `sum_{t <= T} Pbar^t D^{-1}`, with `T`
    /// chosen from the spectral radius so the dropped tail is below `tol`
    /// in every entry.
    pub fn neumann_series(&self, tol: f64) -> Result<(DMatrix<f64>, usize)> {
        let rho = self.spectral_radius();
        if rho >= 1.0 {
            return Err(Error::Singular("killed walk is not transient".into()));
        }
        // entries of Pbar^t D^{-1} are bounded by rho^t / d_min (similarity to a symmetric matrix)
        let d_min = self.degrees.min();
        let d_max = self.degrees.max();
        let scale = (d_max / d_min).sqrt() / d_min;
        let p = self.transition();
        let dinv = DMatrix::from_diagonal(&self.degrees.map(|d| 1.0 / d));
        let mut term = dinv.clone();
        let mut sum = dinv;
        let mut tail = scale * rho / (1.0 - rho);
        let mut terms = 1;
        while tail > tol {
            if terms >= SERIES_MAX_TERMS {
                return Err(Error::NoConvergence {
                    iterations: terms,
                    residual: tail,
                });
            }
            term = &p * term;
            sum += &term;
            tail *= rho;
            terms += 1;
        }
        Ok((sum, terms))
    }

    /// `max |Lbar^{-1}_vw - (e_v - e_k)^T L^+ (e_w - e_k)|` over kept `v, w`.
    pub fn deviation_from_full(&self, lplus: &DMatrix<f64>) -> Result<f64> {
        let inv = self.inverse()?;
        let k = self.kill;
        let mut dev: f64 = 0.0;
        for (i, &v) in self.keep.iter().enumerate() {
            for (j, &w) in self.keep.iter().enumerate() {
                let full = WeightedWalk::green_difference(lplus, v, k, w, k);
                dev = dev.max((inv[(i, j)] - full).abs());
            }
        }
        Ok(dev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GraphKind};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_walk(g: &DirectedGraph) -> WeightedWalk {
        WeightedWalk::from_edge_weights(g, &DVector::from_element(g.n_edges(), 1.0)).unwrap()
    }

    fn path(n: usize) -> DirectedGraph {
        let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        DirectedGraph::from_index_pairs(n, &pairs).unwrap()
    }

    fn random_walk(seed: u64) -> WeightedWalk {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * rng.gen_range(3..15);
        let g = generate(GraphKind::RandomRegular { n, k: 3 }, seed).unwrap();
        let w = DVector::from_fn(g.n_edges(), |_, _| rng.gen_range(0.2..5.0));
        WeightedWalk::from_edge_weights(&g, &w).unwrap()
    }

    fn moore_penrose_residual(l: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
        [
            (l * p * l - l).amax(),
            (p * l * p - p).amax(),
            ((l * p).transpose() - l * p).amax(),
            ((p * l).transpose() - p * l).amax(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    #[test]
    fn walk_from_uniform_quadratic() {
        let g = generate(GraphKind::Cycle { n: 5 }, 0).unwrap();
        let c1 = ObjectiveBundle::uniform(&g, crate::objective::EdgeCost::quadratic(1.0)).unwrap();
        let c2 = ObjectiveBundle::uniform(&g, crate::objective::EdgeCost::quadratic(2.0)).unwrap();
        let x = DVector::zeros(5);
        let w1 = WeightedWalk::from_state(&g, &c1, &x).unwrap();
        let w2 = WeightedWalk::from_state(&g, &c2, &x).unwrap();
        assert_eq!(w1.weights(), &g.adjacency_matrix());
        assert_eq!(w1.degrees(), &DVector::from_element(5, 2.0));
        assert_eq!(w2.weights(), &(g.adjacency_matrix() * 0.5));
        assert_abs_diff_eq!(w1.transition(), w2.transition(), epsilon = 1e-15);
    }

    #[test]
    fn triangle_stationary_uniform() {
        let g = generate(GraphKind::Complete { n: 3 }, 0).unwrap();
        let pi = unit_walk(&g).stationary();
        assert_abs_diff_eq!(pi, DVector::from_element(3, 1.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn walk_invariants_on_random_graphs() {
        for seed in 0..10 {
            let walk = random_walk(seed);
            let p = walk.transition();
            let pi = walk.stationary();
            for row in p.row_iter() {
                assert!((row.sum() - 1.0).abs() <= 1e-12);
            }
            assert!((pi.transpose() * &p - pi.transpose()).amax() <= 1e-12);
            let l = walk.laplacian();
            assert!((&l * DVector::from_element(walk.n(), 1.0)).amax() <= 1e-12);
            let spec = walk.spectrum();
            assert!((spec.eigenvalues()[0] - 1.0).abs() <= 1e-10);
            assert!(spec.eigenvalues()[1] < 1.0);
        }
    }

    #[test]
    fn pseudoinverse_two_path() {
        let l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let p = pseudoinverse(&l);
        let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert_abs_diff_eq!(p, expected, epsilon = 1e-14);
    }

    #[test]
    fn pseudoinverse_triangle() {
        let g = generate(GraphKind::Complete { n: 3 }, 0).unwrap();
        let l = unit_walk(&g).laplacian();
        let p = pseudoinverse(&l);
        let expected = (DMatrix::identity(3, 3) * 3.0 - DMatrix::from_element(3, 3, 1.0)) / 9.0;
        assert_abs_diff_eq!(p, expected, epsilon = 1e-14);
        assert!((&l * &p * &l - &l).amax() <= 1e-12);
    }

    #[test]
    fn pseudoinverse_identities_on_random_graphs() {
        for seed in 0..20 {
            let walk = random_walk(seed);
            let l = walk.laplacian();
            let p = walk.laplacian_pinv();
            assert!(moore_penrose_residual(&l, &p) <= 1e-9, "seed {seed}");
            assert!((&p * DVector::from_element(walk.n(), 1.0)).norm() <= 1e-10);
        }
    }

    #[test]
    fn killed_path_inverse() {
        let walk = unit_walk(&path(3));
        let rl = walk.restrict(2).unwrap();
        let inv = rl.inverse().unwrap();
        assert_abs_diff_eq!(inv, DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]), epsilon = 1e-14);
        // G = Lbar^{-1} D: expected visits
        let green = rl.killed_green().unwrap();
        assert_abs_diff_eq!(green, DMatrix::from_row_slice(2, 2, &[2.0, 2.0, 1.0, 2.0]), epsilon = 1e-14);
        assert!(inv.iter().all(|&x| x >= 0.0));
    }

    /// Walks started at `start` on the path 0-1-2 killed at 2. Returns the
    /// fraction that hit 1 before 2 and the visits to 0 per walk.
    fn simulate_killed_path(start: usize, walks: usize, seed: u64) -> (f64, Vec<f64>) {
        let walk = unit_walk(&path(3));
        let p = walk.transition();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = 0;
        let mut visits = Vec::with_capacity(walks);
        for _ in 0..walks {
            let mut v = start;
            let mut seen_one = false;
            let mut count = 0.0;
            while v != 2 {
                if v == 0 {
                    count += 1.0;
                }
                if v == 1 {
                    seen_one = true;
                }
                let r: f64 = rng.gen();
                v = if r < p[(v, 0)] {
                    0
                } else if r < p[(v, 0)] + p[(v, 1)] {
                    1
                } else {
                    2
                };
            }
            hits += usize::from(seen_one);
            visits.push(count);
        }
        (hits as f64 / walks as f64, visits)
    }

    #[test]
    fn killed_green_matches_monte_carlo() {
        let walk = unit_walk(&path(3));
        let inv = walk.restrict(2).unwrap().inverse().unwrap();
        let (hit_prob, visits) = simulate_killed_path(0, 100_000, 42);
        // a walk from 0 must pass 1 to reach 2
        assert_eq!(hit_prob, 1.0);
        assert_abs_diff_eq!(inv[(0, 1)], inv[(1, 1)] * hit_prob, epsilon = 1e-14);

        let n = visits.len() as f64;
        let mean = visits.iter().sum::<f64>() / n;
        let var = visits.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let d0 = walk.degrees()[0];
        assert!((mean / d0 - inv[(0, 0)]).abs() <= 3.0 * se / d0, "mean {mean}, se {se}");
    }

    #[test]
    fn killed_green_matches_neumann_series() {
        for seed in 0..10 {
            let walk = random_walk(seed);
            let rl = walk.restrict(seed as usize % walk.n()).unwrap();
            let inv = rl.inverse().unwrap();
            let (series, _) = rl.neumann_series(1e-10).unwrap();
            assert!((inv - series).amax() <= 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn restricted_agrees_with_full_pseudoinverse() {
        let walk = unit_walk(&path(3));
        let lplus = walk.laplacian_pinv();
        assert!(walk.restrict(2).unwrap().deviation_from_full(&lplus).unwrap() <= 1e-10);

        let tri = unit_walk(&generate(GraphKind::Complete { n: 3 }, 0).unwrap());
        let lplus = tri.laplacian_pinv();
        for k in 0..3 {
            assert!(tri.restrict(k).unwrap().deviation_from_full(&lplus).unwrap() <= 1e-10);
        }

        let two = unit_walk(&path(2));
        let rl = two.restrict(1).unwrap();
        assert_abs_diff_eq!(rl.inverse().unwrap()[(0, 0)], 1.0, epsilon = 1e-14);
        let lplus = two.laplacian_pinv();
        assert_abs_diff_eq!(WeightedWalk::green_difference(&lplus, 0, 1, 0, 1), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn green_difference_triangle() {
        let tri = unit_walk(&generate(GraphKind::Complete { n: 3 }, 0).unwrap());
        let lplus = tri.laplacian_pinv();
        assert_abs_diff_eq!(WeightedWalk::green_difference(&lplus, 0, 1, 0, 1), 2.0 / 3.0, epsilon = 1e-12);
        let (series, terms) = tri.green_difference_series(0, 1, 0, 1).unwrap();
        assert_abs_diff_eq!(series, 2.0 / 3.0, epsilon = 1e-10);
        assert!(terms > 1);
        assert_eq!(WeightedWalk::green_difference(&lplus, 2, 2, 0, 1), 0.0);
    }

    #[test]
    fn series_rejected_on_bipartite_walk() {
        let walk = unit_walk(&path(4));
        assert!(matches!(walk.green_difference_series(0, 1, 0, 1), Err(Error::Periodic)));
        let cycle = unit_walk(&generate(GraphKind::Cycle { n: 6 }, 0).unwrap());
        assert!(matches!(cycle.green_difference_series(0, 3, 1, 2), Err(Error::Periodic)));
    }

    #[test]
    fn summed_series_matches_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let walk = random_walk(seed + 100);
            if walk.spectrum().lambda() >= 1.0 - 1e-9 {
                continue;
            }
            let n = walk.n();
            let mut f = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let mean = f.mean();
            f.add_scalar_mut(-mean);
            let exact = walk.laplacian_pinv() * &f;
            let series = walk.green_series(&f).unwrap().value;
            for u in 0..n {
                for v in 0..n {
                    let lhs = exact[u] - exact[v];
                    let rhs = series[u] - series[v];
                    assert!((lhs - rhs).abs() <= 1e-8, "seed {seed}: {lhs} vs {rhs}");
                }
            }
        }
    }

    #[test]
    fn grounded_solve_matches_pseudoinverse() {
        let g = generate(GraphKind::RandomRegular { n: 20, k: 3 }, 3).unwrap();
        let w = DVector::from_fn(g.n_edges(), |j, _| 0.5 + (j % 7) as f64);
        let walk = WeightedWalk::from_edge_weights(&g, &w).unwrap();
        let l = weighted_laplacian(&g, &w);
        assert_abs_diff_eq!(l, walk.laplacian(), epsilon = 1e-12);
        let mut r = DVector::from_fn(20, |i, _| (i as f64).sin());
        let mean = r.mean();
        r.add_scalar_mut(-mean);
        let y = GroundedSolver::new(&l).unwrap().solve(&r);
        let exact = walk.laplacian_pinv() * &r;
        let shift = exact[19] - y[19];
        assert!((y.add_scalar(shift) - exact).amax() <= 1e-10);
    }

    #[test]
    fn rejects_bad_weight_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(WeightedWalk::from_weight_matrix(asym).is_err());
        let disconnected = DMatrix::zeros(3, 3);
        assert!(matches!(
            WeightedWalk::from_weight_matrix(disconnected),
            Err(Error::Disconnected)
        ));
    }
}
