//! Optimal flows and their derivatives with respect to the external flow.
//!
//! For `min f(x) s.t. Ax = b` with separable strongly convex `f`, the
//! optimum moves along `b + eps p` with velocity `D(b) p`, where
//! `D(b) = Sigma A^T (A Sigma A^T)^+` and `Sigma` is the inverse Hessian at
//! the optimum. On a graph `A Sigma A^T` is a weighted Laplacian, so the
//! derivative on edge `(u, v)` is `sigma_e (L^+ p)_u - sigma_e (L^+ p)_v`,
//! or equivalently a sum of walk probabilities.

mod gaussian;

pub use gaussian::{boundary_sensitivity_check, gaussian_identity_check, BoundaryCheck};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, IncidenceMatrix};
use crate::laplacian::{pseudoinverse, weighted_laplacian, GroundedSolver, WeightedWalk};
use crate::objective::ObjectiveBundle;

/// KKT residual at which Newton iteration stops.
pub const NEWTON_TOLERANCE: f64 = 1e-10;

const NEWTON_MAX_ITERATIONS: usize = 200;
const NEWTON_MAX_HALVINGS: usize = 60;
const NEWTON_POLISH_STEPS: usize = 3;

/// Largest vertex count for which the dense sensitivity matrix is formed.
pub const DENSE_OPERATOR_LIMIT: usize = 512;

/// Relative tolerance on `sum_v b_v`.
const BALANCE_TOLERANCE: f64 = 1e-9;

pub(crate) fn check_balanced(v: &DVector<f64>) -> Result<()> {
    let total = v.sum();
    let scale = v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    if total.abs() > BALANCE_TOLERANCE * scale {
        return Err(Error::Unbalanced(total));
    }
    Ok(())
}

/// A separable convex flow problem on a connected directed graph.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    graph: DirectedGraph,
    incidence: IncidenceMatrix,
    costs: ObjectiveBundle,
    b: DVector<f64>,
    unweighted: OnceLock<GroundedSolver>,
}

/// Optimal flow together with its multipliers and residuals.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub potentials: DVector<f64>,
    pub iterations: usize,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// `||Ax - b||_inf`
    pub feasibility: f64,
    /// `||(I - A^T (A A^T)^+ A) grad f(x)||_inf`
    pub stationarity: f64,
}

impl FlowProblem {
    pub fn new(graph: DirectedGraph, costs: ObjectiveBundle, b: DVector<f64>) -> Result<Self> {
        if costs.len() != graph.n_edges() {
            return Err(Error::Dimension {
                expected: graph.n_edges(),
                got: costs.len(),
            });
        }
        if b.len() != graph.n_vertices() {
            return Err(Error::Dimension {
                expected: graph.n_vertices(),
                got: b.len(),
            });
        }
        check_balanced(&b)?;
        let incidence = graph.incidence();
        Ok(Self {
            graph,
            incidence,
            costs,
            b,
            unweighted: OnceLock::new(),
        })
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn incidence(&self) -> &DMatrix<f64> {
        self.incidence.matrix()
    }

    pub fn costs(&self) -> &ObjectiveBundle {
        &self.costs
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn n_vertices(&self) -> usize {
        self.graph.n_vertices()
    }

    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    /// The same graph and costs with another external flow.
    pub fn with_flow(&self, b: DVector<f64>) -> Result<Self> {
        if b.len() != self.n_vertices() {
            return Err(Error::Dimension {
                expected: self.n_vertices(),
                got: b.len(),
            });
        }
        check_balanced(&b)?;
        Ok(Self {
            b,
            ..self.clone()
        })
    }

    fn unweighted_solver(&self) -> &GroundedSolver {
        self.unweighted.get_or_init(|| {
            let ones = DVector::from_element(self.n_edges(), 1.0);
            GroundedSolver::new(&weighted_laplacian(&self.graph, &ones))
                .expect("connected graph has a nonsingular grounded Laplacian")
        })
    }

    /// Orthogonal projection of an edge vector onto `ker A`.
    pub fn project_kernel(&self, v: &DVector<f64>) -> DVector<f64> {
        let a = self.incidence();
        let y = self.unweighted_solver().solve(&(a * v));
        v - a.transpose() * y
    }

    /// Least-norm solution of `Ax = b`.
    pub fn least_norm(&self, b: &DVector<f64>) -> DVector<f64> {
        self.incidence().transpose() * self.unweighted_solver().solve(b)
    }

    pub fn residuals(&self, x: &DVector<f64>, b: &DVector<f64>) -> Result<Residuals> {
        let feasibility = (self.incidence() * x - b).amax();
        let stationarity = self.project_kernel(&self.costs.gradient(x)?).amax();
        Ok(Residuals {
            feasibility,
            stationarity,
        })
    }

    /// Walk with edge weights `1 / f_e''(x_e)`.
    pub fn walk_at(&self, x: &DVector<f64>) -> Result<WeightedWalk> {
        WeightedWalk::from_state(&self.graph, &self.costs, x)
    }

    /// Optimal flow for the problem's own `b`.
    pub fn solve_exact(&self) -> Result<Solution> {
        self.solve_at(&self.b)
    }

    /// Optimal flow for another balanced external flow on the same graph.
    pub fn solve_at(&self, b: &DVector<f64>) -> Result<Solution> {
        if b.len() != self.n_vertices() {
            return Err(Error::Dimension {
                expected: self.n_vertices(),
                got: b.len(),
            });
        }
        check_balanced(b)?;
        if self.costs.is_quadratic() {
            self.solve_quadratic(b)
        } else {
            self.solve_newton(b)
        }
    }

    /// `x = -Sigma c + Sigma A^T L^+ (b + A Sigma c)` with `L = A Sigma A^T`.
    fn solve_quadratic(&self, b: &DVector<f64>) -> Result<Solution> {
        let zero = DVector::zeros(self.n_edges());
        let sigma = self.costs.sigma(&zero)?;
        let lin = self.costs.gradient(&zero)?;
        let a = self.incidence();
        let solver = GroundedSolver::new(&weighted_laplacian(&self.graph, &sigma))?;
        let sc = sigma.component_mul(&lin);
        let nu = -solver.solve(&(b + a * &sc));
        let x = -(sc + sigma.component_mul(&(a.transpose() * &nu)));
        let residuals = self.residuals(&x, b)?;
        Ok(Solution {
            x,
            potentials: nu,
            iterations: 0,
            residuals,
        })
    }

    fn kkt_residual(
        &self,
        x: &DVector<f64>,
        nu: &DVector<f64>,
        b: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        let a = self.incidence();
        let r1 = self.costs.gradient(x)? + a.transpose() * nu;
        let r2 = a * x - b;
        let norm = (r1.norm_squared() + r2.norm_squared()).sqrt();
        Ok((r1, r2, norm))
    }

    /// Damped Newton on `grad f(x) + A^T nu = 0, Ax = b`.
    fn solve_newton(&self, b: &DVector<f64>) -> Result<Solution> {
        let a = self.incidence();
        let zero = DVector::zeros(self.n_edges());
        // start from the minimizer of the quadratic model at zero
        let sigma0 = self.costs.sigma(&zero)?;
        let g0 = self.costs.gradient(&zero)?;
        let solver0 = GroundedSolver::new(&weighted_laplacian(&self.graph, &sigma0))?;
        let sg = sigma0.component_mul(&g0);
        let nu0 = -solver0.solve(&(b + a * &sg));
        let mut x = -(sg + sigma0.component_mul(&(a.transpose() * &nu0)));
        if self.costs.check_domain(&x).is_err() {
            x = self.least_norm(b);
            self.costs.check_domain(&x)?;
        }
        let mut nu = DVector::zeros(self.n_vertices());
        let (mut r1, mut r2, mut norm) = self.kkt_residual(&x, &nu, b)?;
        let tol = NEWTON_TOLERANCE * b.amax().max(1.0);
        let mut iterations = 0;
        let mut polish = 0;
        while norm > tol || polish < NEWTON_POLISH_STEPS {
            if iterations >= NEWTON_MAX_ITERATIONS {
                if norm <= tol {
                    break;
                }
                return Err(Error::NoConvergence {
                    iterations,
                    residual: norm,
                });
            }
            let hinv = self.costs.sigma(&x)?;
            let solver = GroundedSolver::new(&weighted_laplacian(&self.graph, &hinv))?;
            let dnu = solver.solve(&(&r2 - a * hinv.component_mul(&r1)));
            let dx = -hinv.component_mul(&(&r1 + a.transpose() * &dnu));

            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..NEWTON_MAX_HALVINGS {
                let xn = &x + step * &dx;
                if self.costs.check_domain(&xn).is_ok() {
                    let nun = &nu + step * &dnu;
                    let (s1, s2, sn) = self.kkt_residual(&xn, &nun, b)?;
                    if sn < norm {
                        accepted = Some((xn, nun, s1, s2, sn));
                        break;
                    }
                }
                step *= 0.5;
            }
            iterations += 1;
            match accepted {
                Some((xn, nun, s1, s2, sn)) => {
                    x = xn;
                    nu = nun;
                    r1 = s1;
                    r2 = s2;
                    norm = sn;
                    if norm <= tol {
                        polish += 1;
                    }
                }
                // no decrease possible: at the floating-point floor
                None if norm <= tol => break,
                None => {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: norm,
                    })
                }
            }
        }
        let residuals = self.residuals(&x, b)?;
        Ok(Solution {
            x,
            potentials: nu,
            iterations,
            residuals,
        })
    }

    /// Sensitivity operator at the problem's own `b`.
    pub fn sensitivity_operator(&self) -> Result<SensitivityOperator> {
        self.sensitivity_operator_at(&self.b)
    }

    pub fn sensitivity_operator_at(&self, b: &DVector<f64>) -> Result<SensitivityOperator> {
        let solution = self.solve_at(b)?;
        SensitivityOperator::new(self, b.clone(), solution.x)
    }

    /// `d x*(b + eps p) / d eps`, re-solving at `b + eps p`.
    pub fn directional_derivative(&self, pert: &PerturbationSpec, eps: f64) -> Result<DVector<f64>> {
        let b = &self.b + eps * pert.vector();
        self.sensitivity_operator_at(&b)?.apply(pert.vector())
    }

    /// The same derivative from walk probabilities:
    /// `sigma_e sum_z (p_z / d_z) sum_t (P^t_uz - P^t_vz)`.
    pub fn directional_derivative_series(&self, pert: &PerturbationSpec, eps: f64) -> Result<DVector<f64>> {
        let b = &self.b + eps * pert.vector();
        let x = self.solve_at(&b)?.x;
        let walk = self.walk_at(&x)?;
        let sigma = self.costs.sigma(&x)?;
        let h = walk.green_series(pert.vector())?.value;
        Ok(DVector::from_iterator(
            self.n_edges(),
            self.graph
                .edges()
                .iter()
                .zip(sigma.iter())
                .map(|(e, s)| s * (h[e.tail] - h[e.head])),
        ))
    }

    /// `int_0^1 D(b_theta) (b_to - b_from) d theta` by composite four-point
    /// Gauss-Legendre quadrature on `n_steps` panels.
    pub fn integrate_sensitivity(
        &self,
        b_from: &DVector<f64>,
        b_to: &DVector<f64>,
        n_steps: usize,
    ) -> Result<DVector<f64>> {
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        check_balanced(b_from)?;
        check_balanced(b_to)?;
        let delta = b_to - b_from;
        if delta.amax() == 0.0 {
            return Ok(DVector::zeros(self.n_edges()));
        }
        let h = 1.0 / n_steps as f64;
        let nodes: Vec<(f64, f64)> = (0..n_steps)
            .flat_map(|k| {
                GAUSS_LEGENDRE_4.iter().map(move |&(t, w)| {
                    let mid = (k as f64 + 0.5) * h;
                    (mid + 0.5 * h * t, 0.5 * h * w)
                })
            })
            .collect();
        let terms = nodes
            .par_iter()
            .map(|&(theta, w)| {
                let b = b_from + theta * &delta;
                Ok(self.sensitivity_operator_at(&b)?.apply(&delta)? * w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(terms
            .into_iter()
            .fold(DVector::zeros(self.n_edges()), |acc, t| acc + t))
    }
}

const GAUSS_LEGENDRE_4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// A balanced perturbation of the external flow with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    p: DVector<f64>,
    support: Vec<usize>,
}

impl PerturbationSpec {
    /// Requires `sum p = 0` and at least two nonzero entries.
    pub fn new(p: DVector<f64>) -> Result<Self> {
        check_balanced(&p)?;
        let support: Vec<usize> = (0..p.len()).filter(|&v| p[v] != 0.0).collect();
        if support.len() < 2 {
            return Err(Error::InvalidParameter(
                "perturbation must be nonzero on at least two vertices".into(),
            ));
        }
        Ok(Self { p, support })
    }

    /// The zero perturbation on `n` vertices.
    pub fn none(n: usize) -> Self {
        Self {
            p: DVector::zeros(n),
            support: Vec::new(),
        }
    }

    /// `p = e_u - e_v`.
    pub fn dipole(n: usize, u: usize, v: usize) -> Result<Self> {
        if u >= n || v >= n {
            return Err(Error::InvalidParameter(format!("vertex out of range in dipole ({u}, {v})")));
        }
        let mut p = DVector::zeros(n);
        p[u] += 1.0;
        p[v] -= 1.0;
        Self::new(p)
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    /// Euclidean norm, which equals the norm restricted to the support.
    pub fn norm(&self) -> f64 {
        self.p.norm()
    }
}

/// `D(b) = Sigma A^T (A Sigma A^T)^+` at a solved point.
#[derive(Debug, Clone)]
pub struct SensitivityOperator {
    b: DVector<f64>,
    x: DVector<f64>,
    sigma: DVector<f64>,
    incidence: DMatrix<f64>,
    solver: GroundedSolver,
    dense: Option<DMatrix<f64>>,
}

impl SensitivityOperator {
    fn new(problem: &FlowProblem, b: DVector<f64>, x: DVector<f64>) -> Result<Self> {
        let sigma = problem.costs().sigma(&x)?;
        let l = weighted_laplacian(problem.graph(), &sigma);
        let solver = GroundedSolver::new(&l)?;
        let incidence = problem.incidence().clone();
        let dense = (problem.n_vertices() <= DENSE_OPERATOR_LIMIT).then(|| {
            let mut m = incidence.transpose() * pseudoinverse(&l);
            for (mut row, &s) in m.row_iter_mut().zip(sigma.iter()) {
                row *= s;
            }
            m
        });
        Ok(Self {
            b,
            x,
            sigma,
            incidence,
            solver,
            dense,
        })
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.b
    }

    /// Optimal flow at the base point.
    pub fn optimum(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    /// The dense edges-by-vertices matrix, present for small graphs only.
    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.dense.as_ref()
    }

    /// Potential `r` with `(D(b) q)_f = r^T q` for every balanced `q`.
    pub fn edge_potential(&self, f: usize) -> DVector<f64> {
        self.solver.solve(&self.incidence.column(f).into_owned()) * self.sigma[f]
    }

    /// `D(b) q` for a balanced `q`.
    pub fn apply(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        if q.len() != self.b.len() {
            return Err(Error::Dimension {
                expected: self.b.len(),
                got: q.len(),
            });
        }
        check_balanced(q)?;
        let y = self.solver.solve(q);
        Ok(self.sigma.component_mul(&(self.incidence.transpose() * y)))
    }
}

/// `Sigma A^T (A Sigma A^T)^+` for a general constraint matrix, using the
/// inverse when `A Sigma A^T` is nonsingular.
pub fn generic_sensitivity(sigma: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let sat = sigma * a.transpose();
    let gram = a * &sat;
    match gram.clone().cholesky() {
        Some(c) => sat * c.inverse(),
        None => sat * pseudoinverse(&gram),
    }
}
