use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{adjacency_lambda, csv_float, write_csv};
use crate::error::{Error, Result};
use crate::graph::SubgraphSpec;
use crate::sensitivity::{FlowProblem, PerturbationSpec};
use crate::solver::{LocalizedPgd, PgdConfig};

/// Graph-family quantities that determine the error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Condition number `beta / alpha`.
    pub q: f64,
    pub k_min: usize,
    pub k_max: usize,
    /// Second largest adjacency eigenvalue in magnitude.
    pub mu: f64,
    /// Radius around the center that contains the perturbation support.
    #[serde(default)]
    pub z: usize,
    /// Norm of the perturbation; the budget scales linearly with it.
    #[serde(default = "one")]
    pub p_norm: f64,
    /// Exponent of the per-iteration linear algebra cost.
    #[serde(default = "three")]
    pub omega: f64,
}

fn one() -> f64 {
    1.0
}

fn three() -> f64 {
    3.0
}

impl FamilyParams {
    pub fn from_problem(problem: &FlowProblem, z: usize, p_norm: f64) -> Self {
        let (k_min, k_max) = problem.graph().degree_range();
        Self {
            q: problem.costs().condition_number(),
            k_min,
            k_max,
            mu: adjacency_lambda(problem.graph()),
            z,
            p_norm,
            omega: 3.0,
        }
    }

    /// `Q k+ / k- - 1 + Q mu / k-`
    pub fn rho(&self) -> f64 {
        let (lo, hi) = (self.k_min as f64, self.k_max as f64);
        self.q * hi / lo - 1.0 + self.q / lo * self.mu
    }

    /// `sqrt(2 k+) Q / k-`
    pub fn c(&self) -> f64 {
        (2.0 * self.k_max as f64).sqrt() * self.q / self.k_min as f64
    }

    /// `c (1 + c sqrt(k+ - 1))`
    pub fn gamma(&self) -> f64 {
        let c = self.c();
        c * (1.0 + c * (self.k_max as f64 - 1.0).sqrt())
    }

    fn validate(&self) -> Result<()> {
        if !(self.q >= 1.0) || self.k_min == 0 || self.k_min > self.k_max || !(self.mu >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid family parameters {self:?}")));
        }
        if !(self.p_norm >= 0.0) || !(self.omega > 0.0) {
            return Err(Error::InvalidParameter("p_norm must be >= 0 and omega > 0".into()));
        }
        Ok(())
    }
}

/// Bias and variance bounds for one subgraph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub params: FamilyParams,
    pub rho: f64,
    pub c: f64,
    pub gamma: f64,
    /// Distance from the inner boundary to the perturbation support.
    pub boundary_distance: usize,
    pub whole_graph: bool,
    /// False when `rho >= 1`; the bounds are then meaningless.
    pub valid: bool,
}

impl ErrorBudget {
    pub fn new(params: FamilyParams, boundary_distance: usize, whole_graph: bool) -> Result<Self> {
        params.validate()?;
        let rho = params.rho();
        Ok(Self {
            params,
            rho,
            c: params.c(),
            gamma: params.gamma(),
            boundary_distance,
            whole_graph,
            valid: rho < 1.0,
        })
    }

    /// Budget for `sub` and `pert` on `problem`. A proper subgraph without
    /// an inner boundary (all vertices, fewer edges) is given distance 0.
    pub fn for_subgraph(problem: &FlowProblem, pert: &PerturbationSpec, sub: &SubgraphSpec) -> Result<Self> {
        let whole = sub.is_whole();
        let distance = if whole || sub.boundary().is_empty() || pert.is_zero() {
            0
        } else {
            problem.graph().geodesic_distance(sub.boundary(), pert.support())?
        };
        Self::new(FamilyParams::from_problem(problem, 0, pert.norm()), distance, whole)
    }

    /// `||p|| gamma rho^d / (1 - rho)^2`, zero on the whole graph.
    pub fn bias_bound(&self) -> Option<f64> {
        self.valid.then(|| {
            if self.whole_graph {
                0.0
            } else {
                self.params.p_norm * self.gamma * self.rho.powi(self.boundary_distance as i32)
                    / (1.0 - self.rho).powi(2)
            }
        })
    }

    /// `||p|| c exp(-t / (2Q)) / (1 - rho)`
    pub fn variance_bound(&self, t: usize) -> Option<f64> {
        self.valid.then(|| {
            self.params.p_norm * self.c * (-(t as f64) / (2.0 * self.params.q)).exp() / (1.0 - self.rho)
        })
    }
}

/// Error of the localized solver split into its two sources.
#[derive(Debug, Clone)]
pub struct BiasVariance {
    pub t: usize,
    /// `x*(b + p)` minus the localized fixed point.
    pub bias: DVector<f64>,
    /// Localized fixed point minus the iterate after `t` steps.
    pub variance: DVector<f64>,
    /// `x*(b + p)` minus the iterate.
    pub error: DVector<f64>,
    pub budget: ErrorBudget,
}

impl BiasVariance {
    /// `max |error - (bias + variance)|`
    pub fn identity_deviation(&self) -> f64 {
        (&self.error - (&self.bias + &self.variance)).amax()
    }

    pub fn row(&self) -> BudgetRow {
        BudgetRow {
            t: self.t,
            bias: self.bias.norm(),
            bias_bound: self.budget.bias_bound(),
            variance: self.variance.norm(),
            variance_bound: self.budget.variance_bound(self.t),
            error: self.error.norm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetRow {
    pub t: usize,
    pub bias: f64,
    pub bias_bound: Option<f64>,
    pub variance: f64,
    pub variance_bound: Option<f64>,
    pub error: f64,
}

impl BudgetRow {
    pub fn to_csv(rows: &[BudgetRow]) -> String {
        let opt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
        write_csv(
            &["t", "bias", "bias_bound", "variance", "variance_bound", "error"],
            rows.iter().map(|r| {
                [
                    r.t.to_string(),
                    csv_float(r.bias),
                    opt(r.bias_bound),
                    csv_float(r.variance),
                    opt(r.variance_bound),
                    csv_float(r.error),
                ]
            }),
        )
    }
}

/// Decomposes the localized solver's error at each requested `t`.
///
/// The full-graph optimum comes from the exact solver, and the localized
/// fixed point from an exact solve of the subgraph problem, so neither
/// carries iteration error.
pub fn bias_variance_sweep(
    problem: &FlowProblem,
    pert: &PerturbationSpec,
    sub: &SubgraphSpec,
    times: &[usize],
    config: PgdConfig,
) -> Result<Vec<BiasVariance>> {
    if pert.support().iter().any(|&v| !sub.contains_vertex(v)) {
        return Err(Error::SupportOutsideSubgraph);
    }
    let budget = ErrorBudget::for_subgraph(problem, pert, sub)?;
    let x0 = problem.solve_exact()?.x;
    let zero = DVector::zeros(problem.n_edges());
    if pert.is_zero() {
        // x*(b) is the fixed point of every localized iteration
        return Ok(times
            .iter()
            .map(|&t| BiasVariance {
                t,
                bias: zero.clone(),
                variance: zero.clone(),
                error: zero.clone(),
                budget,
            })
            .collect());
    }
    let rhs = problem.b() + pert.vector();
    let target = problem.solve_at(&rhs)?.x;
    let config = PgdConfig { trace: false, ..config };
    let engine = LocalizedPgd::new(problem, sub.clone(), config)?;
    let run = engine.prepare(&x0, &rhs)?;
    let limit = if sub.is_whole() { target.clone() } else { engine.restricted_optimum(&run)? };
    let bias = &target - &limit;

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by_key(|&i| times[i]);
    let mut out: Vec<Option<BiasVariance>> = vec![None; times.len()];
    let mut x = x0;
    let mut done = 0;
    for i in order {
        while done < times[i] {
            x = engine.step(&run, &x)?;
            done += 1;
        }
        out[i] = Some(BiasVariance {
            t: times[i],
            bias: bias.clone(),
            variance: &limit - &x,
            error: &target - &x,
            budget,
        });
    }
    Ok(out.into_iter().map(|o| o.expect("every time visited")).collect())
}

pub fn bias_variance(problem: &FlowProblem, pert: &PerturbationSpec, sub: &SubgraphSpec, t: usize) -> Result<BiasVariance> {
    Ok(bias_variance_sweep(problem, pert, sub, &[t], PgdConfig::default())?.remove(0))
}

/// Radius and iteration count meeting an error target `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tuning {
    pub params: FamilyParams,
    pub epsilon: f64,
    pub r: usize,
    pub t: usize,
    pub rho: f64,
    pub c: f64,
    pub gamma: f64,
    pub nu_bias: f64,
    pub xi_bias: f64,
    pub nu_var: f64,
    pub xi_var: f64,
    /// `k+^r`, the growth bound on the ball size.
    pub vertex_bound: f64,
    /// `(k+^r)^omega t`
    pub predicted_cost: f64,
    /// Natural log of `predicted_cost`, finite even when the cost overflows.
    pub log_cost: f64,
}

/// Smallest `r, t >= 1` with `nu_bias exp(-xi_bias r) <= eps / 2` and
/// `nu_var exp(-xi_var t) <= eps / 2`.
pub fn tune(params: FamilyParams, eps: f64) -> Result<Tuning> {
    params.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {eps}")));
    }
    let rho = params.rho();
    if rho >= 1.0 || rho <= 0.0 {
        return Err(Error::BudgetInvalid(rho));
    }
    let c = params.c();
    let gamma = params.gamma();
    let nu_bias = params.p_norm * gamma / ((1.0 - rho).powi(2) * rho.powi(params.z as i32));
    let xi_bias = (1.0 / rho).ln();
    let nu_var = params.p_norm * c / (1.0 - rho);
    let xi_var = 1.0 / (2.0 * params.q);
    let ceil_at_least_one = |x: f64| if x.is_finite() && x > 1.0 { x.ceil() as usize } else { 1 };
    let r = ceil_at_least_one((2.0 * nu_bias / eps).ln() / xi_bias);
    let t = ceil_at_least_one((2.0 * nu_var / eps).ln() / xi_var);
    let k = params.k_max as f64;
    let vertex_bound = k.powi(r as i32);
    let log_cost = params.omega * r as f64 * k.ln() + (t as f64).ln();
    Ok(Tuning {
        params,
        epsilon: eps,
        r,
        t,
        rho,
        c,
        gamma,
        nu_bias,
        xi_bias,
        nu_var,
        xi_var,
        vertex_bound,
        predicted_cost: log_cost.exp(),
        log_cost,
    })
}
