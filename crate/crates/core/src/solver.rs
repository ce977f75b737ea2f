//! Projected gradient descent and its localized variant.
//!
//! The localized method updates only the edges of a subgraph `(V', E')`,
//! keeping the flows on the remaining edges frozen. Those frozen flows act
//! as boundary conditions: the subgraph's edges must route
//! `b + p` on `V'` minus whatever the frozen edges already deliver there.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SubgraphSpec;
use crate::laplacian::pseudoinverse;
use crate::objective::ObjectiveBundle;
use crate::sensitivity::{FlowProblem, PerturbationSpec};

/// Tolerance on `||Ax - b||_inf` for points that must be feasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    /// Step size; `None` means `1 / beta`.
    pub step: Option<f64>,
    pub max_iterations: usize,
    /// Projected-gradient norm at which tolerance-mode runs stop.
    pub tolerance: f64,
    pub trace: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self {
            step: None,
            max_iterations: 10_000,
            tolerance: 1e-12,
            trace: true,
        }
    }
}

impl PgdConfig {
    pub fn step_size(&self, costs: &ObjectiveBundle) -> Result<f64> {
        let eta = self.step.unwrap_or(1.0 / costs.beta());
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be positive, got {eta}")));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(eta)
    }
}

fn check_feasible(problem: &FlowProblem, x: &DVector<f64>, b: &DVector<f64>) -> Result<()> {
    let r = (problem.incidence() * x - b).amax();
    if r > FEASIBILITY_TOLERANCE * b.amax().max(1.0) {
        return Err(Error::Infeasible(r));
    }
    Ok(())
}

/// One projected gradient step `x - eta (I - A^T (A A^T)^+ A) grad f(x)`.
pub fn pgd_step(problem: &FlowProblem, x: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    check_feasible(problem, x, problem.b())?;
    let g = problem.costs().gradient(x)?;
    Ok(x - eta * problem.project_kernel(&g))
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `||x_t - reference||_2`, or NaN without a reference.
    pub error_l2: f64,
    /// `||A x_t - (b + p)||_inf`.
    pub feasibility_residual: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

/// Projected gradient descent restricted to a subgraph, with the
/// projection data for that subgraph precomputed.
#[derive(Debug, Clone)]
pub struct LocalizedPgd<'a> {
    problem: &'a FlowProblem,
    sub: SubgraphSpec,
    free_edges: Vec<usize>,
    frozen_edges: Vec<usize>,
    outside_vertices: Vec<usize>,
    /// `A[V', E'^c]`
    cross: DMatrix<f64>,
    /// `A[V'^c, E'^c]`
    frozen_block: DMatrix<f64>,
    /// `A'^T (A' A'^T)^+`
    lift: DMatrix<f64>,
    /// `I - lift A'`
    projector: DMatrix<f64>,
    costs: ObjectiveBundle,
    eta: f64,
    config: PgdConfig,
}

/// Frozen data for one run: the starting point and the constant term
/// `lift (b_V' + p_V' - A[V', E'^c] x_{E'^c})`.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub x0: DVector<f64>,
    pub rhs: DVector<f64>,
    offset: DVector<f64>,
}

impl<'a> LocalizedPgd<'a> {
    pub fn new(problem: &'a FlowProblem, sub: SubgraphSpec, config: PgdConfig) -> Result<Self> {
        if sub.edges().is_empty() {
            return Err(Error::InvalidParameter("subgraph has no edges".into()));
        }
        let a = problem.incidence();
        let vertices = sub.vertices().to_vec();
        let free_edges = sub.edges().to_vec();
        let frozen_edges = sub.complement_edges();
        let outside_vertices = sub.complement_vertices();
        let block = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])]);
        let a_sub = block(&vertices, &free_edges);
        let cross = block(&vertices, &frozen_edges);
        let frozen_block = block(&outside_vertices, &frozen_edges);
        let lift = a_sub.transpose() * pseudoinverse(&(&a_sub * a_sub.transpose()));
        let projector = DMatrix::identity(free_edges.len(), free_edges.len()) - &lift * &a_sub;
        let costs = problem.costs().restrict(&free_edges)?;
        let eta = config.step_size(problem.costs())?;
        Ok(Self {
            problem,
            sub,
            free_edges,
            frozen_edges,
            outside_vertices,
            cross,
            frozen_block,
            lift,
            projector,
            costs,
            eta,
            config,
        })
    }

    /// The whole graph as the "subgraph": plain projected gradient descent.
    pub fn whole(problem: &'a FlowProblem, config: PgdConfig) -> Result<Self> {
        Self::new(problem, SubgraphSpec::whole(problem.graph()), config)
    }

    pub fn subgraph(&self) -> &SubgraphSpec {
        &self.sub
    }

    pub fn step_size(&self) -> f64 {
        self.eta
    }

    /// Validates the frozen boundary and computes the constant term for
    /// target flow `rhs = b + p`.
    pub fn prepare(&self, x0: &DVector<f64>, rhs: &DVector<f64>) -> Result<PreparedRun> {
        let (n, m) = (self.problem.n_vertices(), self.problem.n_edges());
        if x0.len() != m || rhs.len() != n {
            return Err(Error::Dimension {
                expected: m,
                got: x0.len(),
            });
        }
        let frozen = DVector::from_iterator(self.frozen_edges.len(), self.frozen_edges.iter().map(|&j| x0[j]));
        if !self.outside_vertices.is_empty() {
            let outside_rhs =
                DVector::from_iterator(self.outside_vertices.len(), self.outside_vertices.iter().map(|&v| rhs[v]));
            let mismatch = (&self.frozen_block * &frozen - outside_rhs).amax();
            if mismatch > FEASIBILITY_TOLERANCE * rhs.amax().max(1.0) {
                return Err(Error::BoundaryMismatch(mismatch));
            }
        }
        let inside_rhs = DVector::from_iterator(
            self.sub.vertices().len(),
            self.sub.vertices().iter().map(|&v| rhs[v]),
        );
        let offset = &self.lift * (inside_rhs - &self.cross * frozen);
        Ok(PreparedRun {
            x0: x0.clone(),
            rhs: rhs.clone(),
            offset,
        })
    }

    fn free_part(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free_edges.len(), self.free_edges.iter().map(|&j| x[j]))
    }

    /// `x_E' <- Pi' (x_E' - eta grad f'(x_E')) + offset`; other edges unchanged.
    pub fn step(&self, run: &PreparedRun, x: &DVector<f64>) -> Result<DVector<f64>> {
        let xe = self.free_part(x);
        let g = self.costs.gradient(&xe)?;
        let updated = &self.projector * (xe - self.eta * g) + &run.offset;
        let mut out = x.clone();
        for (k, &j) in self.free_edges.iter().enumerate() {
            out[j] = updated[k];
        }
        Ok(out)
    }

    /// Gradient mapping `||x - T'(x)|| / eta` on the free edges. On points
    /// that satisfy the subgraph constraints it equals the projected
    /// gradient norm; off them it also measures the infeasibility.
    pub fn projected_gradient_norm(&self, run: &PreparedRun, x: &DVector<f64>) -> Result<f64> {
        Ok((self.step(run, x)? - x).norm() / self.eta)
    }

    fn record(&self, run: &PreparedRun, iteration: usize, x: &DVector<f64>, reference: Option<&DVector<f64>>) -> IterationRecord {
        IterationRecord {
            iteration,
            error_l2: reference.map_or(f64::NAN, |r| (x - r).norm()),
            feasibility_residual: (self.problem.incidence() * x - &run.rhs).amax(),
        }
    }

    /// Exactly `t` iterations.
    pub fn run_fixed(&self, run: &PreparedRun, t: usize, reference: Option<&DVector<f64>>) -> Result<RunOutput> {
        let mut x = run.x0.clone();
        let mut trace = Vec::new();
        if self.config.trace {
            trace.push(self.record(run, 0, &x, reference));
        }
        for i in 1..=t {
            x = self.step(run, &x)?;
            if self.config.trace {
                trace.push(self.record(run, i, &x, reference));
            }
        }
        Ok(RunOutput { x, iterations: t, trace })
    }

    /// Iterates until the projected gradient norm drops below the
    /// configured tolerance or the iteration cap is reached.
    pub fn run_to_tolerance(&self, run: &PreparedRun, reference: Option<&DVector<f64>>) -> Result<RunOutput> {
        let mut x = run.x0.clone();
        let mut trace = Vec::new();
        if self.config.trace {
            trace.push(self.record(run, 0, &x, reference));
        }
        let mut iterations = 0;
        while self.projected_gradient_norm(run, &x)? > self.config.tolerance {
            if iterations >= self.config.max_iterations {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: self.projected_gradient_norm(run, &x)?,
                });
            }
            x = self.step(run, &x)?;
            iterations += 1;
            if self.config.trace {
                trace.push(self.record(run, iterations, &x, reference));
            }
        }
        Ok(RunOutput { x, iterations, trace })
    }

    /// The fixed point of the localized iteration: the exact optimum of the
    /// subgraph problem with the frozen flows as boundary data, embedded
    /// back into a full edge vector.
    pub fn restricted_optimum(&self, run: &PreparedRun) -> Result<DVector<f64>> {
        let graph = self.problem.graph().extract(&self.sub)?;
        let frozen = DVector::from_iterator(self.frozen_edges.len(), self.frozen_edges.iter().map(|&j| run.x0[j]));
        let inside_rhs = DVector::from_iterator(
            self.sub.vertices().len(),
            self.sub.vertices().iter().map(|&v| run.rhs[v]),
        );
        let local_b = inside_rhs - &self.cross * frozen;
        let local = FlowProblem::new(graph, self.costs.clone(), local_b)?;
        let xe = local.solve_exact()?.x;
        let mut out = run.x0.clone();
        for (k, &j) in self.free_edges.iter().enumerate() {
            out[j] = xe[k];
        }
        Ok(out)
    }
}

/// Warm start from `x*(b)` and run `t` localized steps towards the optimum
/// for `b + p`.
pub fn warm_start_reoptimize(
    problem: &FlowProblem,
    pert: &PerturbationSpec,
    sub: &SubgraphSpec,
    t: usize,
    config: PgdConfig,
) -> Result<RunOutput> {
    let x0 = problem.solve_exact()?.x;
    warm_start_from(problem, &x0, pert, sub, t, config, None)
}

/// As [`warm_start_reoptimize`] with a precomputed `x*(b)` and an optional
/// reference point for the error trace.
pub fn warm_start_from(
    problem: &FlowProblem,
    x0: &DVector<f64>,
    pert: &PerturbationSpec,
    sub: &SubgraphSpec,
    t: usize,
    config: PgdConfig,
    reference: Option<&DVector<f64>>,
) -> Result<RunOutput> {
    if pert.support().iter().any(|&v| !sub.contains_vertex(v)) {
        return Err(Error::SupportOutsideSubgraph);
    }
    let engine = LocalizedPgd::new(problem, sub.clone(), config)?;
    let rhs = problem.b() + pert.vector();
    let run = engine.prepare(x0, &rhs)?;
    engine.run_fixed(&run, t, reference)
}
