use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::{adjacency_lambda, csv_float, write_csv, ConstantsMode};
use crate::error::{Error, Result};
use crate::graph::DirectedGraph;
use crate::sensitivity::{FlowProblem, PerturbationSpec, SensitivityOperator};

/// Offsets `eps` along `b + eps p` sampled in path-sup mode.
const PATH_GRID: [f64; 9] = [-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0];

/// Walk quantities entering the decay bounds: an upper bound on every
/// edge weight, a lower bound on every vertex degree, and an upper bound
/// on the walk's second eigenvalue in magnitude.
#[derive(Debug, Clone, Serialize)]
pub struct DecayConstants {
    pub mode: ConstantsMode,
    pub lambda: f64,
    #[serde(skip)]
    weight_upper: DVector<f64>,
    #[serde(skip)]
    degree_lower: DVector<f64>,
}

impl DecayConstants {
    /// `pert` defines the path in path-sup mode and is ignored otherwise.
    pub fn compute(problem: &FlowProblem, pert: Option<&PerturbationSpec>, mode: ConstantsMode) -> Result<Self> {
        let g = problem.graph();
        let (weight_upper, degree_lower, lambda) = match mode {
            ConstantsMode::Exact => at_point(problem, problem.b())?,
            ConstantsMode::PathSup => {
                let dir = pert.map(|p| p.vector().clone()).unwrap_or_else(|| DVector::zeros(g.n_vertices()));
                let samples = PATH_GRID
                    .par_iter()
                    .map(|&eps| at_point(problem, &(problem.b() + eps * &dir)))
                    .collect::<Result<Vec<_>>>()?;
                samples.into_iter().reduce(|(w, d, l), (w2, d2, l2)| {
                    (w.zip_map(&w2, f64::max), d.zip_map(&d2, f64::min), l.max(l2))
                })
                .expect("grid is nonempty")
            }
            ConstantsMode::GlobalEnvelope => {
                let costs = problem.costs().costs();
                let w = DVector::from_iterator(costs.len(), costs.iter().map(|c| 1.0 / c.curvature_bounds().0));
                let mut d = DVector::zeros(g.n_vertices());
                for (e, c) in g.edges().iter().zip(costs) {
                    let lo = 1.0 / c.curvature_bounds().1;
                    d[e.tail] += lo;
                    d[e.head] += lo;
                }
                let q = problem.costs().condition_number();
                let (k_min, k_max) = g.degree_range();
                let (k_min, k_max) = (k_min as f64, k_max as f64);
                let lambda = q * k_max / k_min - 1.0 + q / k_min * adjacency_lambda(g);
                (w, d, lambda)
            }
        };
        // eigenvalue -1 of a bipartite walk comes out within rounding of 1
        if lambda >= 1.0 - 1e-10 {
            return Err(Error::NoSpectralGap(lambda));
        }
        Ok(Self {
            mode,
            lambda,
            weight_upper,
            degree_lower,
        })
    }

    /// `lambda^d / (1 - lambda)`, with `lambda^0 = 1`.
    pub fn decay_factor(&self, distance: usize) -> f64 {
        self.lambda.powi(distance as i32) / (1.0 - self.lambda)
    }

    /// Constant of the set bound for edges spanning `vf` and perturbation
    /// support `z`.
    ///
    /// The usual form divides by `min_{V_F} d`; the estimate of the walk
    /// sum actually yields `sqrt(min_{V_F} d * min_Z d)` there. The larger
    /// of the two is used so the bound stays sound when `Z` carries
    /// lighter vertices than `V_F`.
    pub fn set_constant(&self, g: &DirectedGraph, vf: &[usize], z: &[usize]) -> f64 {
        let d_f = min_over(&self.degree_lower, vf);
        let d_z = min_over(&self.degree_lower, z);
        let spread = (2.0 * max_inner_degree(g, vf) as f64).sqrt();
        spread * max_weight_within(g, &self.weight_upper, vf) * (1.0 / d_f).max(1.0 / (d_f * d_z).sqrt())
    }

    /// Constant of the point bound for edge `f` and edge set spanning `vf`.
    pub fn point_constant(&self, g: &DirectedGraph, f: usize, vf: &[usize]) -> f64 {
        let e = g.edge(f);
        let d_end = self.degree_lower[e.tail].min(self.degree_lower[e.head]);
        let spread = (2.0 * max_inner_degree(g, vf) as f64).sqrt();
        self.weight_upper[f] * spread / (d_end.sqrt() * min_over(&self.degree_lower, vf).sqrt())
    }
}

fn at_point(problem: &FlowProblem, b: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let x = problem.solve_at(b)?.x;
    let sigma = problem.costs().sigma(&x)?;
    let walk = problem.walk_at(&x)?;
    Ok((sigma, walk.degrees().clone(), walk.spectrum().lambda()))
}

fn min_over(v: &DVector<f64>, set: &[usize]) -> f64 {
    set.iter().map(|&i| v[i]).fold(f64::INFINITY, f64::min)
}

fn max_inner_degree(g: &DirectedGraph, set: &[usize]) -> usize {
    let mut inside = vec![false; g.n_vertices()];
    set.iter().for_each(|&v| inside[v] = true);
    set.iter()
        .map(|&v| g.neighbors(v).filter(|&w| inside[w]).count())
        .max()
        .unwrap_or(0)
}

fn max_weight_within(g: &DirectedGraph, w: &DVector<f64>, set: &[usize]) -> f64 {
    let mut inside = vec![false; g.n_vertices()];
    set.iter().for_each(|&v| inside[v] = true);
    g.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| inside[e.tail] && inside[e.head])
        .map(|(j, _)| w[j])
        .fold(0.0, f64::max)
}

fn check_edge_set(g: &DirectedGraph, f: &[usize]) -> Result<()> {
    if f.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(&j) = f.iter().find(|&&j| j >= g.n_edges()) {
        return Err(Error::InvalidParameter(format!("edge index {j} out of range")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub set_index: usize,
    pub set_size: usize,
    pub distance: usize,
    pub measured: f64,
    pub bound: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub constants_mode: ConstantsMode,
    pub lambda: f64,
    pub perturbation_norm: f64,
    pub rows: Vec<DecayRow>,
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        write_csv(
            &["distance", "measured", "bound", "constants_mode"],
            self.rows.iter().map(|r| {
                [
                    r.distance.to_string(),
                    csv_float(r.measured),
                    csv_float(r.bound),
                    self.constants_mode.label().to_string(),
                ]
            }),
        )
    }

    /// Largest `measured - bound`; nonpositive when every bound holds.
    pub fn worst_excess(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.measured - r.bound)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Least-squares slope of `log(measured)` against distance, over rows
    /// with a positive measurement.
    pub fn log_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.measured > 0.0)
            .map(|r| (r.distance as f64, r.measured.ln()))
            .collect();
        let n = pts.len() as f64;
        if pts.len() < 2 {
            return None;
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    /// Median measurement per distance, in increasing distance order.
    pub fn medians_by_distance(&self) -> Vec<(usize, f64)> {
        let mut by: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
        for r in &self.rows {
            by.entry(r.distance).or_default().push(r.measured);
        }
        by.into_iter()
            .map(|(d, mut v)| {
                v.sort_by(f64::total_cmp);
                let m = v.len();
                let med = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
                (d, med)
            })
            .collect()
    }
}

/// Solved operator and decay constants shared by many bound evaluations.
#[derive(Debug, Clone)]
pub struct DecayContext<'a> {
    problem: &'a FlowProblem,
    operator: SensitivityOperator,
    constants: DecayConstants,
}

/// Measured value and bound for one (edge, edge set) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairBound {
    pub distance: usize,
    pub measured: f64,
    pub bound: f64,
    pub constant: f64,
}

impl<'a> DecayContext<'a> {
    pub fn new(problem: &'a FlowProblem, pert: Option<&PerturbationSpec>, mode: ConstantsMode) -> Result<Self> {
        Ok(Self {
            problem,
            operator: problem.sensitivity_operator()?,
            constants: DecayConstants::compute(problem, pert, mode)?,
        })
    }

    pub fn constants(&self) -> &DecayConstants {
        &self.constants
    }

    pub fn operator(&self) -> &SensitivityOperator {
        &self.operator
    }

    /// Response of the edges in `f_set` to the dipole on edge `e`.
    pub fn set_to_point(&self, e: usize, f_set: &[usize]) -> Result<PairBound> {
        let g = self.problem.graph();
        check_edge_set(g, f_set)?;
        check_edge_set(g, &[e])?;
        let edge = g.edge(e);
        let pert = PerturbationSpec::dipole(g.n_vertices(), edge.tail, edge.head)?;
        let dx = self.operator.apply(pert.vector())?;
        let measured = f_set.iter().map(|&j| dx[j] * dx[j]).sum::<f64>().sqrt();
        let vf = g.induced_vertex_set(f_set);
        let ends = [edge.tail, edge.head];
        let distance = g.geodesic_distance(&vf, &ends)?;
        let constant = self.constants.set_constant(g, &vf, &ends);
        Ok(PairBound {
            distance,
            measured,
            bound: std::f64::consts::SQRT_2 * constant * self.constants.decay_factor(distance),
            constant,
        })
    }

    /// Response of edge `f` to the dipoles on every edge of `f_set`.
    pub fn point_to_set(&self, f: usize, f_set: &[usize]) -> Result<PairBound> {
        let g = self.problem.graph();
        check_edge_set(g, f_set)?;
        check_edge_set(g, &[f])?;
        let r = self.operator.edge_potential(f);
        let measured = f_set
            .iter()
            .map(|&j| {
                let e = g.edge(j);
                (r[e.tail] - r[e.head]).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        let vf = g.induced_vertex_set(f_set);
        let edge = g.edge(f);
        let distance = g.geodesic_distance(&vf, &[edge.tail, edge.head])?;
        let constant = self.constants.point_constant(g, f, &vf);
        Ok(PairBound {
            distance,
            measured,
            bound: std::f64::consts::SQRT_2 * constant * self.constants.decay_factor(distance),
            constant,
        })
    }
}

/// Norm of the optimal-flow derivative on each edge set against the decay
/// bound `c lambda^d / (1 - lambda) ||p||`.
pub fn measure_decay(
    problem: &FlowProblem,
    pert: &PerturbationSpec,
    f_sets: &[Vec<usize>],
    mode: ConstantsMode,
) -> Result<DecayReport> {
    let g = problem.graph();
    if pert.is_zero() {
        return Err(Error::InvalidParameter("decay needs a nonzero perturbation".into()));
    }
    f_sets.iter().try_for_each(|f| check_edge_set(g, f))?;
    let constants = DecayConstants::compute(problem, Some(pert), mode)?;
    let dx = problem.directional_derivative(pert, 0.0)?;
    let p_norm = pert.norm();
    let rows = f_sets
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let vf = g.induced_vertex_set(f);
            let distance = g.geodesic_distance(&vf, pert.support())?;
            let measured = f.iter().map(|&j| dx[j] * dx[j]).sum::<f64>().sqrt();
            let constant = constants.set_constant(g, &vf, pert.support());
            Ok(DecayRow {
                set_index: i,
                set_size: f.len(),
                distance,
                measured,
                bound: constant * constants.decay_factor(distance) * p_norm,
                constant,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecayReport {
        constants_mode: mode,
        lambda: constants.lambda,
        perturbation_norm: p_norm,
        rows,
    })
}

pub fn set_to_point(problem: &FlowProblem, e: usize, f_set: &[usize], mode: ConstantsMode) -> Result<PairBound> {
    DecayContext::new(problem, None, mode)?.set_to_point(e, f_set)
}

pub fn point_to_set(problem: &FlowProblem, f: usize, f_set: &[usize], mode: ConstantsMode) -> Result<PairBound> {
    DecayContext::new(problem, None, mode)?.point_to_set(f, f_set)
}
