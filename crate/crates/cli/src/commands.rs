use std::collections::BTreeMap;
use std::path::Path;

use localflow::graph::{generate, DirectedGraph, GraphKind, SubgraphSpec};
use localflow::locality::{
    bias_variance_sweep, csv_float, interlacing_bound, measure_decay, tune, write_csv, ConstantsMode, FamilyParams,
};
use localflow::objective::CostSpec;
use localflow::sensitivity::{FlowProblem, PerturbationSpec};
use localflow::solver::{LocalizedPgd, PgdConfig};
use localflow::{Error, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{read, RunConfig};

/// A named output file.
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

impl Artifact {
    fn json(name: &str, value: &Value) -> Self {
        Self {
            name: name.to_string(),
            contents: serde_json::to_string_pretty(value).expect("report serializes") + "\n",
        }
    }

    fn text(name: &str, contents: String) -> Self {
        Self {
            name: name.to_string(),
            contents,
        }
    }
}

fn load_graph(cfg: &RunConfig) -> Result<DirectedGraph> {
    DirectedGraph::from_json(&read(RunConfig::require(&cfg.graph, "graph")?)?)
}

fn load_vertex_vector(g: &DirectedGraph, path: &Path) -> Result<DVector<f64>> {
    let entries: BTreeMap<String, f64> = serde_json::from_str(&read(path)?)?;
    let mut v = DVector::zeros(g.n_vertices());
    for (id, value) in entries {
        v[g.vertex_index(&id)?] = value;
    }
    Ok(v)
}

fn load_problem(cfg: &RunConfig) -> Result<FlowProblem> {
    let g = load_graph(cfg)?;
    let costs = CostSpec::from_json(&read(RunConfig::require(&cfg.costs, "costs")?)?)?.resolve(&g)?;
    let b = match &cfg.flow {
        Some(path) => load_vertex_vector(&g, path)?,
        None => DVector::zeros(g.n_vertices()),
    };
    FlowProblem::new(g, costs, b)
}

fn load_perturbation(cfg: &RunConfig, g: &DirectedGraph, required: bool) -> Result<PerturbationSpec> {
    match &cfg.perturbation {
        Some(path) => PerturbationSpec::new(load_vertex_vector(g, path)?),
        None if required => Err(Error::InvalidParameter("--perturbation is required for this command".into())),
        None => Ok(PerturbationSpec::none(g.n_vertices())),
    }
}

fn pgd_config(cfg: &RunConfig) -> PgdConfig {
    let mut config = PgdConfig {
        trace: false,
        ..PgdConfig::default()
    };
    if let Some(tol) = cfg.tolerance {
        config.tolerance = tol;
    }
    config
}

fn per_edge(g: &DirectedGraph, x: &DVector<f64>) -> BTreeMap<String, f64> {
    g.edges().iter().zip(x.iter()).map(|(e, &v)| (e.id.clone(), v)).collect()
}

fn per_vertex(g: &DirectedGraph, x: &DVector<f64>) -> BTreeMap<String, f64> {
    g.vertex_ids().iter().cloned().zip(x.iter().copied()).collect()
}

/// Config and index mapping shared by every report.
fn header(command: &str, cfg: &RunConfig, g: Option<&DirectedGraph>) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(command));
    m.insert("config".into(), json!(cfg));
    if let Some(g) = g {
        m.insert("vertices".into(), json!(g.vertex_ids()));
        m.insert("edges".into(), json!(g.edges().iter().map(|e| &e.id).collect::<Vec<_>>()));
    }
    m
}

fn constants_mode(cfg: &RunConfig, problem: &FlowProblem) -> ConstantsMode {
    cfg.constants
        .unwrap_or_else(|| ConstantsMode::default_for(problem.costs().is_quadratic()))
}

pub fn solve(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let problem = load_problem(cfg)?;
    let g = problem.graph();
    let sol = problem.solve_exact()?;
    let mut report = header("solve", cfg, Some(g));
    report.insert("flow".into(), json!(per_edge(g, &sol.x)));
    report.insert("potentials".into(), json!(per_vertex(g, &sol.potentials)));
    report.insert(
        "residuals".into(),
        json!({"feasibility": sol.residuals.feasibility, "stationarity": sol.residuals.stationarity}),
    );
    report.insert("iterations".into(), json!(sol.iterations));
    Ok(vec![Artifact::json("solution.json", &Value::Object(report))])
}

pub fn sensitivity(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let problem = load_problem(cfg)?;
    let g = problem.graph();
    let pert = load_perturbation(cfg, g, true)?;
    let dx = problem.directional_derivative(&pert, 0.0)?;
    let walk_form = match problem.directional_derivative_series(&pert, 0.0) {
        Ok(series) => Some((series - &dx).amax()),
        Err(Error::Periodic) => None,
        Err(e) => return Err(e),
    };
    let mut report = header("sensitivity", cfg, Some(g));
    report.insert("derivative".into(), json!(per_edge(g, &dx)));
    report.insert("walk_form_deviation".into(), json!(walk_form));
    let csv = write_csv(
        &["edge", "derivative"],
        g.edges().iter().zip(dx.iter()).map(|(e, &v)| [e.id.clone(), csv_float(v)]),
    );
    Ok(vec![
        Artifact::json("sensitivity.json", &Value::Object(report)),
        Artifact::text("sensitivity.csv", csv),
    ])
}

pub fn decay(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let problem = load_problem(cfg)?;
    let g = problem.graph();
    let pert = load_perturbation(cfg, g, true)?;
    let mode = constants_mode(cfg, &problem);
    let sets: Vec<Vec<usize>> = (0..g.n_edges()).map(|j| vec![j]).collect();
    let report = measure_decay(&problem, &pert, &sets, mode)?;
    let mut summary = header("decay", cfg, Some(g));
    summary.insert("constants_mode".into(), json!(mode.label()));
    summary.insert("lambda".into(), json!(report.lambda));
    summary.insert("perturbation_norm".into(), json!(report.perturbation_norm));
    summary.insert("worst_excess".into(), json!(report.worst_excess()));
    summary.insert("log_slope".into(), json!(report.log_slope()));
    Ok(vec![
        Artifact::text("decay.csv", report.to_csv()),
        Artifact::json("decay.json", &Value::Object(summary)),
    ])
}

pub fn reopt(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let problem = load_problem(cfg)?;
    let g = problem.graph();
    let pert = load_perturbation(cfg, g, false)?;
    let config = pgd_config(cfg);

    let radii: Vec<Option<usize>> = match (&cfg.radii, cfg.radius) {
        (Some(rs), _) => rs.iter().copied().map(Some).collect(),
        (None, Some(r)) => vec![Some(r)],
        (None, None) => vec![None],
    };
    let center = match &cfg.subgraph_center {
        Some(id) => Some(g.vertex_index(id)?),
        None if radii.iter().any(Option::is_some) => {
            return Err(Error::InvalidParameter("--radius needs --subgraph-center".into()))
        }
        None => None,
    };
    let subgraph = |r: Option<usize>| match (center, r) {
        (Some(c), Some(r)) => g.ball_subgraph(c, r),
        _ => SubgraphSpec::whole(g),
    };

    let times: Vec<usize> = match (&cfg.times, cfg.iters) {
        (Some(ts), _) => ts.clone(),
        (None, Some(t)) => (1..=t.max(1)).collect(),
        (None, None) => {
            // iterations the widest subgraph needs to reach the tolerance
            let widest = radii.iter().copied().max().flatten();
            let engine = LocalizedPgd::new(&problem, subgraph(widest), config)?;
            let x0 = problem.solve_exact()?.x;
            let run = engine.prepare(&x0, &(problem.b() + pert.vector()))?;
            (1..=engine.run_to_tolerance(&run, None)?.iterations.max(1)).collect()
        }
    };

    let sweeps = radii
        .par_iter()
        .map(|&r| {
            let sub = subgraph(r);
            bias_variance_sweep(&problem, &pert, &sub, &times, config).map(|rows| (r, sub, rows))
        })
        .collect::<Result<Vec<_>>>()?;

    let label = |r: Option<usize>| r.map_or_else(|| "whole".to_string(), |r| r.to_string());
    let opt = |v: Option<f64>| v.map(csv_float).unwrap_or_default();
    let mut csv_rows = Vec::new();
    let mut summaries = Vec::new();
    for (r, sub, rows) in &sweeps {
        for row in rows {
            let b = row.row();
            csv_rows.push([
                label(*r),
                b.t.to_string(),
                csv_float(b.bias),
                opt(b.bias_bound),
                csv_float(b.variance),
                opt(b.variance_bound),
                csv_float(b.error),
                csv_float(row.identity_deviation()),
            ]);
        }
        let last = rows.last().expect("times are nonempty");
        let budget = last.budget;
        summaries.push(json!({
            "radius": r,
            "whole_graph": sub.is_whole(),
            "subgraph_edges": sub.edges().len(),
            "boundary_distance": budget.boundary_distance,
            "t": last.t,
            "row": last.row(),
            "bounds": {
                "rho": budget.rho,
                "c": budget.c,
                "gamma": budget.gamma,
                "valid": budget.valid,
                "source": "degree and adjacency spectrum of the full graph",
            },
        }));
    }
    let csv = write_csv(
        &["radius", "t", "bias", "bias_bound", "variance", "variance_bound", "error", "identity_deviation"],
        csv_rows,
    );
    let mut report = header("reopt", cfg, Some(g));
    report.insert("perturbation_norm".into(), json!(pert.norm()));
    report.insert("runs".into(), Value::Array(summaries));
    Ok(vec![
        Artifact::json("reopt.json", &Value::Object(report)),
        Artifact::text("reopt.csv", csv),
    ])
}

pub fn tune_cmd(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let eps = *RunConfig::require(&cfg.epsilon, "epsilon")?;
    let (mut params, source, graph) = match (&cfg.family, &cfg.graph) {
        (Some(f), None) => (*f, "config family", None),
        (None, Some(_)) => {
            let problem = load_problem(cfg)?;
            let pert = load_perturbation(cfg, problem.graph(), false)?;
            let p_norm = if pert.is_zero() { 1.0 } else { pert.norm() };
            let params = FamilyParams::from_problem(&problem, cfg.z.unwrap_or(1), p_norm);
            (params, "graph and costs", Some(problem.graph().clone()))
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter("give either a family or a graph, not both".into()))
        }
        (None, None) => return Err(Error::InvalidParameter("tune needs --graph or a family in --config".into())),
    };
    if let Some(z) = cfg.z {
        params.z = z;
    }
    if let Some(omega) = cfg.omega {
        params.omega = omega;
    }
    let tuning = tune(params, eps)?;
    let mut report = header("tune", cfg, graph.as_ref());
    report.insert("parameter_source".into(), json!(source));
    report.insert("tuning".into(), json!(tuning));
    Ok(vec![Artifact::json("tune.json", &Value::Object(report))])
}

pub fn interlace(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let g = load_graph(cfg)?;
    let seed = *RunConfig::require(&cfg.seed, "seed")?;
    let samples = cfg.samples.unwrap_or(100);
    let w_minus = cfg.w_minus.unwrap_or(1.0);
    let w_plus = cfg.w_plus.unwrap_or(w_minus);
    let center = cfg.subgraph_center.as_deref().map(|id| g.vertex_index(id)).transpose()?;

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let plans: Vec<(usize, usize, u64)> = (0..samples)
        .map(|_| {
            let c = center.unwrap_or_else(|| master.gen_range(0..g.n_vertices()));
            let r = cfg.radius.unwrap_or_else(|| master.gen_range(1..=3));
            (c, r, master.gen())
        })
        .collect();
    let reports = plans
        .par_iter()
        .map(|&(c, r, s)| {
            let sub = g.ball_subgraph(c, r);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let w = DVector::from_fn(sub.edges().len(), |_, _| {
                if w_plus > w_minus {
                    rng.gen_range(w_minus..=w_plus)
                } else {
                    w_minus
                }
            });
            interlacing_bound(&g, &sub, &w, w_minus, w_plus)
        })
        .collect::<Result<Vec<_>>>()?;

    let csv = write_csv(
        &[
            "sample",
            "center",
            "radius",
            "lambda_prime",
            "bound",
            "subgraph_degree_bound",
            "holds",
            "subgraph_degree_holds",
        ],
        plans.iter().zip(&reports).enumerate().map(|(i, (&(c, r, _), rep))| {
            [
                i.to_string(),
                g.vertex_id(c).to_string(),
                r.to_string(),
                csv_float(rep.lambda_prime),
                csv_float(rep.bound),
                csv_float(rep.subgraph_degree_bound),
                rep.holds.to_string(),
                rep.subgraph_degree_holds.to_string(),
            ]
        }),
    );
    let mut summary = header("interlace", cfg, Some(&g));
    summary.insert("samples".into(), json!(samples));
    summary.insert("holds".into(), json!(reports.iter().filter(|r| r.holds).count()));
    summary.insert(
        "subgraph_degree_holds".into(),
        json!(reports.iter().filter(|r| r.subgraph_degree_holds).count()),
    );
    Ok(vec![
        Artifact::text("interlace.csv", csv),
        Artifact::json("interlace.json", &Value::Object(summary)),
    ])
}

pub fn generate_cmd(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let need = |v: Option<usize>, name: &str| RunConfig::require(&v, name).copied();
    let kind = match RunConfig::require(&cfg.kind, "kind")?.as_str() {
        "complete" => GraphKind::Complete { n: need(cfg.n, "n")? },
        "cycle" => GraphKind::Cycle { n: need(cfg.n, "n")? },
        "grid" => GraphKind::Grid2d {
            rows: need(cfg.rows, "rows")?,
            cols: need(cfg.cols, "cols")?,
        },
        "regular" => GraphKind::RandomRegular {
            n: need(cfg.n, "n")?,
            k: need(cfg.k, "k")?,
        },
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown graph kind `{other}` (expected complete, cycle, grid or regular)"
            )))
        }
    };
    let seed = match kind {
        GraphKind::RandomRegular { .. } => *RunConfig::require(&cfg.seed, "seed")?,
        _ => cfg.seed.unwrap_or(0),
    };
    let g = generate(kind, seed)?;
    Ok(vec![Artifact::text("graph.json", g.to_json() + "\n")])
}
