use std::path::{Path, PathBuf};

use clap::Args;
use localflow::locality::{ConstantsMode, FamilyParams};
use localflow::{Error, Result};
use serde::{Deserialize, Serialize};

/// Flags shared by every subcommand. Each one overrides the same key of
/// the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON file with any of the options below; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub graph: Option<PathBuf>,
    #[arg(long, global = true)]
    pub costs: Option<PathBuf>,
    /// JSON object mapping vertex ids to external flow
    #[arg(long, global = true)]
    pub flow: Option<PathBuf>,
    /// JSON object mapping vertex ids to the flow perturbation
    #[arg(long, global = true)]
    pub perturbation: Option<PathBuf>,
    #[arg(long, global = true)]
    pub subgraph_center: Option<String>,
    #[arg(long, global = true)]
    pub radius: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; without it the main artifact goes to stdout
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Radius around the center that contains the perturbation
    #[arg(long, global = true)]
    pub z: Option<usize>,
    /// exact, path-sup or global-envelope
    #[arg(long, global = true)]
    pub constants: Option<String>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub w_minus: Option<f64>,
    #[arg(long, global = true)]
    pub w_plus: Option<f64>,
    /// complete, cycle, grid or regular
    #[arg(long, global = true)]
    pub kind: Option<String>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub rows: Option<usize>,
    #[arg(long, global = true)]
    pub cols: Option<usize>,
}

/// Resolved run configuration, embedded verbatim in every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    pub costs: Option<PathBuf>,
    pub flow: Option<PathBuf>,
    pub perturbation: Option<PathBuf>,
    pub subgraph_center: Option<String>,
    pub radius: Option<usize>,
    /// Radii swept by `reopt`; overrides `radius`.
    pub radii: Option<Vec<usize>>,
    pub iters: Option<usize>,
    /// Iteration counts reported by `reopt`; overrides `iters`.
    pub times: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tolerance: Option<f64>,
    pub epsilon: Option<f64>,
    pub omega: Option<f64>,
    pub z: Option<usize>,
    pub constants: Option<ConstantsMode>,
    pub samples: Option<usize>,
    pub w_minus: Option<f64>,
    pub w_plus: Option<f64>,
    /// Family parameters for `tune` when no graph is given.
    pub family: Option<FamilyParams>,
    pub kind: Option<String>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let base = match &flags.config {
            Some(path) => serde_json::from_str(&read(path)?)?,
            None => RunConfig::default(),
        };
        let constants = flags.constants.as_deref().map(parse_mode).transpose()?;
        let cfg = RunConfig {
            graph: flags.graph.clone().or(base.graph),
            costs: flags.costs.clone().or(base.costs),
            flow: flags.flow.clone().or(base.flow),
            perturbation: flags.perturbation.clone().or(base.perturbation),
            subgraph_center: flags.subgraph_center.clone().or(base.subgraph_center),
            radius: flags.radius.or(base.radius),
            radii: if flags.radius.is_some() { None } else { base.radii },
            iters: flags.iters.or(base.iters),
            times: if flags.iters.is_some() { None } else { base.times },
            seed: flags.seed.or(base.seed),
            out: flags.out.clone().or(base.out),
            tolerance: flags.tolerance.or(base.tolerance),
            epsilon: flags.epsilon.or(base.epsilon),
            omega: flags.omega.or(base.omega),
            z: flags.z.or(base.z),
            constants: constants.or(base.constants),
            samples: flags.samples.or(base.samples),
            w_minus: flags.w_minus.or(base.w_minus),
            w_plus: flags.w_plus.or(base.w_plus),
            family: base.family,
            kind: flags.kind.clone().or(base.kind),
            n: flags.n.or(base.n),
            k: flags.k.or(base.k),
            rows: flags.rows.or(base.rows),
            cols: flags.cols.or(base.cols),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if matches!(&self.radii, Some(r) if r.is_empty()) || matches!(&self.times, Some(t) if t.is_empty()) {
            return Err(Error::InvalidParameter("experiment grids must be nonempty".into()));
        }
        Ok(())
    }

    pub fn require<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("--{name} is required for this command")))
    }
}

fn parse_mode(s: &str) -> Result<ConstantsMode> {
    match s {
        "exact" => Ok(ConstantsMode::Exact),
        "path-sup" => Ok(ConstantsMode::PathSup),
        "envelope" | "global-envelope" => Ok(ConstantsMode::GlobalEnvelope),
        other => Err(Error::InvalidParameter(format!(
            "unknown constants mode `{other}` (expected exact, path-sup or global-envelope)"
        ))),
    }
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))
}
