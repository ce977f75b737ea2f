//! Decay of sensitivities with graph distance, and the error budget of the
//! localized solver.
//!
//! Every bound here takes a supremum over external flows, which is only
//! computable exactly when the costs are quadratic. [`ConstantsMode`]
//! selects how that supremum is handled and is carried into every report.

mod budget;
mod decay;
mod interlace;

pub use budget::{
    bias_variance, bias_variance_sweep, tune, BiasVariance, BudgetRow, ErrorBudget, FamilyParams, Tuning,
};
pub use decay::{
    measure_decay, point_to_set, set_to_point, DecayConstants, DecayContext, DecayReport, DecayRow, PairBound,
};
pub use interlace::{interlacing_bound, InterlacingReport};

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::graph::DirectedGraph;

/// How the supremum over external flows in the decay constants is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantsMode {
    /// Walk at the solved point. Exact for quadratic costs, where the
    /// edge weights do not depend on the flow.
    Exact,
    /// Worst case over a grid of points on the perturbation path.
    PathSup,
    /// Worst case over all weights allowed by the curvature bounds.
    GlobalEnvelope,
}

impl ConstantsMode {
    /// `Exact` for quadratic costs, `GlobalEnvelope` otherwise.
    pub fn default_for(quadratic: bool) -> Self {
        if quadratic {
            ConstantsMode::Exact
        } else {
            ConstantsMode::GlobalEnvelope
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConstantsMode::Exact => "exact",
            ConstantsMode::PathSup => "path-sup",
            ConstantsMode::GlobalEnvelope => "envelope",
        }
    }
}

/// Second largest eigenvalue in magnitude of the unweighted adjacency matrix.
pub fn adjacency_lambda(g: &DirectedGraph) -> f64 {
    let mut ev: Vec<f64> = SymmetricEigen::new(g.adjacency_matrix()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    match ev.as_slice() {
        [] | [_] => 0.0,
        [_, rest @ ..] => rest.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
    }
}

/// Floats in CSV output: 17 significant digits, `.` decimal separator.
pub fn csv_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a header and rows with the `csv` writer.
pub fn write_csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}
