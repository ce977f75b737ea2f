//! Separable edge costs `f(x) = sum_e f_e(x_e)` with certified curvature.
//!
//! Each cost kind carries an interval on which `alpha <= f_e'' <= beta`
//! holds. Quadratic and log-cosh costs are certified on the whole line;
//! quartic costs only on their declared box. Evaluating outside the
//! interval is an error, never a silent clamp.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EdgeCost {
    /// `a x^2 / 2 + c x`
    Quadratic {
        a: f64,
        #[serde(default)]
        c: f64,
    },
    /// `a x^2 / 2 + q x^4 / 4` on `[-box, box]`.
    Quartic {
        a: f64,
        q: f64,
        #[serde(rename = "box")]
        half_width: f64,
    },
    /// `a x^2 / 2 + s log cosh(x)`
    LogCosh { a: f64, s: f64 },
}

fn log_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

impl EdgeCost {
    pub fn quadratic(a: f64) -> Self {
        EdgeCost::Quadratic { a, c: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        match *self {
            EdgeCost::Quadratic { a, c } if ok(a) && ok(c) && a > 0.0 => Ok(()),
            EdgeCost::Quartic { a, q, half_width }
                if ok(a) && ok(q) && ok(half_width) && a > 0.0 && q >= 0.0 && half_width > 0.0 =>
            {
                Ok(())
            }
            EdgeCost::LogCosh { a, s } if ok(a) && ok(s) && a > 0.0 && s >= 0.0 => Ok(()),
            other => Err(Error::InvalidCost(format!("{other:?}"))),
        }
    }

    /// Interval on which the curvature certificate holds.
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            EdgeCost::Quartic { half_width, .. } => (-half_width, half_width),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x >= lo && x <= hi
    }

    /// `(alpha, beta)` with `alpha <= f'' <= beta` on the domain.
    pub fn curvature_bounds(&self) -> (f64, f64) {
        match *self {
            EdgeCost::Quadratic { a, .. } => (a, a),
            EdgeCost::Quartic { a, q, half_width } => (a, a + 3.0 * q * half_width * half_width),
            EdgeCost::LogCosh { a, s } => (a, a + s),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            EdgeCost::Quadratic { a, c } => 0.5 * a * x * x + c * x,
            EdgeCost::Quartic { a, q, .. } => 0.5 * a * x * x + 0.25 * q * x.powi(4),
            EdgeCost::LogCosh { a, s } => 0.5 * a * x * x + s * log_cosh(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            EdgeCost::Quadratic { a, c } => a * x + c,
            EdgeCost::Quartic { a, q, .. } => a * x + q * x.powi(3),
            EdgeCost::LogCosh { a, s } => a * x + s * x.tanh(),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            EdgeCost::Quadratic { a, .. } => a,
            EdgeCost::Quartic { a, q, .. } => a + 3.0 * q * x * x,
            EdgeCost::LogCosh { a, s } => {
                let sech = 1.0 / x.cosh();
                a + s * sech * sech
            }
        }
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self, EdgeCost::Quadratic { .. })
    }
}

/// Per-edge costs aligned with the graph's edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBundle {
    costs: Vec<EdgeCost>,
    edge_ids: Vec<String>,
    alpha: f64,
    beta: f64,
}

impl ObjectiveBundle {
    pub fn new(costs: Vec<EdgeCost>, edge_ids: Vec<String>) -> Result<Self> {
        if costs.len() != edge_ids.len() {
            return Err(Error::Dimension {
                expected: edge_ids.len(),
                got: costs.len(),
            });
        }
        if costs.is_empty() {
            return Err(Error::InvalidCost("no edges".into()));
        }
        for c in &costs {
            c.validate()?;
        }
        let (alpha, beta) = costs.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), c| {
            let (a, b) = c.curvature_bounds();
            (lo.min(a), hi.max(b))
        });
        Ok(Self {
            costs,
            edge_ids,
            alpha,
            beta,
        })
    }

    /// The same cost on every edge of `g`.
    pub fn uniform(g: &DirectedGraph, cost: EdgeCost) -> Result<Self> {
        Self::new(
            vec![cost; g.n_edges()],
            g.edges().iter().map(|e| e.id.clone()).collect(),
        )
    }

    /// Restriction to a subset of edges, in the given order.
    pub fn restrict(&self, edges: &[usize]) -> Result<Self> {
        Self::new(
            edges.iter().map(|&j| self.costs[j]).collect(),
            edges.iter().map(|&j| self.edge_ids[j].clone()).collect(),
        )
    }

    pub fn costs(&self) -> &[EdgeCost] {
        &self.costs
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `Q = beta / alpha`.
    pub fn condition_number(&self) -> f64 {
        self.beta / self.alpha
    }

    pub fn is_quadratic(&self) -> bool {
        self.costs.iter().all(EdgeCost::is_quadratic)
    }

    pub fn check_domain(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.costs.len() {
            return Err(Error::Dimension {
                expected: self.costs.len(),
                got: x.len(),
            });
        }
        for (j, (c, &v)) in self.costs.iter().zip(x.iter()).enumerate() {
            if !c.contains(v) {
                let (lo, hi) = c.domain();
                return Err(Error::OutsideDomain {
                    edge: self.edge_ids[j].clone(),
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.costs.iter().zip(x.iter()).map(|(c, &v)| c.value(v)).sum())
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(x)?;
        Ok(self.map(x, EdgeCost::derivative))
    }

    pub fn hessian_diag(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(x)?;
        Ok(self.map(x, EdgeCost::second_derivative))
    }

    /// Inverse Hessian diagonal, `sigma_e = 1 / f_e''(x_e)`.
    pub fn sigma(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.hessian_diag(x)?.map(|h| 1.0 / h))
    }

    fn map(&self, x: &DVector<f64>, f: impl Fn(&EdgeCost, f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            self.costs.iter().zip(x.iter()).map(|(c, &v)| f(c, v)),
        )
    }
}

/// On-disk cost specification: a default plus per-edge overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<EdgeCost>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_edge: BTreeMap<String, EdgeCost>,
}

impl CostSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn resolve(&self, g: &DirectedGraph) -> Result<ObjectiveBundle> {
        for id in self.per_edge.keys() {
            g.edge_index(id)?;
        }
        let costs = g
            .edges()
            .iter()
            .map(|e| {
                self.per_edge
                    .get(&e.id)
                    .copied()
                    .or(self.default)
                    .ok_or_else(|| Error::InvalidCost(format!("no cost for edge `{}`", e.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        ObjectiveBundle::new(costs, g.edges().iter().map(|e| e.id.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("e{i}")).collect()
    }

    fn bundle(costs: Vec<EdgeCost>) -> ObjectiveBundle {
        let n = costs.len();
        ObjectiveBundle::new(costs, ids(n)).unwrap()
    }

    fn kinds() -> Vec<EdgeCost> {
        vec![
            EdgeCost::Quadratic { a: 1.5, c: -0.3 },
            EdgeCost::Quartic {
                a: 1.0,
                q: 0.5,
                half_width: 3.0,
            },
            EdgeCost::LogCosh { a: 0.7, s: 2.0 },
        ]
    }

    #[test]
    fn eval_examples() {
        let q = bundle(vec![EdgeCost::quadratic(1.0); 2]);
        assert_eq!(q.eval(&DVector::zeros(2)).unwrap(), 0.0);
        assert_eq!(q.eval(&DVector::from_vec(vec![1.0, 2.0])).unwrap(), 2.5);
        let quartic = bundle(vec![EdgeCost::Quartic {
            a: 1.0,
            q: 1.0,
            half_width: 2.0,
        }]);
        assert_eq!(quartic.eval(&DVector::from_vec(vec![1.0])).unwrap(), 0.75);
    }

    #[test]
    fn derivative_examples() {
        let b = bundle(vec![EdgeCost::quadratic(2.0)]);
        let x = DVector::from_vec(vec![3.0]);
        assert_eq!(b.gradient(&x).unwrap()[0], 6.0);
        assert_eq!(b.hessian_diag(&x).unwrap()[0], 2.0);
        let b = bundle(vec![EdgeCost::quadratic(2.0); 3]);
        assert_eq!(b.gradient(&DVector::zeros(3)).unwrap(), DVector::zeros(3));
    }

    #[test]
    fn outside_domain_names_edge() {
        let b = bundle(vec![
            EdgeCost::quadratic(1.0),
            EdgeCost::Quartic {
                a: 1.0,
                q: 1.0,
                half_width: 1.0,
            },
        ]);
        let err = b.eval(&DVector::from_vec(vec![5.0, 1.5])).unwrap_err();
        assert!(matches!(err, Error::OutsideDomain { ref edge, .. } if edge == "e1"));
        assert!(b.gradient(&DVector::from_vec(vec![0.0, -1.01])).is_err());
    }

    #[test]
    fn global_constants() {
        let b = bundle(kinds());
        assert_eq!(b.alpha(), 0.7);
        assert_eq!(b.beta(), 1.0 + 3.0 * 0.5 * 9.0);
        assert!(b.condition_number() >= 1.0);
        let lc = bundle(vec![EdgeCost::LogCosh { a: 2.0, s: 3.0 }]);
        assert_eq!((lc.alpha(), lc.beta()), (2.0, 5.0));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(ObjectiveBundle::new(vec![EdgeCost::quadratic(0.0)], ids(1)).is_err());
        assert!(ObjectiveBundle::new(vec![EdgeCost::LogCosh { a: 1.0, s: -1.0 }], ids(1)).is_err());
        assert!(ObjectiveBundle::new(
            vec![EdgeCost::Quartic {
                a: 1.0,
                q: 1.0,
                half_width: 0.0
            }],
            ids(1)
        )
        .is_err());
    }

    #[test]
    fn log_cosh_is_stable_for_large_arguments() {
        let c = EdgeCost::LogCosh { a: 1.0, s: 1.0 };
        let v = c.value(800.0);
        assert!(v.is_finite());
        assert_relative_eq!(v, 0.5 * 800.0 * 800.0 + 800.0 - std::f64::consts::LN_2);
    }

    // Central differences of the value and of the derivative, at seeded points.
    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for c in kinds() {
            for _ in 0..100 {
                let x: f64 = rng.gen_range(-2.5..2.5);
                let h = 1e-5;
                let fd1 = (c.value(x + h) - c.value(x - h)) / (2.0 * h);
                let fd2 = (c.derivative(x + h) - c.derivative(x - h)) / (2.0 * h);
                let d1 = c.derivative(x);
                let d2 = c.second_derivative(x);
                assert!((fd1 - d1).abs() <= 1e-6 * d1.abs().max(1.0), "{c:?} x={x}");
                assert!((fd2 - d2).abs() <= 1e-6 * d2.abs().max(1.0), "{c:?} x={x}");
                let (lo, hi) = c.curvature_bounds();
                assert!(d2 >= lo && d2 <= hi);
            }
        }
    }

    #[test]
    fn cost_spec_resolution() {
        let g = DirectedGraph::new(["1", "2", "3"], [("a", "1", "2"), ("b", "2", "3")]).unwrap();
        let spec = CostSpec::from_json(
            r#"{"default": {"kind": "quadratic", "a": 1.0},
                "per_edge": {"b": {"kind": "log-cosh", "a": 1.0, "s": 0.5}}}"#,
        )
        .unwrap();
        let bundle = spec.resolve(&g).unwrap();
        assert_eq!(bundle.costs()[0], EdgeCost::quadratic(1.0));
        assert_eq!(bundle.costs()[1], EdgeCost::LogCosh { a: 1.0, s: 0.5 });

        let bad = CostSpec::from_json(r#"{"per_edge": {"zz": {"kind": "quadratic", "a": 1.0}}}"#)
            .unwrap();
        assert!(matches!(bad.resolve(&g), Err(Error::UnknownEdge(_))));
        let missing = CostSpec::from_json(r#"{"per_edge": {"a": {"kind": "quadratic", "a": 1.0}}}"#)
            .unwrap();
        assert!(missing.resolve(&g).is_err());
    }
}
