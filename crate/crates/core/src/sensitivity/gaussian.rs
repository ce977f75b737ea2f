//! Conditional-mean identities for Gaussian vectors, used as independent
//! checks of the sensitivity formulas.
//!
//! If `X ~ N(0, Sigma)` then `E[X | AX = y]` is linear in `y` with matrix
//! `Sigma A^T (A Sigma A^T)^{-1}`, the same matrix that maps constraint
//! perturbations to optimal-point derivatives. Likewise, for a Gaussian with
//! precision `H`, conditioning on a block `B` gives a mean whose
//! derivative is `-H_II^{-1} H_IB`.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::laplacian::pseudoinverse;

const RANK_CUTOFF: f64 = 1e-12;

fn require_spd(m: &DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !m.is_square() || (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!("{what} must be symmetric")));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Largest deviation between `Sigma A^T (A Sigma A^T)^{-1}` and the
/// conditional-mean derivative `Y_XF Y_FF^+` of the stacked vector
/// `(X, AX)`.
pub fn gaussian_identity_check(sigma: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    require_spd(sigma, "covariance")?;
    let (k, n) = a.shape();
    if n != sigma.nrows() {
        return Err(Error::Dimension {
            expected: sigma.nrows(),
            got: n,
        });
    }
    let sv = SVD::new(a.clone(), false, false).singular_values;
    let rank = sv.iter().filter(|&&s| s > RANK_CUTOFF * sv.max()).count();
    if rank < k {
        return Err(Error::Singular(format!("constraint matrix has rank {rank} < {k}")));
    }

    let gram = a * sigma * a.transpose();
    let direct = sigma * a.transpose() * require_spd(&gram, "A Sigma A^T")?.inverse();

    // joint covariance of (X, AX)
    let mut joint = DMatrix::zeros(n + k, n + k);
    joint.view_mut((0, 0), (n, n)).copy_from(sigma);
    joint.view_mut((0, n), (n, k)).copy_from(&(sigma * a.transpose()));
    joint.view_mut((n, 0), (k, n)).copy_from(&(a * sigma));
    joint.view_mut((n, n), (k, k)).copy_from(&gram);
    let x_rows: Vec<usize> = (0..n).collect();
    let f_rows: Vec<usize> = (n..n + k).collect();
    let cross = submatrix(&joint, &x_rows, &f_rows);
    let block = submatrix(&joint, &f_rows, &f_rows);
    let conditional = cross * pseudoinverse(&block);

    Ok((direct - conditional).amax())
}

/// Two expressions for the response of interior coordinates to boundary
/// values, with a finite-difference cross-check.
#[derive(Debug, Clone)]
pub struct BoundaryCheck {
    /// `Sigma_IB Sigma_BB^{-1}` with `Sigma = H^{-1}`.
    pub covariance_form: DMatrix<f64>,
    /// `-H_II^{-1} H_IB`.
    pub precision_form: DMatrix<f64>,
    pub deviation: f64,
    /// Deviation of central differences of the conditional minimizer.
    pub finite_difference_deviation: f64,
}

pub fn boundary_sensitivity_check(h: &DMatrix<f64>, interior: &[usize], boundary: &[usize]) -> Result<BoundaryCheck> {
    let n = h.nrows();
    let mut seen = vec![0u8; n];
    for &i in interior.iter().chain(boundary) {
        if i >= n {
            return Err(Error::InvalidParameter(format!("index {i} out of range")));
        }
        seen[i] += 1;
    }
    if interior.is_empty() || boundary.is_empty() || seen.iter().any(|&c| c != 1) {
        return Err(Error::InvalidParameter(
            "interior and boundary must partition the coordinates".into(),
        ));
    }
    let sigma = require_spd(h, "precision matrix")?.inverse();
    let s_ib = submatrix(&sigma, interior, boundary);
    let s_bb = submatrix(&sigma, boundary, boundary);
    let covariance_form = s_ib * require_spd(&s_bb, "boundary covariance")?.inverse();

    let h_ii = require_spd(&submatrix(h, interior, interior), "interior precision")?;
    let h_ib = submatrix(h, interior, boundary);
    let precision_form = -h_ii.solve(&h_ib);

    // argmin over x_I of the quadratic form with x_B fixed, via LU
    let lu = submatrix(h, interior, interior).lu();
    let argmin = |xb: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        lu.solve(&(-&h_ib * xb))
            .ok_or_else(|| Error::Singular("interior block".into()))
    };
    let step = 1e-3;
    let mut fd = DMatrix::zeros(interior.len(), boundary.len());
    for j in 0..boundary.len() {
        let mut e = DMatrix::zeros(boundary.len(), 1);
        e[(j, 0)] = step;
        let col = (argmin(&e)? - argmin(&(-e))?) / (2.0 * step);
        fd.set_column(j, &col.column(0));
    }

    Ok(BoundaryCheck {
        deviation: (&covariance_form - &precision_form).amax(),
        finite_difference_deviation: (&fd - &precision_form).amax(),
        covariance_form,
        precision_form,
    })
}
