//! Dense linear algebra used by the estimators: ridge-regularized symmetric
//! solves, general solves with a singularity screen, and the Moore-Penrose
//! pseudoinverse.
//!
//! Matrices are `nalgebra` types. Cholesky and LU come from `nalgebra`; the
//! SVD and symmetric eigendecompositions come from `faer`, whose
//! implementations stay accurate on the exactly rank-deficient block
//! matrices the delta kernel produces.

use faer::{Mat, Side};
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{KbrError, Result};

/// Smallest eigenvalue of `A + rho I`, relative to `|A + rho I|_F`, that a
/// ridge solve accepts.
pub const RIDGE_SINGULARITY_RTOL: f64 = 1e-14;

/// Smallest LU pivot, relative to the largest absolute entry, that a general
/// solve accepts.
pub const LU_SINGULARITY_RTOL: f64 = 1e-14;

/// Default pseudoinverse cutoff factor; the relative tolerance is
/// `PINV_DEFAULT_FACTOR * max(m, n)`.
pub const PINV_DEFAULT_FACTOR: f64 = 1e-12;

const INVERSE_ITERATIONS: usize = 40;

/// Additive diagonal term of a ridge solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeParams {
    rho: f64,
}

impl RidgeParams {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(KbrError::invalid(format!(
                "ridge term must be finite and nonnegative, got {rho}"
            )));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Numerical-rank cutoff for [`pseudo_inverse`]: singular values at or below
/// `rel_tolerance * sigma_max` are treated as zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PinvParams {
    rel_tolerance: Option<f64>,
}

impl PinvParams {
    /// Shape-scaled default, `1e-12 * max(m, n)`.
    pub fn auto() -> Self {
        Self { rel_tolerance: None }
    }

    pub fn relative(rel_tolerance: f64) -> Result<Self> {
        if !(rel_tolerance > 0.0 && rel_tolerance < 1.0) {
            return Err(KbrError::invalid(format!(
                "pseudoinverse tolerance must lie in (0, 1), got {rel_tolerance}"
            )));
        }
        Ok(Self {
            rel_tolerance: Some(rel_tolerance),
        })
    }

    pub fn is_auto(&self) -> bool {
        self.rel_tolerance.is_none()
    }

    pub fn resolve(&self, m: usize, n: usize) -> f64 {
        self.rel_tolerance
            .unwrap_or(PINV_DEFAULT_FACTOR * m.max(n) as f64)
    }

    /// Human-readable form used in output metadata.
    pub fn describe(&self) -> String {
        match self.rel_tolerance {
            Some(t) => format!("{t:e}"),
            None => format!("auto({PINV_DEFAULT_FACTOR:e}*max(m,n))"),
        }
    }
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    to_faer(a)
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("symmetric eigenvalue iteration converges for finite input")
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(KbrError::invalid(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.amax();
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(KbrError::invalid("expected a symmetric matrix"));
            }
        }
    }
    Ok(())
}

/// Rayleigh-quotient estimate of the smallest eigenvalue of an SPD matrix by
/// inverse iteration on its Cholesky factor.
fn smallest_eigenvalue_estimate(chol: &Cholesky<f64, nalgebra::Dyn>, n: usize) -> f64 {
    // deterministic start vector with no special alignment to structured
    // null spaces (e.g. differences within a delta-kernel block)
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (1.7 * i as f64 + 0.3).sin());
    v /= v.norm();
    let mut estimate = f64::INFINITY;
    for _ in 0..INVERSE_ITERATIONS {
        let w = chol.solve(&v);
        let q = v.dot(&w);
        if !(q.is_finite() && q > 0.0) {
            return 0.0;
        }
        let next = 1.0 / q;
        let norm = w.norm();
        v = w / norm;
        if (estimate - next).abs() <= 1e-6 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}

/// Solves `(A + rho I) x = b` for symmetric `A`.
///
/// Uses a Cholesky factorization when `A + rho I` is positive definite and
/// falls back to a symmetric eigendecomposition otherwise. Either way the
/// matrix is rejected when its smallest eigenvalue (in magnitude) does not
/// exceed `1e-14 * |A + rho I|_F`.
pub fn solve_ridge(a: &DMatrix<f64>, b: &DVector<f64>, ridge: RidgeParams) -> Result<DVector<f64>> {
    check_symmetric(a)?;
    let n = a.nrows();
    if b.len() != n {
        return Err(KbrError::DimensionMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += ridge.rho;
    }
    let threshold = RIDGE_SINGULARITY_RTOL * m.norm();

    if let Some(chol) = Cholesky::new(m.clone()) {
        let smallest = smallest_eigenvalue_estimate(&chol, n);
        if smallest <= threshold {
            return Err(KbrError::Singular {
                smallest,
                threshold,
            });
        }
        return Ok(chol.solve(b));
    }

    let eig = to_faer(&m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| KbrError::Degenerate(format!("eigendecomposition failed: {e:?}")))?;
    let values: Vec<f64> = (0..n).map(|i| eig.S()[i]).collect();
    let smallest = values
        .iter()
        .copied()
        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
        .unwrap_or(0.0);
    if smallest.abs() <= threshold {
        return Err(KbrError::Singular {
            smallest,
            threshold,
        });
    }
    let vectors = from_faer(eig.U());
    let mut coeffs = vectors.transpose() * b;
    for (c, lambda) in coeffs.iter_mut().zip(&values) {
        *c /= lambda;
    }
    Ok(&vectors * coeffs)
}

/// Solves `A X = B` for a general square `A` by LU with partial pivoting.
///
/// Fails with [`KbrError::Singular`] when the smallest pivot does not exceed
/// `1e-14` times the largest absolute entry of `A`.
pub fn solve_general(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(KbrError::invalid(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.nrows() != a.nrows() {
        return Err(KbrError::DimensionMismatch {
            expected: a.nrows(),
            actual: b.nrows(),
        });
    }
    let threshold = LU_SINGULARITY_RTOL * a.amax();
    let lu = a.clone().lu();
    let smallest = lu.u().diagonal().amin();
    if !(smallest > threshold) {
        return Err(KbrError::Singular {
            smallest,
            threshold,
        });
    }
    lu.solve(b).ok_or(KbrError::Singular {
        smallest,
        threshold,
    })
}

/// Moore-Penrose pseudoinverse via a full SVD. Singular values at or below
/// `tol * sigma_max` are dropped.
pub fn pseudo_inverse(a: &DMatrix<f64>, params: PinvParams) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return DMatrix::zeros(n, m);
    }
    let svd = to_faer(a)
        .svd()
        .expect("svd iteration converges for finite input");
    let (u, v) = (svd.U(), svd.V());
    let k = m.min(n);
    let s: Vec<f64> = (0..k).map(|i| svd.S()[i]).collect();
    let cutoff = params.resolve(m, n) * s[0];
    let mut out = DMatrix::zeros(n, m);
    for (idx, &sk) in s.iter().enumerate() {
        if sk > cutoff {
            // rank-one update v_k u_k^T / s_k
            for j in 0..m {
                let uj = u[(j, idx)] / sk;
                for i in 0..n {
                    out[(i, j)] += v[(i, idx)] * uj;
                }
            }
        }
    }
    out
}

/// Singular values in nonincreasing order, length `min(m, n)`.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    to_faer(a)
        .singular_values()
        .expect("svd iteration converges for finite input")
}

/// `sigma_min / sigma_max`, or 0 for the zero matrix.
pub fn singular_value_ratio(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if max > 0.0 => min / max,
        _ => 0.0,
    }
}

/// `|a - b|_F / |b|_F`.
pub fn relative_frobenius_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
