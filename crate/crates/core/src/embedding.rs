//! Empirical kernel Bayes' rule.
//!
//! Given a joint sample `(X_i, Y_i)` and a prior written as a weighted sum of
//! kernel sections, the posterior kernel mean at an observation `y` is
//! `sum_i w_i k_X(., X_i)` with `w = R k_Y(y)`. Two flavors of the `n x n`
//! operator `R` are supported:
//!
//! * ridge: `mu = (G_X + n eps I)^-1 m`, `L = diag(mu)`,
//!   `R = L G_Y ((L G_Y)^2 + delta I)^-1 L`;
//! * pseudoinverse: `mu' = G_X^+ m`, `L' = diag(mu')`, `R' = (L' G_Y)^+ L'`.
//!
//! The ridge term on the weights is `n * eps` while the one on the operator
//! is a bare `delta`. Outputs are never clipped or renormalized.

use std::borrow::Borrow;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, KbrError, Result};
use crate::kernels::{ClassLabel, GramMatrix, Kernel};
use crate::numerics::{pseudo_inverse, solve_general, solve_ridge, PinvParams, RidgeParams};

/// Prior kernel mean `sum_j gamma_j k(., U_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMixture<T> {
    weights: Vec<f64>,
    atoms: Vec<T>,
}

impl<T> PriorMixture<T> {
    pub fn new(weights: Vec<f64>, atoms: Vec<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(KbrError::invalid("prior mixture needs at least one atom"));
        }
        check_len(weights.len(), atoms.len())?;
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(KbrError::invalid("prior weights must be finite"));
        }
        Ok(Self { weights, atoms })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> &[T] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl PriorMixture<ClassLabel> {
    /// Class prior `(Pi(C_1), ..., Pi(C_g))` as a mixture over the class
    /// labels. Entries must be nonnegative and sum to one within `1e-12`.
    pub fn over_classes(prior: &[f64]) -> Result<Self> {
        validate_class_prior(prior)?;
        let atoms = (0..prior.len()).map(ClassLabel).collect();
        Self::new(prior.to_vec(), atoms)
    }
}

pub(crate) fn validate_class_prior(prior: &[f64]) -> Result<()> {
    if prior.is_empty() {
        return Err(KbrError::invalid("class prior is empty"));
    }
    if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(KbrError::invalid(format!(
            "class prior entries must be nonnegative, got {prior:?}"
        )));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(KbrError::invalid(format!(
            "class prior must sum to 1, sums to {total}"
        )));
    }
    Ok(())
}

/// `(m(X_1), ..., m(X_n))` with `m = sum_j gamma_j k(., U_j)`.
pub fn prior_mean_vector<K, P, Q>(
    prior: &PriorMixture<Q>,
    anchors: &[P],
    kernel: &K,
) -> Result<DVector<f64>>
where
    K: Kernel + ?Sized,
    P: Borrow<K::Input>,
    Q: Borrow<K::Input>,
{
    let mut out = DVector::zeros(anchors.len());
    for (i, x) in anchors.iter().enumerate() {
        let mut acc = 0.0;
        for (gamma, u) in prior.weights.iter().zip(&prior.atoms) {
            acc += gamma * kernel.eval(x.borrow(), u.borrow())?;
        }
        out[i] = acc;
    }
    Ok(out)
}

/// How a weight vector was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMethod {
    /// `(G_X + n eps I)^-1 m`.
    Ridge { epsilon: f64 },
    /// `G_X^+ m` with the resolved relative cutoff.
    Pseudoinverse { rel_tolerance: f64 },
    /// Supplied directly.
    Given,
}

/// The vector `mu`, the diagonal of `Lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct KbrWeights {
    mu: DVector<f64>,
    method: WeightMethod,
}

impl KbrWeights {
    pub fn from_mu(mu: DVector<f64>) -> Result<Self> {
        Self::with_method(mu, WeightMethod::Given)
    }

    fn with_method(mu: DVector<f64>, method: WeightMethod) -> Result<Self> {
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(KbrError::invalid("kbr weights contain non-finite entries"));
        }
        Ok(Self { mu, method })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn method(&self) -> WeightMethod {
        self.method
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self.method {
            WeightMethod::Ridge { epsilon } => Some(epsilon),
            _ => None,
        }
    }

    /// `diag(mu)` as a dense matrix.
    pub fn lambda(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.mu)
    }
}

/// `mu = (G_X + n eps I)^-1 m_pi`.
pub fn kbr_weights(gx: &GramMatrix, m_pi: &DVector<f64>, epsilon: f64) -> Result<KbrWeights> {
    let n = gx.n();
    check_len(n, m_pi.len())?;
    let ridge = RidgeParams::new(n as f64 * epsilon)?;
    let mu = solve_ridge(gx.entries(), m_pi, ridge)?;
    KbrWeights::with_method(mu, WeightMethod::Ridge { epsilon })
}

/// Cached `G_X^+`, reusable across priors.
#[derive(Debug, Clone)]
pub struct GramPseudoInverse {
    matrix: DMatrix<f64>,
    rel_tolerance: f64,
}

impl GramPseudoInverse {
    pub fn new(gx: &GramMatrix, params: PinvParams) -> Self {
        let n = gx.n();
        Self {
            matrix: pseudo_inverse(gx.entries(), params),
            rel_tolerance: params.resolve(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `mu' = G_X^+ m_pi`.
    pub fn weights(&self, m_pi: &DVector<f64>) -> Result<KbrWeights> {
        check_len(self.matrix.ncols(), m_pi.len())?;
        KbrWeights::with_method(
            &self.matrix * m_pi,
            WeightMethod::Pseudoinverse {
                rel_tolerance: self.rel_tolerance,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorMethod {
    Ridge { delta: f64 },
    Pseudoinverse { rel_tolerance: f64 },
}

/// Parameters that produced a [`PosteriorOperator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub weights: WeightMethod,
    /// Gaussian bandwidth of `G_Y`, when it came from a Gaussian kernel.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorOperator {
    matrix: DMatrix<f64>,
    method: OperatorMethod,
    provenance: Provenance,
}

impl PosteriorOperator {
    /// Wraps an arbitrary square matrix, for callers that already hold `R`.
    pub fn from_matrix(matrix: DMatrix<f64>, method: OperatorMethod, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() {
            return Err(KbrError::invalid("posterior operator must be square"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(KbrError::Degenerate(
                "posterior operator has non-finite entries".into(),
            ));
        }
        Ok(Self {
            matrix,
            method,
            provenance,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn method(&self) -> OperatorMethod {
        self.method
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `L G_Y` with `L = diag(mu)`: row `i` of `G_Y` scaled by `mu_i`.
fn lambda_times(mu: &DVector<f64>, gy: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = gy.clone();
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= mu[i];
    }
    m
}

/// `R = L G_Y ((L G_Y)^2 + delta I)^-1 L`.
///
/// The inner inverse goes through an LU solve since `L G_Y` is not symmetric.
/// `delta = 0` is allowed and fails when `L G_Y` is singular.
pub fn posterior_operator_ridge(
    weights: &KbrWeights,
    gy: &GramMatrix,
    delta: f64,
) -> Result<PosteriorOperator> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(KbrError::invalid(format!(
            "delta must be finite and nonnegative, got {delta}"
        )));
    }
    let n = gy.n();
    check_len(n, weights.n())?;
    let m = lambda_times(weights.mu(), gy.entries());
    let mut a = &m * &m;
    for i in 0..n {
        a[(i, i)] += delta;
    }
    let x = solve_general(&a, &weights.lambda())?;
    PosteriorOperator::from_matrix(
        m * x,
        OperatorMethod::Ridge { delta },
        Provenance {
            weights: weights.method(),
            sigma: gy.kernel().sigma(),
        },
    )
}

/// `R' = (L' G_Y)^+ L'` for precomputed weights `mu'`.
pub fn posterior_operator_from_pinv_weights(
    weights: &KbrWeights,
    gy: &GramMatrix,
    params: PinvParams,
) -> Result<PosteriorOperator> {
    let n = gy.n();
    check_len(n, weights.n())?;
    let m = lambda_times(weights.mu(), gy.entries());
    let mut r = pseudo_inverse(&m, params);
    for (j, mut col) in r.column_iter_mut().enumerate() {
        col *= weights.mu()[j];
    }
    PosteriorOperator::from_matrix(
        r,
        OperatorMethod::Pseudoinverse {
            rel_tolerance: params.resolve(n, n),
        },
        Provenance {
            weights: weights.method(),
            sigma: gy.kernel().sigma(),
        },
    )
}

/// `R' = (L' G_Y)^+ L'` with `L' = diag(G_X^+ m_pi)`.
pub fn posterior_operator_pinv(
    gx: &GramMatrix,
    m_pi: &DVector<f64>,
    gy: &GramMatrix,
    params: PinvParams,
) -> Result<PosteriorOperator> {
    check_len(gx.n(), gy.n())?;
    let weights = GramPseudoInverse::new(gx, params).weights(m_pi)?;
    posterior_operator_from_pinv_weights(&weights, gy, params)
}

/// `f^T R k_Y(y)`.
pub fn posterior_expectation(
    f_values: &DVector<f64>,
    op: &PosteriorOperator,
    ky_at_y: &DVector<f64>,
) -> Result<f64> {
    check_len(op.n(), f_values.len())?;
    Ok(f_values.dot(&posterior_embedding_weights(op, ky_at_y)?))
}

/// `w = R k_Y(y)`; the posterior mean embedding is `sum_i w_i k_X(., X_i)`.
pub fn posterior_embedding_weights(
    op: &PosteriorOperator,
    ky_at_y: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_len(op.n(), ky_at_y.len())?;
    Ok(op.matrix() * ky_at_y)
}

/// Weights of the regularized conditional embedding
/// `E[k_Y(., Y) | X = x] ~ sum_i w_i k_Y(., Y_i)` with
/// `w = (G_X + n eps I)^-1 k_X(x)`.
pub fn conditional_embedding_weights(
    gx: &GramMatrix,
    kx_at_x: &DVector<f64>,
    epsilon: f64,
) -> Result<DVector<f64>> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(KbrError::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let n = gx.n();
    check_len(n, kx_at_x.len())?;
    solve_ridge(gx.entries(), kx_at_x, RidgeParams::new(n as f64 * epsilon)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram_matrix, kernel_vector, DeltaKernel, GaussianKernel};
    use crate::numerics::relative_frobenius_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn two_block_labels(per_class: usize) -> Vec<ClassLabel> {
        (0..2 * per_class)
            .map(|i| ClassLabel(usize::from(i >= per_class)))
            .collect()
    }

    fn gram(entries: &[f64], n: usize) -> GramMatrix {
        GramMatrix::from_entries(DMatrix::from_row_slice(n, n, entries)).unwrap()
    }

    /// Well separated points keep G_Y far from singular.
    fn spread_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| vec![2.0 * i as f64 + rng.random_range(-0.3..0.3), rng.random_range(-1.0..1.0)])
            .collect()
    }

    #[test]
    fn prior_mean_on_class_labels() {
        let labels = two_block_labels(50);
        let prior = PriorMixture::over_classes(&[0.3, 0.7]).unwrap();
        let m = prior_mean_vector(&prior, &labels, &DeltaKernel).unwrap();
        for (i, v) in m.iter().enumerate() {
            assert_eq!(*v, if i < 50 { 0.3 } else { 0.7 });
        }
    }

    #[test]
    fn prior_mean_single_atom() {
        let labels = [ClassLabel(0), ClassLabel(1), ClassLabel(2)];
        let prior = PriorMixture::new(vec![1.0], vec![ClassLabel(0)]).unwrap();
        let m = prior_mean_vector(&prior, &labels, &DeltaKernel).unwrap();
        assert_eq!(m.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn prior_mean_gaussian_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let anchors: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random(), rng.random()]).collect();
        let atoms: Vec<Vec<f64>> = (0..2).map(|_| vec![rng.random(), rng.random()]).collect();
        let prior = PriorMixture::new(vec![0.25, -1.5], atoms.clone()).unwrap();
        let sigma: f64 = 0.6;
        let m = prior_mean_vector(&prior, &anchors, &GaussianKernel::new(sigma).unwrap()).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..2 {
                let d2 = (anchors[i][0] - atoms[j][0]).powi(2) + (anchors[i][1] - atoms[j][1]).powi(2);
                acc += prior.weights()[j] * (-d2 / (2.0 * sigma * sigma)).exp()
                    / ((2.0 * PI).sqrt() * sigma);
            }
            assert!((m[i] - acc).abs() <= 1e-14);
        }
    }

    #[test]
    fn prior_validation() {
        assert!(PriorMixture::over_classes(&[0.5, 0.6]).is_err());
        assert!(PriorMixture::over_classes(&[-0.1, 1.1]).is_err());
        assert!(PriorMixture::<ClassLabel>::new(vec![], vec![]).is_err());
        assert!(PriorMixture::new(vec![1.0, 2.0], vec![ClassLabel(0)]).is_err());
    }

    #[test]
    fn weights_block_structure() {
        let labels = two_block_labels(50);
        let gx = gram_matrix(&labels, &DeltaKernel).unwrap();
        for &(p, eps) in &[(0.3, 1e-3), (0.9, 1e-7), (0.5, 1e-1)] {
            let prior = PriorMixture::over_classes(&[p, 1.0 - p]).unwrap();
            let m = prior_mean_vector(&prior, &labels, &DeltaKernel).unwrap();
            let w = kbr_weights(&gx, &m, eps).unwrap();
            // forward error of the solve scales with the condition number
            let cond = (50.0 + 100.0 * eps) / (100.0 * eps);
            for i in 0..100 {
                let num = if i < 50 { p } else { 1.0 - p };
                let expected = num / (50.0 + 100.0 * eps);
                assert!((w.mu()[i] - expected).abs() <= 1e-13 * cond * expected);
            }
            assert_eq!(w.epsilon(), Some(eps));
        }
    }

    #[test]
    fn weights_identity_gram() {
        let gx = gram(&[1.0, 0.0, 0.0, 1.0], 2);
        let w = kbr_weights(&gx, &DVector::from_vec(vec![0.4, 0.6]), 0.0).unwrap();
        assert_eq!(w.mu().as_slice(), &[0.4, 0.6]);
    }

    #[test]
    fn weights_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let b = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let gx = GramMatrix::from_entries(&b * b.transpose()).unwrap();
        let m = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let eps = 1e-3;
        let w = kbr_weights(&gx, &m, eps).unwrap();
        let resid = (gx.entries() * w.mu() + w.mu() * (8.0 * eps) - &m).norm();
        assert!(resid <= 1e-10 * (gx.entries().norm() + 8.0 * eps) * w.mu().norm());
    }

    #[test]
    fn weights_singular_delta_gram_without_regularization() {
        let labels = two_block_labels(5);
        let gx = gram_matrix(&labels, &DeltaKernel).unwrap();
        let m = DVector::from_element(10, 0.5);
        assert!(matches!(
            kbr_weights(&gx, &m, 0.0),
            Err(KbrError::Singular { .. })
        ));
    }

    #[test]
    fn ridge_operator_at_zero_delta_is_gram_inverse() {
        let w = KbrWeights::from_mu(DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let gy = gram(&[2.0, 1.0, 1.0, 2.0], 2);
        let r = posterior_operator_ridge(&w, &gy, 0.0).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0]);
        assert!((r.matrix() - expected).amax() < 1e-14);
        assert_eq!(r.method(), OperatorMethod::Ridge { delta: 0.0 });
    }

    #[test]
    fn ridge_operator_scalar_case() {
        let w = KbrWeights::from_mu(DVector::from_element(3, 1.0)).unwrap();
        let gy = GramMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let r = posterior_operator_ridge(&w, &gy, 1.0).unwrap();
        assert!((r.matrix() - DMatrix::<f64>::identity(3, 3) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn ridge_operator_small_delta_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pts = spread_points(&mut rng, 6);
        let gy = gram_matrix(&pts, &GaussianKernel::new(1.0).unwrap()).unwrap();
        let mu = DVector::from_fn(6, |_, _| rng.random_range(0.5..2.0));
        let w = KbrWeights::from_mu(mu).unwrap();
        let r = posterior_operator_ridge(&w, &gy, 1e-12).unwrap();
        let inv = gy.entries().clone().try_inverse().unwrap();
        assert!(relative_frobenius_distance(r.matrix(), &inv) < 1e-6);
        assert_eq!(r.provenance().sigma, Some(1.0));
    }

    #[test]
    fn ridge_operator_singular_lambda_errors() {
        let w = KbrWeights::from_mu(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let gy = gram(&[2.0, 1.0, 1.0, 2.0], 2);
        assert!(matches!(
            posterior_operator_ridge(&w, &gy, 0.0),
            Err(KbrError::Singular { .. })
        ));
        assert!(posterior_operator_ridge(&w, &gy, 1e-3).is_ok());
    }

    #[test]
    fn pinv_operator_reduces_to_gram_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let pts = spread_points(&mut rng, 4);
        let gy = gram_matrix(&pts, &GaussianKernel::new(1.0).unwrap()).unwrap();
        let gx = GramMatrix::from_entries(DMatrix::identity(4, 4) * 2.0).unwrap();
        let inv = gy.entries().clone().try_inverse().unwrap();
        for _ in 0..3 {
            let m = DVector::from_fn(4, |_, _| rng.random_range(0.2..1.0));
            let r = posterior_operator_pinv(&gx, &m, &gy, PinvParams::auto()).unwrap();
            assert!((r.matrix() - &inv).amax() < 1e-8);
        }
    }

    #[test]
    fn pinv_operator_zero_prior_mean() {
        let gx = GramMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let gy = GramMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let r = posterior_operator_pinv(&gx, &DVector::zeros(3), &gy, PinvParams::auto()).unwrap();
        assert_eq!(r.matrix(), &DMatrix::zeros(3, 3));
    }

    #[test]
    fn pinv_weights_on_two_block_gram() {
        let labels = two_block_labels(50);
        let gx = gram_matrix(&labels, &DeltaKernel).unwrap();
        let pinv = GramPseudoInverse::new(&gx, PinvParams::auto());
        for p in [0.1, 0.4, 0.8] {
            let prior = PriorMixture::over_classes(&[p, 1.0 - p]).unwrap();
            let m = prior_mean_vector(&prior, &labels, &DeltaKernel).unwrap();
            let w = pinv.weights(&m).unwrap();
            for i in 0..100 {
                let expected = if i < 50 { p / 50.0 } else { (1.0 - p) / 50.0 };
                assert!((w.mu()[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn expectation_cases() {
        let op = PosteriorOperator::from_matrix(
            DMatrix::identity(3, 3),
            OperatorMethod::Ridge { delta: 0.0 },
            Provenance {
                weights: WeightMethod::Given,
                sigma: None,
            },
        )
        .unwrap();
        let ky = DVector::from_vec(vec![0.2, 0.3, 0.4]);
        assert_eq!(posterior_expectation(&DVector::zeros(3), &op, &ky).unwrap(), 0.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(posterior_expectation(&e1, &op, &e1).unwrap(), 1.0);
        assert_eq!(posterior_embedding_weights(&op, &ky).unwrap(), ky);
        assert_eq!(
            posterior_embedding_weights(&op, &DVector::zeros(3)).unwrap(),
            DVector::zeros(3)
        );
        assert!(posterior_expectation(&DVector::zeros(2), &op, &ky).is_err());
        assert!(posterior_embedding_weights(&op, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn expectation_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for n in [5, 6] {
            let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let op = PosteriorOperator::from_matrix(
                r.clone(),
                OperatorMethod::Ridge { delta: 0.1 },
                Provenance {
                    weights: WeightMethod::Given,
                    sigma: None,
                },
            )
            .unwrap();
            let f = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let ky = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
            let mut oracle = 0.0;
            for i in 0..n {
                for j in 0..n {
                    oracle += f[i] * r[(i, j)] * ky[j];
                }
            }
            let e = posterior_expectation(&f, &op, &ky).unwrap();
            assert!((e - oracle).abs() <= 1e-12);
            let w = posterior_embedding_weights(&op, &ky).unwrap();
            assert!((f.dot(&w) - e).abs() <= 1e-12);
        }
    }

    #[test]
    fn conditional_weights_cases() {
        let gx = GramMatrix::from_entries(DMatrix::identity(2, 2)).unwrap();
        let w = conditional_embedding_weights(&gx, &DVector::from_vec(vec![1.0, 0.0]), 0.5).unwrap();
        assert!((w - DVector::from_vec(vec![0.5, 0.0])).amax() < 1e-15);
        assert!(conditional_embedding_weights(&gx, &DVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn conditional_weights_concentrate_on_matching_point() {
        let sigma = 1.0;
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![10.0 * sigma * i as f64]).collect();
        let k = GaussianKernel::new(sigma).unwrap();
        let gx = gram_matrix(&pts, &k).unwrap();
        for target in 0..5 {
            let kx = kernel_vector(&pts, pts[target].as_slice(), &k).unwrap();
            let w = conditional_embedding_weights(&gx, &kx, 1e-8).unwrap();
            assert_eq!(w.imax(), target);
        }
    }

    #[test]
    fn conditional_weights_multiply_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let b = DMatrix::from_fn(7, 5, |_, _| rng.random_range(-1.0..1.0));
        let gx = GramMatrix::from_entries(&b * b.transpose()).unwrap();
        let kx = DVector::from_fn(7, |_, _| rng.random_range(0.0..1.0));
        let w = conditional_embedding_weights(&gx, &kx, 1e-2).unwrap();
        let resid = (gx.entries() * &w + &w * 0.07 - &kx).norm();
        assert!(resid < 1e-10);
    }
}
