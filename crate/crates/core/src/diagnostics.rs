//! Numerical checks of the structural claims about empirical kernel Bayes'
//! rule: prior independence of the KBR1 posterior as `delta -> 0`, almost
//! sure non-singularity of Gram matrices and of the weights `mu`, and the
//! growth of regularized RKHS norms for targets that regularization cannot
//! reach.
//!
//! Randomized checks draw trial `t` from `stream(seed, t)`, so reports are
//! reproducible and independent of thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::classifiers::{KernelClassifier, LabeledSample};
use crate::embedding::{
    kbr_weights, posterior_operator_ridge, prior_mean_vector, KbrWeights, PriorMixture,
};
use crate::error::{check_len, KbrError, Result};
use crate::experiments::stream;
use crate::kernels::{gram_matrix, kernel_vector, GaussianKernel, GramMatrix};
use crate::numerics::{
    relative_frobenius_distance, singular_value_ratio, singular_values, solve_general, solve_ridge,
    RidgeParams,
};

/// A Gram matrix counts as nonsingular when `sigma_min > GRAM_RTOL * sigma_max`.
pub const GRAM_RTOL: f64 = 1e-10;

/// `mu` counts as entrywise nonzero when `min |mu_i| > WEIGHTS_RTOL * max |mu_i|`.
pub const WEIGHTS_RTOL: f64 = 1e-14;

/// Screen applied to `Lambda` and `G_Y` before the `delta -> 0` limit check.
pub const LIMIT_SCREEN_RTOL: f64 = 1e-8;

/// Outcome of a batch of randomized trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialReport {
    pub check: &'static str,
    /// What `min` and `median` summarize.
    pub statistic: &'static str,
    /// A trial passes when its statistic exceeds this value.
    pub threshold: f64,
    pub trials: usize,
    pub passes: usize,
    pub min: f64,
    pub median: f64,
    pub seed: u64,
}

impl TrialReport {
    fn from_statistics(
        check: &'static str,
        statistic: &'static str,
        threshold: f64,
        seed: u64,
        mut values: Vec<f64>,
    ) -> Self {
        let trials = values.len();
        let passes = values.iter().filter(|&&v| v > threshold).count();
        values.sort_by(f64::total_cmp);
        let median = match trials {
            0 => f64::NAN,
            t if t % 2 == 1 => values[t / 2],
            t => 0.5 * (values[t / 2 - 1] + values[t / 2]),
        };
        Self {
            check,
            statistic,
            threshold,
            trials,
            passes,
            min: values.first().copied().unwrap_or(f64::NAN),
            median,
            seed,
        }
    }

    pub fn pass_fraction(&self) -> f64 {
        self.passes as f64 / self.trials as f64
    }
}

fn standard_normal_points<R: Rng>(rng: &mut R, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(KbrError::invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Largest per-class difference between KBR1 posteriors at `y` under two
/// strictly positive class priors.
#[allow(clippy::too_many_arguments)]
pub fn prior_independence_gap(
    sample: &LabeledSample,
    prior_a: &[f64],
    prior_b: &[f64],
    y: &[f64],
    sigma: f64,
    epsilon: f64,
    delta: f64,
) -> Result<f64> {
    for p in [prior_a, prior_b] {
        if p.iter().any(|v| !(*v > 0.0)) {
            return Err(KbrError::invalid(format!(
                "priors must be strictly positive, got {p:?}"
            )));
        }
    }
    let clf = KernelClassifier::new(sample, sigma)?;
    let mut post = Vec::with_capacity(2);
    for p in [prior_a, prior_b] {
        let prior = PriorMixture::over_classes(p)?;
        check_len(sample.class_count(), prior.len())?;
        let op = clf.kbr1_operator(&prior, epsilon, delta)?;
        post.push(clf.posterior(&op, y)?);
    }
    Ok(post[0]
        .values()
        .iter()
        .zip(post[1].values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `sigma_min / sigma_max` of the Gaussian Gram matrix of `points`.
pub fn gram_singular_value_ratio(points: &[Vec<f64>], sigma: f64) -> Result<f64> {
    let g = gram_matrix(points, &GaussianKernel::new(sigma)?)?;
    Ok(singular_value_ratio(g.entries()))
}

/// Draws `n` i.i.d. `N(0, I_d)` points per trial and tests whether their
/// Gaussian Gram matrix is nonsingular (see [`GRAM_RTOL`]).
pub fn gram_nonsingularity_trial(n: usize, d: usize, sigma: f64, trials: usize, seed: u64) -> Result<TrialReport> {
    if n == 0 || d == 0 || trials == 0 {
        return Err(KbrError::invalid("n, d and trials must be >= 1"));
    }
    check_positive("sigma", sigma)?;
    let ratios = (0..trials)
        .into_par_iter()
        .map(|t| {
            let points = standard_normal_points(&mut stream(seed, t as u64), n, d, 1.0);
            gram_singular_value_ratio(&points, sigma)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TrialReport::from_statistics(
        "gram-nonsingular",
        "sigma_min/sigma_max of G_X",
        GRAM_RTOL,
        seed,
        ratios,
    ))
}

/// `min |mu_i| / max |mu_i|`, zero when `mu = 0`.
pub fn weights_spread(mu: &DVector<f64>) -> f64 {
    let max = mu.amax();
    if max > 0.0 {
        mu.amin() / max
    } else {
        0.0
    }
}

/// Draws `n` i.i.d. `N(0, I_d)` points per trial, computes
/// `mu = (G_X + n eps I)^-1 m_pi` with a Gaussian kernel and the given prior
/// mixture, and tests whether every entry is nonzero (see [`WEIGHTS_RTOL`]).
#[allow(clippy::too_many_arguments)]
pub fn weights_nonzero_trial(
    n: usize,
    d: usize,
    sigma: f64,
    epsilon: f64,
    prior: &PriorMixture<Vec<f64>>,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    if n == 0 || d == 0 || trials == 0 {
        return Err(KbrError::invalid("n, d and trials must be >= 1"));
    }
    check_positive("epsilon", epsilon)?;
    for atom in prior.atoms() {
        check_len(d, atom.len())?;
    }
    let kernel = GaussianKernel::new(sigma)?;
    let spreads = (0..trials)
        .into_par_iter()
        .map(|t| {
            let points = standard_normal_points(&mut stream(seed, t as u64), n, d, 1.0);
            let gx = gram_matrix(&points, &kernel)?;
            let m = prior_mean_vector(prior, &points, &kernel)?;
            Ok(weights_spread(kbr_weights(&gx, &m, epsilon)?.mu()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TrialReport::from_statistics(
        "weights-nonzero",
        "min|mu_i|/max|mu_i|",
        WEIGHTS_RTOL,
        seed,
        spreads,
    ))
}

/// Target of the divergence probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeTarget {
    /// The constant function `c`, which lies outside the Gaussian RKHS when
    /// `c != 0`.
    Constant(f64),
    /// `k_a = sqrt(2 pi) sigma k_G(., a) = exp(-(. - a)^2 / (2 sigma^2))`,
    /// which lies in the RKHS but not in the range of the covariance
    /// operator.
    KernelSection(f64),
}

/// Equation whose regularized solution the probe measures, with
/// `C = (1/n) sum_i k(., X_i) (x) k(., X_i)` the empirical covariance
/// operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeForm {
    /// `(C + eps I) g = C f`: the regularized regression estimate of `f`
    /// from its values at the sample, `alpha = (G/n + eps I)^-1 v/n` and
    /// `g = sum_i alpha_i k(., X_i)`. Bounded as `eps -> 0` iff `f` is (in
    /// the limit) in the RKHS.
    Regression,
    /// `(C + eps I) g = f` for `f` in the RKHS. Writing
    /// `g = (f - sum_i beta_i k(., X_i)) / eps` gives
    /// `beta = (G + n eps I)^-1 f(X)` and
    /// `|g|^2 = (|f|^2 - 2 beta^T f(X) + beta^T G beta) / eps^2`. Bounded as
    /// `eps -> 0` iff `f` is in the range of `C`.
    RangeEquation,
}

impl ProbeTarget {
    /// `Regression` for the constant (it is not an RKHS element, so only the
    /// regression form is defined), `RangeEquation` for the kernel section.
    pub fn default_form(self) -> ProbeForm {
        match self {
            ProbeTarget::Constant(_) => ProbeForm::Regression,
            ProbeTarget::KernelSection(_) => ProbeForm::RangeEquation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbePoint {
    pub epsilon: f64,
    pub norm: f64,
}

/// Draws `n` points from `N(0, sigma0^2)` on the real line and returns the
/// RKHS norm of the regularized solution for each `epsilon`.
pub fn rkhs_norm_divergence_probe(
    n: usize,
    sigma0: f64,
    sigma: f64,
    target: ProbeTarget,
    form: ProbeForm,
    epsilon_grid: &[f64],
    seed: u64,
) -> Result<Vec<ProbePoint>> {
    if n < 10 {
        return Err(KbrError::invalid(format!("probe needs n >= 10, got {n}")));
    }
    check_positive("sigma0", sigma0)?;
    if epsilon_grid.is_empty() {
        return Err(KbrError::invalid("epsilon grid is empty"));
    }
    for e in epsilon_grid {
        check_positive("epsilon", *e)?;
    }
    if epsilon_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(KbrError::invalid("epsilon grid must be strictly decreasing"));
    }
    let kernel = GaussianKernel::new(sigma)?;
    let points = standard_normal_points(&mut stream(seed, 0), n, 1, sigma0);
    let gx = gram_matrix(&points, &kernel)?;
    let g = gx.entries();
    let nf = n as f64;
    let scale = (2.0 * std::f64::consts::PI).sqrt() * sigma;

    let (values, self_norm_sq) = match target {
        ProbeTarget::Constant(c) => {
            if form == ProbeForm::RangeEquation {
                return Err(KbrError::invalid(
                    "the range equation needs a target in the RKHS; constants are not",
                ));
            }
            (DVector::from_element(n, c), f64::NAN)
        }
        ProbeTarget::KernelSection(a) => {
            // |k_a|^2 = scale^2 k_G(a, a) = scale
            (kernel_vector(&points, &[a][..], &kernel)? * scale, scale)
        }
    };

    epsilon_grid
        .iter()
        .map(|&eps| {
            let norm_sq = match form {
                ProbeForm::Regression => {
                    let alpha = solve_ridge(&(g / nf), &(&values / nf), RidgeParams::new(eps)?)?;
                    alpha.dot(&(g * &alpha))
                }
                ProbeForm::RangeEquation => {
                    let beta = solve_ridge(g, &values, RidgeParams::new(nf * eps)?)?;
                    let residual =
                        self_norm_sq - 2.0 * beta.dot(&values) + beta.dot(&(g * &beta));
                    residual.max(0.0) / (eps * eps)
                }
            };
            Ok(ProbePoint {
                epsilon: eps,
                norm: norm_sq.max(0.0).sqrt(),
            })
        })
        .collect()
}

/// Relative Frobenius distance between `R(delta)` and `G_Y^-1` along
/// `delta_grid`.
///
/// Fails with [`KbrError::Precondition`] unless both `Lambda` and `G_Y` have
/// `sigma_min > LIMIT_SCREEN_RTOL * sigma_max`.
pub fn limit_identity_check(mu: &KbrWeights, gy: &GramMatrix, delta_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_len(gy.n(), mu.n())?;
    let lambda_ratio = weights_spread(mu.mu());
    if !(lambda_ratio > LIMIT_SCREEN_RTOL) {
        return Err(KbrError::Precondition(format!(
            "Lambda fails the non-singularity screen (ratio {lambda_ratio:e})"
        )));
    }
    let s = singular_values(gy.entries());
    let gy_ratio = s[s.len() - 1] / s[0];
    if !(gy_ratio > LIMIT_SCREEN_RTOL) {
        return Err(KbrError::Precondition(format!(
            "G_Y fails the non-singularity screen (ratio {gy_ratio:e})"
        )));
    }
    let n = gy.n();
    let gy_inv = solve_general(gy.entries(), &DMatrix::identity(n, n))?;
    delta_grid
        .iter()
        .map(|&delta| {
            let op = posterior_operator_ridge(mu, gy, delta)?;
            Ok((delta, relative_frobenius_distance(op.matrix(), &gy_inv)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ClassLabel;

    fn spread_sample(n_per_class: usize) -> LabeledSample {
        let mut labels = Vec::new();
        let mut features = Vec::new();
        for i in 0..2 * n_per_class {
            labels.push(ClassLabel(i / n_per_class));
            let t = i as f64;
            features.push(vec![1.3 * t + 0.2 * (t * 0.7).sin(), 0.4 * (t * 1.1).cos()]);
        }
        LabeledSample::new(labels, features, 2).unwrap()
    }

    #[test]
    fn report_summary() {
        let r = TrialReport::from_statistics("x", "s", 0.5, 3, vec![0.9, 0.1, 0.6, 0.7]);
        assert_eq!((r.trials, r.passes), (4, 3));
        assert_eq!(r.min, 0.1);
        assert!((r.median - 0.65).abs() < 1e-15);
        assert_eq!(r.pass_fraction(), 0.75);
    }

    #[test]
    fn gap_is_zero_for_equal_priors() {
        let s = spread_sample(5);
        let gap = prior_independence_gap(&s, &[0.3, 0.7], &[0.3, 0.7], &[2.0, 0.1], 1.0, 1e-3, 1e-3).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn gap_vanishes_at_zero_delta() {
        let s = spread_sample(5);
        let gap = prior_independence_gap(&s, &[0.2, 0.8], &[0.7, 0.3], &[4.0, 0.0], 1.0, 1e-3, 0.0).unwrap();
        assert!(gap < 1e-8, "{gap}");
    }

    #[test]
    fn gap_shrinks_with_delta() {
        let s = spread_sample(5);
        let mut previous = f64::INFINITY;
        for k in (2..=12).step_by(2) {
            let delta = 10f64.powi(-k);
            let gap = prior_independence_gap(&s, &[0.2, 0.8], &[0.7, 0.3], &[4.0, 0.0], 1.0, 1e-3, delta)
                .unwrap();
            assert!(gap <= previous * (1.0 + 1e-9) + 1e-12, "delta {delta}: {gap} > {previous}");
            previous = gap;
        }
    }

    #[test]
    fn gap_rejects_zero_prior_entries() {
        let s = spread_sample(5);
        assert!(prior_independence_gap(&s, &[0.0, 1.0], &[0.5, 0.5], &[0.0, 0.0], 1.0, 1e-3, 1e-3).is_err());
    }

    #[test]
    fn gram_trials() {
        let one = gram_nonsingularity_trial(1, 2, 1.0, 20, 4).unwrap();
        assert_eq!(one.passes, 20);
        let r = gram_nonsingularity_trial(10, 2, 1.0, 50, 4).unwrap();
        assert_eq!(r, gram_nonsingularity_trial(10, 2, 1.0, 50, 4).unwrap());
        assert!(r.passes <= r.trials);
        assert!(gram_nonsingularity_trial(10, 2, 1.0, 0, 4).is_err());
    }

    #[test]
    fn duplicated_point_is_singular() {
        let pts = vec![vec![0.3, 0.1], vec![0.3, 0.1], vec![-1.0, 0.5]];
        let ratio = gram_singular_value_ratio(&pts, 1.0).unwrap();
        assert!(ratio < 1e-12, "{ratio}");
        assert!(!(ratio > GRAM_RTOL));
    }

    #[test]
    fn zero_prior_gives_zero_weights() {
        let prior = PriorMixture::new(vec![0.0, 0.0], vec![vec![0.1, 0.2], vec![-0.3, 0.4]]).unwrap();
        let r = weights_nonzero_trial(10, 2, 1.0, 1e-3, &prior, 10, 1).unwrap();
        assert_eq!(r.passes, 0);
        assert_eq!(r.min, 0.0);
    }

    #[test]
    fn single_point_weight() {
        let prior = PriorMixture::new(vec![1.0], vec![vec![0.25]]).unwrap();
        let r = weights_nonzero_trial(1, 1, 1.0, 1e-3, &prior, 5, 9).unwrap();
        assert_eq!(r.passes, 5);
        assert!(weights_nonzero_trial(1, 2, 1.0, 1e-3, &prior, 5, 9).is_err());
        assert!(weights_nonzero_trial(1, 1, 1.0, 0.0, &prior, 5, 9).is_err());
    }

    #[test]
    fn probe_zero_target() {
        let series = rkhs_norm_divergence_probe(
            50,
            1.0,
            1.0,
            ProbeTarget::Constant(0.0),
            ProbeForm::Regression,
            &[1e-2, 1e-4, 1e-6],
            3,
        )
        .unwrap();
        assert!(series.iter().all(|p| p.norm == 0.0));
    }

    #[test]
    fn probe_input_validation() {
        let target = ProbeTarget::Constant(1.0);
        let form = ProbeForm::Regression;
        assert!(rkhs_norm_divergence_probe(5, 1.0, 1.0, target, form, &[1e-2], 3).is_err());
        assert!(rkhs_norm_divergence_probe(20, 1.0, 1.0, target, form, &[1e-4, 1e-2], 3).is_err());
        assert!(rkhs_norm_divergence_probe(20, 1.0, 1.0, target, form, &[], 3).is_err());
        assert!(rkhs_norm_divergence_probe(20, 1.0, 1.0, target, ProbeForm::RangeEquation, &[1e-2], 3).is_err());
    }

    #[test]
    fn probe_range_form_matches_direct_operator_solve() {
        // Represent g in the basis {k_a, k(., X_1), ..., k(., X_n)} and
        // solve (C + eps I) g = k_a directly with coefficients.
        let n = 12;
        let eps = 1e-3;
        let sigma = 1.0;
        let seed = 17;
        let series = rkhs_norm_divergence_probe(
            n,
            1.0,
            sigma,
            ProbeTarget::KernelSection(0.0),
            ProbeForm::RangeEquation,
            &[eps],
            seed,
        )
        .unwrap();

        let kernel = GaussianKernel::new(sigma).unwrap();
        let pts = standard_normal_points(&mut stream(seed, 0), n, 1, 1.0);
        let mut basis = vec![vec![0.0]];
        basis.extend(pts.iter().cloned());
        let big = gram_matrix(&basis, &kernel).unwrap().into_entries();
        let scale = (2.0 * std::f64::consts::PI).sqrt() * sigma;
        // C k(., b) = (1/n) sum_i k(X_i, b) k(., X_i): coefficient map on the basis
        let mut c = DMatrix::zeros(n + 1, n + 1);
        for b in 0..=n {
            for i in 0..n {
                c[(i + 1, b)] = big[(i + 1, b)] / n as f64;
            }
        }
        let lhs = c + DMatrix::identity(n + 1, n + 1) * eps;
        let mut rhs = DMatrix::zeros(n + 1, 1);
        rhs[(0, 0)] = scale;
        let coef = lhs.lu().solve(&rhs).unwrap();
        let direct = (coef.transpose() * &big * &coef)[(0, 0)].sqrt();
        assert!((series[0].norm - direct).abs() < 1e-8 * direct, "{} vs {direct}", series[0].norm);
    }

    #[test]
    fn limit_check_identity_case() {
        let mu = KbrWeights::from_mu(DVector::from_element(3, 1.0)).unwrap();
        let gy = GramMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let out = limit_identity_check(&mu, &gy, &[1e-1, 1e-3, 0.0]).unwrap();
        for (delta, dist) in out {
            assert!((dist - delta / (1.0 + delta)).abs() < 1e-15, "{delta}: {dist}");
        }
    }

    #[test]
    fn limit_check_screens_singular_lambda() {
        let mu = KbrWeights::from_mu(DVector::from_vec(vec![1.0, 0.0, 2.0])).unwrap();
        let gy = GramMatrix::from_entries(DMatrix::identity(3, 3)).unwrap();
        let err = limit_identity_check(&mu, &gy, &[1e-3]).unwrap_err();
        assert!(matches!(err, KbrError::Precondition(_)));
    }
}
