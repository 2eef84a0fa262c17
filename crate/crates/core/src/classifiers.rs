//! Probabilistic classifiers over a finite class list.
//!
//! * BR: Bayes' rule with per-class Gaussian likelihoods fitted by sample
//!   mean and unbiased sample covariance (`BR_th` takes the true parameters).
//! * KBR1: kernel Bayes' rule with ridge-regularized inverses,
//!   `D R k_Y(y)`.
//! * KBR2: kernel Bayes' rule with Moore-Penrose pseudoinverses,
//!   `D R' k_Y(y)`.
//!
//! The kernel classifiers use the delta kernel on labels and the normalized
//! Gaussian kernel on features. Their outputs are raw inner products: they
//! are neither clipped to `[0, 1]` nor renormalized to sum to one.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::embedding::{
    kbr_weights, posterior_embedding_weights, KbrWeights, posterior_operator_from_pinv_weights,
    posterior_operator_ridge, prior_mean_vector, validate_class_prior, GramPseudoInverse,
    PosteriorOperator, PriorMixture,
};
use crate::error::{check_len, KbrError, Result, Stage};
use crate::kernels::{gram_matrix, kernel_vector, ClassLabel, DeltaKernel, GaussianKernel, GramMatrix};
use crate::numerics::{symmetric_eigenvalues, PinvParams};

/// Paired `(label, feature vector)` observations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    labels: Vec<ClassLabel>,
    features: Vec<Vec<f64>>,
    class_count: usize,
}

impl LabeledSample {
    pub fn new(labels: Vec<ClassLabel>, features: Vec<Vec<f64>>, class_count: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(KbrError::invalid("sample is empty"));
        }
        check_len(labels.len(), features.len())?;
        let d = features[0].len();
        if d == 0 {
            return Err(KbrError::invalid("feature dimension must be >= 1"));
        }
        for f in &features {
            check_len(d, f.len())?;
        }
        if let Some(bad) = labels.iter().find(|l| l.id() >= class_count) {
            return Err(KbrError::invalid(format!(
                "label {bad} outside the {class_count}-class list"
            )));
        }
        Ok(Self {
            labels,
            features,
            class_count,
        })
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }
}

/// Multivariate normal with a cached Cholesky factor of its covariance.
#[derive(Debug, Clone)]
pub struct ClassGaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl ClassGaussian {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_len(mean.len(), covariance.nrows())?;
        let chol = spd_factor(&covariance)?;
        Ok(Self {
            mean,
            covariance,
            chol,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn density(&self, y: &[f64]) -> Result<f64> {
        check_len(self.mean.len(), y.len())?;
        Ok(density_from_factor(&self.chol, &self.mean, y))
    }
}

fn spd_factor(cov: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !cov.is_square() || cov.nrows() == 0 {
        return Err(KbrError::invalid("covariance must be a nonempty square matrix"));
    }
    if cov != &cov.transpose() {
        return Err(KbrError::invalid("covariance must be symmetric"));
    }
    Cholesky::new(cov.clone())
        .ok_or_else(|| KbrError::invalid("covariance is not positive definite"))
}

fn density_from_factor(chol: &Cholesky<f64, Dyn>, mean: &DVector<f64>, y: &[f64]) -> f64 {
    let d = mean.len();
    let diff = DVector::from_column_slice(y) - mean;
    let z = chol
        .l_dirty()
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    let l = chol.l_dirty();
    let det: f64 = (0..d).map(|i| l[(i, i)] * l[(i, i)]).product();
    (-0.5 * z.norm_squared()).exp() / ((2.0 * PI).powi(d as i32) * det).sqrt()
}

/// Multivariate normal density at `y`.
pub fn gaussian_density(y: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    check_len(mean.len(), y.len())?;
    check_len(mean.len(), cov.nrows())?;
    let chol = spd_factor(cov)?;
    Ok(density_from_factor(&chol, &DVector::from_column_slice(mean), y))
}

/// Per-class means and covariances.
#[derive(Debug, Clone)]
pub struct GaussianClassStats {
    classes: Vec<ClassGaussian>,
}

impl GaussianClassStats {
    /// Uses known parameters instead of fitted ones (the `BR_th` variant).
    pub fn from_parameters(means: &[Vec<f64>], covariances: &[DMatrix<f64>]) -> Result<Self> {
        check_len(means.len(), covariances.len())?;
        let classes = means
            .iter()
            .zip(covariances)
            .map(|(m, c)| ClassGaussian::new(DVector::from_column_slice(m), c.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[ClassGaussian] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

/// Sample mean and covariance (divisor `n_j - 1`) of each class.
pub fn fit_gaussian_stats(sample: &LabeledSample) -> Result<GaussianClassStats> {
    let d = sample.dim();
    let mut classes = Vec::with_capacity(sample.class_count());
    for class in 0..sample.class_count() {
        let points: Vec<&Vec<f64>> = sample
            .labels
            .iter()
            .zip(&sample.features)
            .filter(|(l, _)| l.id() == class)
            .map(|(_, f)| f)
            .collect();
        let count = points.len();
        if count < d + 1 {
            return Err(KbrError::Fit {
                class,
                reason: format!("{count} points, need at least {}", d + 1),
            });
        }
        let mut mean = DVector::zeros(d);
        for p in &points {
            mean += DVector::from_column_slice(p);
        }
        mean /= count as f64;
        let mut cov = DMatrix::zeros(d, d);
        for p in &points {
            let diff = DVector::from_column_slice(p) - &mean;
            cov.ger(1.0, &diff, &diff, 1.0);
        }
        cov /= (count - 1) as f64;
        // mirror to make symmetry exact
        for i in 0..d {
            for j in 0..i {
                cov[(j, i)] = cov[(i, j)];
            }
        }
        let smallest = symmetric_eigenvalues(&cov)[0];
        if !(smallest > 0.0) {
            return Err(KbrError::Fit {
                class,
                reason: format!("covariance is singular (smallest eigenvalue {smallest:e})"),
            });
        }
        let fitted = ClassGaussian::new(mean, cov).map_err(|e| KbrError::Fit {
            class,
            reason: e.to_string(),
        })?;
        classes.push(fitted);
    }
    Ok(GaussianClassStats { classes })
}

/// Per-class posterior values.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorProbs {
    values: Vec<f64>,
    normalized: bool,
}

impl PosteriorProbs {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// True for BR/BR_th, false for the raw KBR outputs.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn class(&self, label: ClassLabel) -> f64 {
        self.values[label.id()]
    }
}

/// Bayes' rule with Gaussian class likelihoods.
pub fn br_posterior(stats: &GaussianClassStats, prior: &[f64], y: &[f64]) -> Result<PosteriorProbs> {
    validate_class_prior(prior)?;
    check_len(stats.class_count(), prior.len())?;
    let weighted = stats
        .classes
        .iter()
        .zip(prior)
        .map(|(c, p)| Ok(c.density(y)? * p))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = weighted.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(KbrError::Degenerate(format!(
            "all class likelihoods vanish at y = {y:?}"
        )));
    }
    Ok(PosteriorProbs {
        values: weighted.iter().map(|w| w / total).collect(),
        normalized: true,
    })
}

/// `BR_th`: Bayes' rule with the true class means and covariances.
pub fn br_th_posterior(
    means: &[Vec<f64>],
    covariances: &[DMatrix<f64>],
    prior: &[f64],
    y: &[f64],
) -> Result<PosteriorProbs> {
    br_posterior(&GaussianClassStats::from_parameters(means, covariances)?, prior, y)
}

/// `D[i][j] = 1` iff sample point `j` has class `i`.
pub fn indicator_matrix(sample: &LabeledSample, g: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(g, sample.n());
    for (j, l) in sample.labels.iter().enumerate() {
        if l.id() < g {
            d[(l.id(), j)] = 1.0;
        }
    }
    d
}

/// Gram matrices, indicator matrix and kernels for one training sample,
/// shared by every prior, test point and regularization setting.
#[derive(Debug, Clone)]
pub struct KernelClassifier {
    sample: LabeledSample,
    kernel_y: GaussianKernel,
    gx: GramMatrix,
    gy: GramMatrix,
    indicator: DMatrix<f64>,
}

impl KernelClassifier {
    pub fn new(sample: &LabeledSample, sigma: f64) -> Result<Self> {
        let kernel_y = GaussianKernel::new(sigma)?;
        let gx = gram_matrix(&sample.labels, &DeltaKernel)?;
        let gy = gram_matrix(&sample.features, &kernel_y)?;
        Ok(Self {
            indicator: indicator_matrix(sample, sample.class_count()),
            sample: sample.clone(),
            kernel_y,
            gx,
            gy,
        })
    }

    pub fn gx(&self) -> &GramMatrix {
        &self.gx
    }

    pub fn gy(&self) -> &GramMatrix {
        &self.gy
    }

    pub fn indicator(&self) -> &DMatrix<f64> {
        &self.indicator
    }

    pub fn sample(&self) -> &LabeledSample {
        &self.sample
    }

    pub fn prior_mean(&self, prior: &PriorMixture<ClassLabel>) -> Result<DVector<f64>> {
        prior_mean_vector(prior, &self.sample.labels, &DeltaKernel).map_err(|e| e.at(Stage::PriorMean))
    }

    /// Ridge operator `R` for KBR1.
    pub fn kbr1_operator(
        &self,
        prior: &PriorMixture<ClassLabel>,
        epsilon: f64,
        delta: f64,
    ) -> Result<PosteriorOperator> {
        let w = self.kbr1_weights(prior, epsilon)?;
        self.kbr1_operator_from(&w, delta)
    }

    /// `mu = (G_X + n eps I)^-1 m_pi`. Depends on the labels only, so it can
    /// be shared across bandwidths.
    pub fn kbr1_weights(&self, prior: &PriorMixture<ClassLabel>, epsilon: f64) -> Result<KbrWeights> {
        let m = self.prior_mean(prior)?;
        kbr_weights(&self.gx, &m, epsilon).map_err(|e| e.at(Stage::KbrWeights))
    }

    pub fn kbr1_operator_from(&self, weights: &KbrWeights, delta: f64) -> Result<PosteriorOperator> {
        check_len(self.gx.n(), weights.n()).map_err(|e| e.at(Stage::KbrWeights))?;
        posterior_operator_ridge(weights, &self.gy, delta).map_err(|e| e.at(Stage::PosteriorOperator))
    }

    pub fn gx_pseudo_inverse(&self, params: PinvParams) -> GramPseudoInverse {
        GramPseudoInverse::new(&self.gx, params)
    }

    /// Pseudoinverse operator `R'` for KBR2, reusing a cached `G_X^+`.
    pub fn kbr2_operator_with(
        &self,
        gx_pinv: &GramPseudoInverse,
        prior: &PriorMixture<ClassLabel>,
        params: PinvParams,
    ) -> Result<PosteriorOperator> {
        let m = self.prior_mean(prior)?;
        let w = gx_pinv.weights(&m).map_err(|e| e.at(Stage::KbrWeights))?;
        posterior_operator_from_pinv_weights(&w, &self.gy, params)
            .map_err(|e| e.at(Stage::PosteriorOperator))
    }

    pub fn kbr2_operator(
        &self,
        prior: &PriorMixture<ClassLabel>,
        params: PinvParams,
    ) -> Result<PosteriorOperator> {
        self.kbr2_operator_with(&self.gx_pseudo_inverse(params), prior, params)
    }

    /// `D R k_Y(y)`, unnormalized.
    pub fn posterior(&self, op: &PosteriorOperator, y: &[f64]) -> Result<PosteriorProbs> {
        let eval = || -> Result<PosteriorProbs> {
            let ky = kernel_vector(&self.sample.features, y, &self.kernel_y)?;
            let w = posterior_embedding_weights(op, &ky)?;
            let values = &self.indicator * w;
            Ok(PosteriorProbs {
                values: values.iter().copied().collect(),
                normalized: false,
            })
        };
        eval().map_err(|e| e.at(Stage::Evaluation))
    }
}

/// KBR1 class posterior at `y`.
pub fn kbr1_posterior(
    sample: &LabeledSample,
    prior: &[f64],
    y: &[f64],
    sigma: f64,
    epsilon: f64,
    delta: f64,
) -> Result<PosteriorProbs> {
    let prior = PriorMixture::over_classes(prior)?;
    check_len(sample.class_count(), prior.len())?;
    let clf = KernelClassifier::new(sample, sigma)?;
    let op = clf.kbr1_operator(&prior, epsilon, delta)?;
    clf.posterior(&op, y)
}

/// KBR2 class posterior at `y`.
pub fn kbr2_posterior(
    sample: &LabeledSample,
    prior: &[f64],
    y: &[f64],
    sigma: f64,
    params: PinvParams,
) -> Result<PosteriorProbs> {
    let prior = PriorMixture::over_classes(prior)?;
    check_len(sample.class_count(), prior.len())?;
    let clf = KernelClassifier::new(sample, sigma)?;
    let op = clf.kbr2_operator(&prior, params)?;
    clf.posterior(&op, y)
}
