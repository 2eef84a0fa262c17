//! Seeded synthetic two-class experiments.
//!
//! Each replicate draws a fresh training sample (class 1 points first, then
//! class 2) from its own random stream, evaluates BR, BR_th, KBR1 and KBR2
//! for every prior and test point, and the per-row values are aggregated
//! into a mean and a standard error over replicates.
//!
//! Replicate `r` always uses `stream(master_seed, r)`, and aggregation runs in
//! replicate order, so results do not depend on the number of threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::classifiers::{
    br_posterior, fit_gaussian_stats, GaussianClassStats, KernelClassifier, LabeledSample,
};
use crate::embedding::{KbrWeights, PriorMixture};
use crate::error::{check_len, KbrError, Result};
use crate::kernels::ClassLabel;
use crate::numerics::PinvParams;

/// Seed used when none is given.
pub const DEFAULT_MASTER_SEED: u64 = 20_240_611;

/// Generator family and stream derivation, as recorded in output metadata.
pub const RNG_FAMILY: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64(master_seed), stream = replicate index";

/// A row is flagged when more than this fraction of its replicates failed.
pub const FLAG_FAILURE_FRACTION: f64 = 0.1;

/// Independent random stream for one replicate (or trial).
pub fn stream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Multivariate normal sampler `mean + L z` with `L L^T = cov`.
#[derive(Debug, Clone)]
pub struct MvNormal {
    mean: Vec<f64>,
    factor: DMatrix<f64>,
}

impl MvNormal {
    pub fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(KbrError::invalid("mean must be nonempty"));
        }
        if !cov.is_square() {
            return Err(KbrError::invalid("covariance must be square"));
        }
        check_len(mean.len(), cov.nrows())?;
        if cov != &cov.transpose() {
            return Err(KbrError::invalid("covariance must be symmetric"));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| KbrError::invalid("covariance is not positive definite"))?;
        Ok(Self {
            mean: mean.to_vec(),
            factor: chol.l(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.mean.len();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|k| self.factor[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

/// One draw from `N(mean, cov)`.
pub fn sample_mvnormal<R: Rng + ?Sized>(mean: &[f64], cov: &DMatrix<f64>, rng: &mut R) -> Result<Vec<f64>> {
    Ok(MvNormal::new(mean, cov)?.sample(rng))
}

/// Mean and sum of squared deviations, updated one value at a time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// NaN when empty.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    /// Sample standard deviation over `sqrt(count)`; NaN below two values.
    pub fn sem(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let c = self.count as f64;
        (self.m2 / (c - 1.0)).sqrt() / c.sqrt()
    }
}

/// Standard error of the mean with the `m - 1` sample variance.
pub fn sem(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(KbrError::invalid(format!(
            "sem needs at least 2 values, got {}",
            values.len()
        )));
    }
    let mut stats = RunningStats::default();
    values.iter().for_each(|&v| stats.push(v));
    Ok(stats.sem())
}

/// Protocol parameters of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub n_per_class: usize,
    pub class_means: Vec<Vec<f64>>,
    pub class_covs: Vec<DMatrix<f64>>,
    pub replicates: usize,
    /// Values of `Pi(C_1)`; the remaining mass is split evenly over the
    /// other classes.
    pub priors: Vec<f64>,
    pub test_points: Vec<Vec<f64>>,
    pub sigma_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub master_seed: u64,
    /// Cutoff used by KBR2.
    pub pinv: PinvParams,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let cov = DMatrix::from_diagonal_element(2, 2, 0.1);
        let decades: Vec<f64> = (0..8).map(|k| 10f64.powi(-(2 * k + 1))).collect();
        Self {
            n_per_class: 50,
            class_means: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            class_covs: vec![cov.clone(), cov],
            replicates: 100,
            priors: (1..=9).map(|k| k as f64 / 10.0).collect(),
            test_points: vec![vec![0.5, 0.5], vec![0.6, 0.4], vec![0.7, 0.3]],
            sigma_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            epsilon_grid: decades.clone(),
            delta_grid: decades,
            master_seed: DEFAULT_MASTER_SEED,
            pinv: PinvParams::auto(),
        }
    }
}

impl ExperimentSpec {
    pub fn class_count(&self) -> usize {
        self.class_means.len()
    }

    pub fn dim(&self) -> usize {
        self.class_means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_means.len() < 2 {
            return Err(KbrError::invalid("need at least two classes"));
        }
        check_len(self.class_means.len(), self.class_covs.len())?;
        let d = self.dim();
        if d == 0 {
            return Err(KbrError::invalid("class means must be nonempty"));
        }
        for (m, c) in self.class_means.iter().zip(&self.class_covs) {
            MvNormal::new(m, c)?;
            check_len(d, m.len())?;
        }
        if self.n_per_class < 1 {
            return Err(KbrError::invalid("n_per_class must be >= 1"));
        }
        if self.replicates < 1 {
            return Err(KbrError::invalid("replicates must be >= 1"));
        }
        for (name, grid) in [
            ("priors", &self.priors),
            ("test_points", &vec![0.0; self.test_points.len()]),
            ("sigma_grid", &self.sigma_grid),
            ("epsilon_grid", &self.epsilon_grid),
            ("delta_grid", &self.delta_grid),
        ] {
            if grid.is_empty() {
                return Err(KbrError::invalid(format!("{name} must be nonempty")));
            }
        }
        if let Some(p) = self.priors.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(KbrError::invalid(format!("prior {p} outside (0, 1)")));
        }
        for t in &self.test_points {
            check_len(d, t.len())?;
        }
        if self.sigma_grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(KbrError::invalid("sigma values must be positive"));
        }
        for grid in [&self.epsilon_grid, &self.delta_grid] {
            if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(KbrError::invalid("epsilon and delta must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Full class prior vector for `Pi(C_1) = p`.
    pub fn prior_vector(&self, p: f64) -> Vec<f64> {
        let g = self.class_count();
        let rest = (1.0 - p) / (g - 1) as f64;
        std::iter::once(p).chain(std::iter::repeat_n(rest, g - 1)).collect()
    }

    pub fn true_stats(&self) -> Result<GaussianClassStats> {
        GaussianClassStats::from_parameters(&self.class_means, &self.class_covs)
    }
}

/// Training sample of replicate `replicate_index`: `n_per_class` points of
/// class 1, then `n_per_class` of class 2, and so on.
pub fn generate_training_sample(spec: &ExperimentSpec, replicate_index: usize) -> Result<LabeledSample> {
    if replicate_index >= spec.replicates {
        return Err(KbrError::invalid(format!(
            "replicate index {replicate_index} out of range 0..{}",
            spec.replicates
        )));
    }
    let mut rng = stream(spec.master_seed, replicate_index as u64);
    let mut labels = Vec::with_capacity(spec.n_per_class * spec.class_count());
    let mut features = Vec::with_capacity(labels.capacity());
    for (class, (m, c)) in spec.class_means.iter().zip(&spec.class_covs).enumerate() {
        let dist = MvNormal::new(m, c)?;
        for _ in 0..spec.n_per_class {
            labels.push(ClassLabel(class));
            features.push(dist.sample(&mut rng));
        }
    }
    LabeledSample::new(labels, features, spec.class_count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierId {
    Br,
    BrTh,
    Kbr1,
    Kbr2,
}

impl ClassifierId {
    pub const ALL: [ClassifierId; 4] = [
        ClassifierId::Br,
        ClassifierId::BrTh,
        ClassifierId::Kbr1,
        ClassifierId::Kbr2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierId::Br => "BR",
            ClassifierId::BrTh => "BR_th",
            ClassifierId::Kbr1 => "KBR1",
            ClassifierId::Kbr2 => "KBR2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl std::fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Aggregate over replicates of one (classifier, prior, test point, cell).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub classifier: ClassifierId,
    pub prior_c1: f64,
    pub test_point: Vec<f64>,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Mean over successful replicates (NaN if none succeeded).
    pub mean_post_c1: f64,
    /// NaN with fewer than two successful replicates.
    pub sem: f64,
    pub n_replicates: usize,
    pub n_errors: usize,
    pub first_error: Option<String>,
}

impl SweepRow {
    pub fn is_flagged(&self) -> bool {
        self.n_errors as f64 > FLAG_FAILURE_FRACTION * self.n_replicates as f64
    }

    /// Every replicate failed.
    pub fn is_hard_failure(&self) -> bool {
        self.n_errors == self.n_replicates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub master_seed: u64,
    /// Replicates actually run.
    pub replicates: usize,
    /// Replicates requested by the spec, before any reduction.
    pub spec_replicates: usize,
    pub pinv: PinvParams,
}

impl SweepResult {
    pub fn flagged_rows(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.is_flagged())
    }

    pub fn hard_failures(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.is_hard_failure())
    }

    /// Rows of one classifier at a test point and cell, in prior order.
    pub fn series<'a>(
        &'a self,
        classifier: ClassifierId,
        test_point: &'a [f64],
        sigma: f64,
        epsilon: f64,
        delta: f64,
    ) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| {
            r.classifier == classifier
                && r.test_point == test_point
                && r.sigma == sigma
                && r.epsilon == epsilon
                && r.delta == delta
        })
    }
}

/// One `(sigma, epsilon, delta)` combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
}

/// Flat index over `(cell, classifier, prior, test point)`, cells ordered
/// sigma-major, then epsilon, then delta.
struct Layout {
    sigmas: Vec<f64>,
    epsilons: Vec<f64>,
    deltas: Vec<f64>,
    priors: usize,
    tests: usize,
}

impl Layout {
    fn cells(&self) -> usize {
        self.sigmas.len() * self.epsilons.len() * self.deltas.len()
    }

    fn len(&self) -> usize {
        self.cells() * ClassifierId::ALL.len() * self.priors * self.tests
    }

    fn cell_index(&self, s: usize, e: usize, d: usize) -> usize {
        (s * self.epsilons.len() + e) * self.deltas.len() + d
    }

    fn cell(&self, index: usize) -> Cell {
        let d = index % self.deltas.len();
        let e = (index / self.deltas.len()) % self.epsilons.len();
        let s = index / (self.deltas.len() * self.epsilons.len());
        Cell {
            sigma: self.sigmas[s],
            epsilon: self.epsilons[e],
            delta: self.deltas[d],
        }
    }

    fn index(&self, cell: usize, classifier: usize, prior: usize, test: usize) -> usize {
        ((cell * ClassifierId::ALL.len() + classifier) * self.priors + prior) * self.tests + test
    }
}

type Value = std::result::Result<f64, KbrError>;

/// `Pi(C_1)` posterior at every (prior, test point) for one classifier.
fn per_prior_and_point(
    spec: &ExperimentSpec,
    mut eval: impl FnMut(usize, &[f64]) -> Value,
) -> Vec<Value> {
    let mut out = Vec::with_capacity(spec.priors.len() * spec.test_points.len());
    for p in 0..spec.priors.len() {
        for t in &spec.test_points {
            out.push(eval(p, t));
        }
    }
    out
}

fn replicate_values(
    spec: &ExperimentSpec,
    layout: &Layout,
    true_stats: &GaussianClassStats,
    mixtures: &[PriorMixture<ClassLabel>],
    replicate: usize,
) -> Vec<Value> {
    let np = spec.priors.len();
    let nt = spec.test_points.len();
    let block = np * nt;
    let mut out: Vec<Value> = vec![Ok(f64::NAN); layout.len()];
    let mut fill = |cell: usize, classifier: ClassifierId, values: &[Value]| {
        let c = classifier as usize;
        for p in 0..np {
            for t in 0..nt {
                out[layout.index(cell, c, p, t)] = values[p * nt + t].clone();
            }
        }
    };
    let all_cells = |f: &mut dyn FnMut(usize)| (0..layout.cells()).for_each(f);

    let sample = match generate_training_sample(spec, replicate) {
        Ok(s) => s,
        Err(e) => {
            let failed = vec![Err(e); block];
            all_cells(&mut |cell| {
                for id in ClassifierId::ALL {
                    fill(cell, id, &failed);
                }
            });
            return out;
        }
    };

    let first_class = |probs: crate::classifiers::PosteriorProbs| probs.values()[0];
    let prior_vectors: Vec<Vec<f64>> = spec.priors.iter().map(|&p| spec.prior_vector(p)).collect();

    let br = match fit_gaussian_stats(&sample) {
        Ok(stats) => per_prior_and_point(spec, |p, y| {
            br_posterior(&stats, &prior_vectors[p], y).map(first_class)
        }),
        Err(e) => vec![Err(e); block],
    };
    let br_th = per_prior_and_point(spec, |p, y| {
        br_posterior(true_stats, &prior_vectors[p], y).map(first_class)
    });
    all_cells(&mut |cell| {
        fill(cell, ClassifierId::Br, &br);
        fill(cell, ClassifierId::BrTh, &br_th);
    });

    // G_X, its pseudoinverse and the KBR1 weights depend on the labels only.
    let mut gx_pinv = None;
    let mut weights: Option<Vec<Vec<Result<KbrWeights>>>> = None;
    for (s, &sigma) in layout.sigmas.iter().enumerate() {
        let cells_of_sigma: Vec<usize> = (0..layout.epsilons.len())
            .flat_map(|e| (0..layout.deltas.len()).map(move |d| (e, d)))
            .map(|(e, d)| layout.cell_index(s, e, d))
            .collect();
        let clf = match KernelClassifier::new(&sample, sigma) {
            Ok(c) => c,
            Err(e) => {
                let failed = vec![Err(e); block];
                for &cell in &cells_of_sigma {
                    fill(cell, ClassifierId::Kbr1, &failed);
                    fill(cell, ClassifierId::Kbr2, &failed);
                }
                continue;
            }
        };
        let pinv = gx_pinv.get_or_insert_with(|| clf.gx_pseudo_inverse(spec.pinv));
        let weights = weights.get_or_insert_with(|| {
            layout
                .epsilons
                .iter()
                .map(|&eps| mixtures.iter().map(|m| clf.kbr1_weights(m, eps)).collect())
                .collect()
        });

        let kbr2_ops: Vec<_> = mixtures
            .iter()
            .map(|m| clf.kbr2_operator_with(pinv, m, spec.pinv))
            .collect();
        let kbr2 = per_prior_and_point(spec, |p, y| match &kbr2_ops[p] {
            Ok(op) => clf.posterior(op, y).map(first_class),
            Err(e) => Err(e.clone()),
        });
        for &cell in &cells_of_sigma {
            fill(cell, ClassifierId::Kbr2, &kbr2);
        }

        for (e, eps_weights) in weights.iter().enumerate() {
            for (d, &delta) in layout.deltas.iter().enumerate() {
                let ops: Vec<_> = eps_weights
                    .iter()
                    .map(|w| match w {
                        Ok(w) => clf.kbr1_operator_from(w, delta),
                        Err(e) => Err(e.clone()),
                    })
                    .collect();
                let kbr1 = per_prior_and_point(spec, |p, y| match &ops[p] {
                    Ok(op) => clf.posterior(op, y).map(first_class),
                    Err(e) => Err(e.clone()),
                });
                fill(layout.cell_index(s, e, d), ClassifierId::Kbr1, &kbr1);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    stats: RunningStats,
    errors: usize,
    first_error: Option<String>,
}

fn run_cells(
    spec: &ExperimentSpec,
    sigmas: Vec<f64>,
    epsilons: Vec<f64>,
    deltas: Vec<f64>,
    replicates: usize,
) -> Result<SweepResult> {
    let spec = ExperimentSpec {
        sigma_grid: sigmas.clone(),
        epsilon_grid: epsilons.clone(),
        delta_grid: deltas.clone(),
        replicates,
        ..spec.clone()
    };
    spec.validate()?;
    let layout = Layout {
        sigmas,
        epsilons,
        deltas,
        priors: spec.priors.len(),
        tests: spec.test_points.len(),
    };
    let true_stats = spec.true_stats()?;
    let mixtures = spec
        .priors
        .iter()
        .map(|&p| PriorMixture::over_classes(&spec.prior_vector(p)))
        .collect::<Result<Vec<_>>>()?;

    let mut acc = vec![Accumulator::default(); layout.len()];
    // bounded memory: evaluate a chunk of replicates in parallel, then fold
    // the chunk in replicate order
    let chunk = (2 * rayon::current_num_threads()).max(1);
    let mut start = 0;
    while start < replicates {
        let end = (start + chunk).min(replicates);
        let batch: Vec<Vec<Value>> = (start..end)
            .into_par_iter()
            .map(|r| replicate_values(&spec, &layout, &true_stats, &mixtures, r))
            .collect();
        for values in batch {
            for (a, v) in acc.iter_mut().zip(values) {
                match v {
                    Ok(x) => a.stats.push(x),
                    Err(e) => {
                        a.errors += 1;
                        a.first_error.get_or_insert_with(|| e.to_string());
                    }
                }
            }
        }
        start = end;
    }

    let mut rows = Vec::with_capacity(layout.len());
    for cell in 0..layout.cells() {
        let Cell {
            sigma,
            epsilon,
            delta,
        } = layout.cell(cell);
        for (c, id) in ClassifierId::ALL.into_iter().enumerate() {
            for (p, &prior_c1) in spec.priors.iter().enumerate() {
                for (t, point) in spec.test_points.iter().enumerate() {
                    let a = &acc[layout.index(cell, c, p, t)];
                    rows.push(SweepRow {
                        classifier: id,
                        prior_c1,
                        test_point: point.clone(),
                        sigma,
                        epsilon,
                        delta,
                        mean_post_c1: a.stats.mean(),
                        sem: a.stats.sem(),
                        n_replicates: replicates,
                        n_errors: a.errors,
                        first_error: a.first_error.clone(),
                    });
                }
            }
        }
    }
    Ok(SweepResult {
        rows,
        master_seed: spec.master_seed,
        replicates,
        spec_replicates: replicates,
        pinv: spec.pinv,
    })
}

/// All classifiers, priors and test points at one `(sigma, epsilon, delta)`.
/// KBR2 ignores `epsilon` and `delta`.
pub fn run_prior_sweep(spec: &ExperimentSpec, sigma: f64, epsilon: f64, delta: f64) -> Result<SweepResult> {
    run_cells(spec, vec![sigma], vec![epsilon], vec![delta], spec.replicates)
}

/// Cross product of the spec's sigma, epsilon and delta grids. `replicates`
/// optionally runs fewer replicates than the spec asks for; the result
/// records both counts.
pub fn run_grid_sweep(spec: &ExperimentSpec, replicates: Option<usize>) -> Result<SweepResult> {
    let run = replicates.unwrap_or(spec.replicates);
    if run > spec.replicates {
        return Err(KbrError::invalid(format!(
            "reduced replicate count {run} exceeds the spec's {}",
            spec.replicates
        )));
    }
    let mut result = run_cells(
        spec,
        spec.sigma_grid.clone(),
        spec.epsilon_grid.clone(),
        spec.delta_grid.clone(),
        run,
    )?;
    result.spec_replicates = spec.replicates;
    Ok(result)
}
