//! Subcommand execution.

use std::path::{Path, PathBuf};

use kbr_core::diagnostics::{
    gram_nonsingularity_trial, prior_independence_gap, rkhs_norm_divergence_probe,
    weights_nonzero_trial, ProbeForm, ProbeTarget,
};
use kbr_core::embedding::PriorMixture;
use kbr_core::experiments::{
    generate_training_sample, run_grid_sweep, run_prior_sweep, stream, sample_mvnormal,
    RunningStats, SweepResult, RNG_FAMILY,
};
use nalgebra::DMatrix;

use crate::config::{describe, RunConfig};
use crate::output::{emit_csv, emit_meta, emit_plot_data, GapRow, GapTable, ProbeSeries};
use crate::{Check, CliError, Command, Invocation};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Trial defaults of the randomized diagnostics.
pub const GRAM_TRIALS: usize = 500;
pub const WEIGHTS_TRIALS: usize = 200;

/// Stream index reserved for drawing the random prior atoms of
/// `weights-nonzero`; trials use indices `0..trials`.
const ATOM_STREAM: u64 = u64::MAX;

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Sweep rows whose every replicate failed.
    pub hard_failures: usize,
}

pub fn execute(inv: &Invocation) -> Result<Outcome, CliError> {
    let c = &inv.config;
    match inv.command {
        Command::Version => {
            println!("kbr {VERSION}");
            Ok(Outcome::default())
        }
        Command::SweepPrior => {
            let spec = c.experiment_spec();
            let result = run_prior_sweep(&spec, c.sigma, c.epsilon, c.delta)?;
            write_sweep(c, "sweep-prior", &result)
        }
        Command::SweepGrid => {
            let spec = c.protocol_spec();
            let result = run_grid_sweep(&spec, c.replicates)?;
            write_sweep(c, "sweep-grid", &result)
        }
        Command::Diagnose { check } => diagnose(c, check),
    }
}

fn common_meta(c: &RunConfig, command: &str) -> Vec<(String, String)> {
    vec![
        ("command".into(), command.into()),
        ("version".into(), VERSION.into()),
        ("seed".into(), c.seed.to_string()),
        ("rng_family".into(), RNG_FAMILY.into()),
    ]
}

fn write_sweep(c: &RunConfig, name: &str, result: &SweepResult) -> Result<Outcome, CliError> {
    let csv_path = c.output_dir.join(format!("{name}.csv"));
    emit_csv(result, &csv_path)?;

    for row in result.flagged_rows() {
        eprintln!(
            "warning: {} prior={} y={:?} sigma={:e} eps={:e} delta={:e}: {}/{} replicates failed ({})",
            row.classifier,
            row.prior_c1,
            row.test_point,
            row.sigma,
            row.epsilon,
            row.delta,
            row.n_errors,
            row.n_replicates,
            row.first_error.as_deref().unwrap_or("unknown error")
        );
    }
    let hard_failures = result.hard_failures().count();

    let mut meta = common_meta(c, name);
    meta.push(("pinv_tolerance".into(), result.pinv.describe()));
    meta.push(("replicates".into(), result.replicates.to_string()));
    meta.push(("spec_replicates".into(), result.spec_replicates.to_string()));
    for (k, v) in describe(c) {
        meta.push((k.replace('-', "_"), v));
    }
    meta.push(("rows".into(), result.rows.len().to_string()));
    meta.push(("flagged_rows".into(), result.flagged_rows().count().to_string()));
    meta.push(("hard_failed_rows".into(), hard_failures.to_string()));
    emit_meta(&csv_path, &meta)?;

    let mut files = vec![csv_path];
    if c.plot_data {
        let dir = c.output_dir.join(format!("plot-{name}"));
        files.extend(emit_plot_data(result, &dir, c.svg)?);
    }
    Ok(Outcome {
        files,
        hard_failures,
    })
}

fn diagnose(c: &RunConfig, check: Check) -> Result<Outcome, CliError> {
    let path = c.output_dir.join(format!("diagnose-{}.csv", check.name()));
    let mut meta = common_meta(c, &format!("diagnose {}", check.name()));
    match check {
        Check::GramNonsingular => {
            let trials = c.trials.unwrap_or(GRAM_TRIALS);
            let report = gram_nonsingularity_trial(c.diag_n, c.dim, c.diag_sigma, trials, c.seed)?;
            meta.extend(sizes(c));
            emit_csv(&report, &path)?;
        }
        Check::WeightsNonzero => {
            let trials = c.trials.unwrap_or(WEIGHTS_TRIALS);
            let prior = random_prior(c)?;
            let report = weights_nonzero_trial(
                c.diag_n,
                c.dim,
                c.diag_sigma,
                c.weights_epsilon,
                &prior,
                trials,
                c.seed,
            )?;
            meta.extend(sizes(c));
            meta.push(("epsilon".into(), format!("{:e}", c.weights_epsilon)));
            let atoms: Vec<String> = prior
                .atoms()
                .iter()
                .map(|a| a.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(":"))
                .collect();
            meta.push(("prior_atoms".into(), atoms.join(",")));
            emit_csv(&report, &path)?;
        }
        Check::DivergenceProbe => {
            let form = c.probe_form.unwrap_or(c.probe_target.default_form());
            let points = rkhs_norm_divergence_probe(
                c.probe_n,
                c.probe_sigma0,
                c.probe_sigma,
                c.probe_target,
                form,
                &c.probe_epsilons,
                c.seed,
            )?;
            let series = ProbeSeries {
                target: match c.probe_target {
                    ProbeTarget::Constant(v) => format!("constant:{v}"),
                    ProbeTarget::KernelSection(a) => format!("kernel-section:{a}"),
                },
                form: match form {
                    ProbeForm::Regression => "regression".into(),
                    ProbeForm::RangeEquation => "range".into(),
                },
                points,
            };
            meta.push(("n".into(), c.probe_n.to_string()));
            meta.push(("sigma0".into(), format!("{:e}", c.probe_sigma0)));
            meta.push(("sigma".into(), format!("{:e}", c.probe_sigma)));
            meta.push((
                "operator".into(),
                "empirical covariance operator (1/n) sum_i k(.,X_i) (x) k(.,X_i); \
                 regression: (C + eps I) g = C f, range: (C + eps I) g = f"
                    .into(),
            ));
            meta.push((
                "reading".into(),
                "growth of the norm as eps decreases is a trend, not a limit".into(),
            ));
            emit_csv(&series, &path)?;
        }
        Check::PriorIndependence => {
            let table = prior_gaps(c)?;
            meta.push(("sigma".into(), format!("{:e}", c.sigma)));
            meta.push(("epsilon".into(), format!("{:e}", c.epsilon)));
            meta.push(("prior_a".into(), c.priors[0].to_string()));
            meta.push(("prior_b".into(), c.priors[c.priors.len() - 1].to_string()));
            for (k, v) in describe(c) {
                meta.push((k.replace('-', "_"), v));
            }
            emit_csv(&table, &path)?;
        }
    }
    emit_meta(&path, &meta)?;
    Ok(Outcome {
        files: vec![path],
        hard_failures: 0,
    })
}

fn sizes(c: &RunConfig) -> Vec<(String, String)> {
    vec![
        ("n".into(), c.diag_n.to_string()),
        ("dim".into(), c.dim.to_string()),
        ("sigma".into(), format!("{:e}", c.diag_sigma)),
    ]
}

/// Equal-weight prior over `prior_atoms` points drawn from `N(0, I_dim)`.
fn random_prior(c: &RunConfig) -> Result<PriorMixture<Vec<f64>>, CliError> {
    let mut rng = stream(c.seed, ATOM_STREAM);
    let eye = DMatrix::identity(c.dim, c.dim);
    let atoms = (0..c.prior_atoms)
        .map(|_| sample_mvnormal(&vec![0.0; c.dim], &eye, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let w = 1.0 / c.prior_atoms as f64;
    Ok(PriorMixture::new(vec![w; c.prior_atoms], atoms)?)
}

/// KBR1 gap between the first and last prior of the list, per delta and
/// test point, over the replicate samples.
fn prior_gaps(c: &RunConfig) -> Result<GapTable, CliError> {
    let spec = c.experiment_spec();
    spec.validate()?;
    if spec.priors.len() < 2 {
        return Err(CliError::Usage {
            key: "priors".into(),
            reason: "prior-independence compares the first and last prior; give at least two".into(),
        });
    }
    let prior_a = spec.prior_vector(spec.priors[0]);
    let prior_b = spec.prior_vector(spec.priors[spec.priors.len() - 1]);
    let samples = (0..spec.replicates)
        .map(|r| generate_training_sample(&spec, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for &delta in &c.gap_deltas {
        for y in &spec.test_points {
            let mut stats = RunningStats::default();
            let mut max_gap = f64::NAN;
            let mut errors = 0;
            for s in &samples {
                match prior_independence_gap(s, &prior_a, &prior_b, y, c.sigma, c.epsilon, delta) {
                    Ok(g) => {
                        stats.push(g);
                        max_gap = if max_gap.is_nan() { g } else { max_gap.max(g) };
                    }
                    Err(_) => errors += 1,
                }
            }
            rows.push(GapRow {
                delta,
                test_point: y.clone(),
                mean_gap: stats.mean(),
                max_gap,
                n_replicates: spec.replicates,
                n_errors: errors,
            });
        }
    }
    Ok(GapTable { rows })
}

/// Convenience for tests and scripts: the CSV path a sweep command writes.
pub fn sweep_csv_path(output_dir: &Path, command: Command) -> Option<PathBuf> {
    match command {
        Command::SweepPrior => Some(output_dir.join("sweep-prior.csv")),
        Command::SweepGrid => Some(output_dir.join("sweep-grid.csv")),
        _ => None,
    }
}
