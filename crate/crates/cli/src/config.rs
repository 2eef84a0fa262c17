//! Run configuration: defaults, a flat `key = value` file, then command-line
//! flags, each layer overriding the previous one.

use std::collections::BTreeMap;
use std::path::PathBuf;

use kbr_core::diagnostics::{ProbeForm, ProbeTarget};
use kbr_core::experiments::{ExperimentSpec, DEFAULT_MASTER_SEED};
use kbr_core::numerics::PinvParams;
use nalgebra::DMatrix;

use crate::CliError;

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "KBR_OUTPUT_DIR";

pub const DEFAULT_OUTPUT_DIR: &str = "kbr-out";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Overrides the replicate count (a reduction for `sweep-grid`).
    pub replicates: Option<usize>,
    pub n_per_class: usize,
    pub class_means: Vec<Vec<f64>>,
    /// Isotropic variance of each class, `S_j = v_j I`.
    pub class_vars: Vec<f64>,
    pub priors: Vec<f64>,
    pub test_points: Vec<Vec<f64>>,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma_grid: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub pinv: PinvParams,
    pub plot_data: bool,
    pub svg: bool,
    /// Trial count for the randomized diagnostics; each has its own default.
    pub trials: Option<usize>,
    pub diag_n: usize,
    pub dim: usize,
    pub diag_sigma: f64,
    pub weights_epsilon: f64,
    pub prior_atoms: usize,
    pub gap_deltas: Vec<f64>,
    pub probe_n: usize,
    pub probe_sigma0: f64,
    pub probe_sigma: f64,
    pub probe_target: ProbeTarget,
    pub probe_form: Option<ProbeForm>,
    pub probe_epsilons: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spec = ExperimentSpec::default();
        Self {
            output_dir: std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            seed: DEFAULT_MASTER_SEED,
            replicates: None,
            n_per_class: spec.n_per_class,
            class_means: spec.class_means,
            class_vars: vec![0.1, 0.1],
            priors: spec.priors,
            test_points: spec.test_points,
            sigma: 0.1,
            epsilon: 1e-7,
            delta: 1e-7,
            sigma_grid: spec.sigma_grid,
            epsilon_grid: spec.epsilon_grid,
            delta_grid: spec.delta_grid,
            pinv: PinvParams::auto(),
            plot_data: true,
            svg: false,
            trials: None,
            diag_n: 10,
            dim: 2,
            diag_sigma: 1.0,
            weights_epsilon: 1e-3,
            prior_atoms: 2,
            gap_deltas: (1..=6).map(|k| 10f64.powi(-2 * k)).collect(),
            probe_n: 200,
            probe_sigma0: 1.0,
            probe_sigma: 1.0,
            probe_target: ProbeTarget::Constant(1.0),
            probe_form: None,
            probe_epsilons: vec![1e-2, 1e-4, 1e-6],
        }
    }
}

type Setter = fn(&mut RunConfig, &str) -> Result<(), String>;

fn number<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("cannot parse {v:?} as a number"))
}

fn positive(v: &str) -> Result<f64, String> {
    let x: f64 = number(v)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(format!("expected a positive number, got {v:?}"));
    }
    Ok(x)
}

fn nonnegative(v: &str) -> Result<f64, String> {
    let x: f64 = number(v)?;
    if !(x.is_finite() && x >= 0.0) {
        return Err(format!("expected a nonnegative number, got {v:?}"));
    }
    Ok(x)
}

fn count(v: &str) -> Result<usize, String> {
    let n: usize = number(v)?;
    if n == 0 {
        return Err("expected a count >= 1".into());
    }
    Ok(n)
}

fn list(v: &str, item: fn(&str) -> Result<f64, String>) -> Result<Vec<f64>, String> {
    let out = v
        .split(',')
        .map(|s| item(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err("expected a nonempty list".into());
    }
    Ok(out)
}

/// `x:y,x:y,...`
fn points(v: &str) -> Result<Vec<Vec<f64>>, String> {
    v.split(',')
        .map(|p| {
            let coords = p
                .split(':')
                .map(number::<f64>)
                .collect::<Result<Vec<_>, _>>()?;
            if coords.len() != 2 {
                return Err(format!("expected a 2-d point x:y, got {p:?}"));
            }
            Ok(coords)
        })
        .collect()
}

fn boolean(v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

fn probe_target(v: &str) -> Result<ProbeTarget, String> {
    let (kind, value) = v
        .split_once(':')
        .ok_or_else(|| format!("expected constant:<c> or kernel-section:<a>, got {v:?}"))?;
    let value: f64 = number(value)?;
    match kind.trim() {
        "constant" => Ok(ProbeTarget::Constant(value)),
        "kernel-section" => Ok(ProbeTarget::KernelSection(value)),
        other => Err(format!("unknown probe target {other:?}")),
    }
}

fn probe_form(v: &str) -> Result<Option<ProbeForm>, String> {
    match v.trim() {
        "default" => Ok(None),
        "regression" => Ok(Some(ProbeForm::Regression)),
        "range" => Ok(Some(ProbeForm::RangeEquation)),
        other => Err(format!("expected default, regression or range, got {other:?}")),
    }
}

fn pinv(v: &str) -> Result<PinvParams, String> {
    if v.trim() == "auto" {
        return Ok(PinvParams::auto());
    }
    PinvParams::relative(number(v)?).map_err(|e| e.to_string())
}

/// Every accepted key (in flag spelling), its help text and its parser.
pub const KEYS: &[(&str, &str, Setter)] = &[
    ("output-dir", "Output directory (default: $KBR_OUTPUT_DIR or kbr-out)", |c, v| {
        c.output_dir = PathBuf::from(v.trim());
        Ok(())
    }),
    ("seed", "Master seed", |c, v| {
        c.seed = number(v)?;
        Ok(())
    }),
    ("replicates", "Replicate count (for sweep-grid: a reduction of the protocol's 100)", |c, v| {
        c.replicates = Some(count(v)?);
        Ok(())
    }),
    ("n-per-class", "Training points per class", |c, v| {
        c.n_per_class = count(v)?;
        Ok(())
    }),
    ("class-means", "Class means as x:y,x:y", |c, v| {
        c.class_means = points(v)?;
        Ok(())
    }),
    ("class-vars", "Isotropic class variances, comma separated", |c, v| {
        c.class_vars = list(v, positive)?;
        Ok(())
    }),
    ("priors", "Values of Pi(C1), comma separated", |c, v| {
        c.priors = list(v, number)?;
        Ok(())
    }),
    ("test-points", "Test points as x:y,x:y", |c, v| {
        c.test_points = points(v)?;
        Ok(())
    }),
    ("sigma", "Gaussian bandwidth for sweep-prior", |c, v| {
        c.sigma = positive(v)?;
        Ok(())
    }),
    ("epsilon", "KBR1 weight regularization for sweep-prior", |c, v| {
        c.epsilon = nonnegative(v)?;
        Ok(())
    }),
    ("delta", "KBR1 operator regularization for sweep-prior", |c, v| {
        c.delta = nonnegative(v)?;
        Ok(())
    }),
    ("sigma-grid", "Bandwidths for sweep-grid", |c, v| {
        c.sigma_grid = list(v, positive)?;
        Ok(())
    }),
    ("epsilon-grid", "Epsilon values for sweep-grid", |c, v| {
        c.epsilon_grid = list(v, nonnegative)?;
        Ok(())
    }),
    ("delta-grid", "Delta values for sweep-grid", |c, v| {
        c.delta_grid = list(v, nonnegative)?;
        Ok(())
    }),
    ("pinv-tol", "KBR2 pseudoinverse relative cutoff, or auto", |c, v| {
        c.pinv = pinv(v)?;
        Ok(())
    }),
    ("plot-data", "Write per-cell plot tables (true/false)", |c, v| {
        c.plot_data = boolean(v)?;
        Ok(())
    }),
    ("svg", "Also render an SVG chart per cell", |c, v| {
        c.svg = boolean(v)?;
        Ok(())
    }),
    ("trials", "Trials for gram-nonsingular (500) and weights-nonzero (200)", |c, v| {
        c.trials = Some(count(v)?);
        Ok(())
    }),
    ("diag-n", "Sample size for gram-nonsingular and weights-nonzero", |c, v| {
        c.diag_n = count(v)?;
        Ok(())
    }),
    ("dim", "Dimension for gram-nonsingular and weights-nonzero", |c, v| {
        c.dim = count(v)?;
        Ok(())
    }),
    ("diag-sigma", "Bandwidth for gram-nonsingular and weights-nonzero", |c, v| {
        c.diag_sigma = positive(v)?;
        Ok(())
    }),
    ("weights-epsilon", "Epsilon for weights-nonzero", |c, v| {
        c.weights_epsilon = positive(v)?;
        Ok(())
    }),
    ("prior-atoms", "Number of random prior atoms for weights-nonzero", |c, v| {
        c.prior_atoms = count(v)?;
        Ok(())
    }),
    ("gap-deltas", "Delta values for prior-independence", |c, v| {
        c.gap_deltas = list(v, nonnegative)?;
        Ok(())
    }),
    ("probe-n", "Sample size for divergence-probe", |c, v| {
        c.probe_n = count(v)?;
        Ok(())
    }),
    ("probe-sigma0", "Data scale for divergence-probe", |c, v| {
        c.probe_sigma0 = positive(v)?;
        Ok(())
    }),
    ("probe-sigma", "Bandwidth for divergence-probe", |c, v| {
        c.probe_sigma = positive(v)?;
        Ok(())
    }),
    ("probe-target", "constant:<c> or kernel-section:<a>", |c, v| {
        c.probe_target = probe_target(v)?;
        Ok(())
    }),
    ("probe-form", "default, regression or range", |c, v| {
        c.probe_form = probe_form(v)?;
        Ok(())
    }),
    ("probe-epsilons", "Strictly decreasing epsilon values for divergence-probe", |c, v| {
        c.probe_epsilons = list(v, positive)?;
        Ok(())
    }),
];

/// Parses flat `key = value` text: one pair per line, `#` starts a comment,
/// blank lines are ignored. Underscores in keys are read as dashes.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CliError::Usage {
            key: format!("line {}", lineno + 1),
            reason: format!("expected key = value, got {line:?}"),
        })?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let (_, _, setter) = KEYS
            .iter()
            .find(|(k, _, _)| *k == key)
            .ok_or_else(|| CliError::Usage {
                key: key.to_string(),
                reason: "unknown key".into(),
            })?;
        setter(self, value).map_err(|reason| CliError::Usage {
            key: key.to_string(),
            reason,
        })
    }

    /// Applies the file layer, then the flag layer.
    pub fn from_layers(file: Option<&str>, flags: &[(String, String)]) -> Result<Self, CliError> {
        let mut config = RunConfig::default();
        if let Some(text) = file {
            for (k, v) in parse_key_values(text)? {
                config.set(&k, &v)?;
            }
        }
        for (k, v) in flags {
            config.set(k, v)?;
        }
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<(), CliError> {
        let usage = |key: &str, reason: String| CliError::Usage {
            key: key.into(),
            reason,
        };
        if self.class_means.len() != self.class_vars.len() {
            return Err(usage(
                "class-vars",
                format!(
                    "{} variances for {} class means",
                    self.class_vars.len(),
                    self.class_means.len()
                ),
            ));
        }
        if let Some(p) = self.priors.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(usage("priors", format!("prior {p} outside (0, 1)")));
        }
        Ok(())
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        let d = self.class_means.first().map_or(0, Vec::len);
        ExperimentSpec {
            n_per_class: self.n_per_class,
            class_means: self.class_means.clone(),
            class_covs: self
                .class_vars
                .iter()
                .map(|v| DMatrix::from_diagonal_element(d, d, *v))
                .collect(),
            replicates: self.replicates.unwrap_or(100),
            priors: self.priors.clone(),
            test_points: self.test_points.clone(),
            sigma_grid: self.sigma_grid.clone(),
            epsilon_grid: self.epsilon_grid.clone(),
            delta_grid: self.delta_grid.clone(),
            master_seed: self.seed,
            pinv: self.pinv,
        }
    }

    /// Spec whose replicate count is the protocol's 100; `replicates` is
    /// applied separately as a reduction.
    pub fn protocol_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            replicates: 100.max(self.replicates.unwrap_or(0)),
            ..self.experiment_spec()
        }
    }
}

/// Key/value pairs as they would appear in a config file.
pub fn describe(config: &RunConfig) -> BTreeMap<&'static str, String> {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
    let pts = |v: &[Vec<f64>]| {
        v.iter()
            .map(|p| p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":"))
            .collect::<Vec<_>>()
            .join(",")
    };
    let mut m = BTreeMap::new();
    m.insert("n-per-class", config.n_per_class.to_string());
    m.insert("class-means", pts(&config.class_means));
    m.insert("class-vars", join(&config.class_vars));
    m.insert("priors", join(&config.priors));
    m.insert("test-points", pts(&config.test_points));
    m
}
