//! CSV tables, metadata sidecars and per-cell plot data. Every file is
//! written to a temporary sibling and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kbr_core::diagnostics::{ProbePoint, TrialReport};
use kbr_core::experiments::{ClassifierId, SweepResult, SweepRow};

use crate::CliError;

pub const SWEEP_COLUMNS: [&str; 11] = [
    "classifier",
    "prior_c1",
    "test_x",
    "test_y",
    "sigma",
    "epsilon",
    "delta",
    "mean_post_c1",
    "sem",
    "n_replicates",
    "n_errors",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Something that can be written as a CSV table.
pub trait CsvTable {
    fn header(&self) -> Vec<String>;
    fn records(&self) -> Result<Vec<Vec<String>>, CliError>;
}

impl CsvTable for SweepResult {
    fn header(&self) -> Vec<String> {
        SWEEP_COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn records(&self) -> Result<Vec<Vec<String>>, CliError> {
        self.rows.iter().map(sweep_record).collect()
    }
}

fn sweep_record(r: &SweepRow) -> Result<Vec<String>, CliError> {
    if r.test_point.len() != 2 {
        return Err(CliError::Usage {
            key: "test-points".into(),
            reason: format!("CSV output needs 2-d test points, got {:?}", r.test_point),
        });
    }
    Ok(vec![
        r.classifier.to_string(),
        fmt_f64(r.prior_c1),
        fmt_f64(r.test_point[0]),
        fmt_f64(r.test_point[1]),
        fmt_f64(r.sigma),
        fmt_f64(r.epsilon),
        fmt_f64(r.delta),
        fmt_f64(r.mean_post_c1),
        fmt_f64(r.sem),
        r.n_replicates.to_string(),
        r.n_errors.to_string(),
    ])
}

impl CsvTable for TrialReport {
    fn header(&self) -> Vec<String> {
        ["check", "statistic", "threshold", "trials", "passes", "pass_fraction", "min", "median", "seed"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn records(&self) -> Result<Vec<Vec<String>>, CliError> {
        Ok(vec![vec![
            self.check.to_string(),
            self.statistic.to_string(),
            fmt_f64(self.threshold),
            self.trials.to_string(),
            self.passes.to_string(),
            fmt_f64(self.pass_fraction()),
            fmt_f64(self.min),
            fmt_f64(self.median),
            self.seed.to_string(),
        ]])
    }
}

/// Divergence probe output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSeries {
    pub target: String,
    pub form: String,
    pub points: Vec<ProbePoint>,
}

impl CsvTable for ProbeSeries {
    fn header(&self) -> Vec<String> {
        ["target", "form", "epsilon", "norm"].iter().map(|s| s.to_string()).collect()
    }

    fn records(&self) -> Result<Vec<Vec<String>>, CliError> {
        Ok(self
            .points
            .iter()
            .map(|p| {
                vec![
                    self.target.clone(),
                    self.form.clone(),
                    fmt_f64(p.epsilon),
                    fmt_f64(p.norm),
                ]
            })
            .collect())
    }
}

/// Prior-independence gaps aggregated over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub delta: f64,
    pub test_point: Vec<f64>,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub n_replicates: usize,
    pub n_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
}

impl CsvTable for GapTable {
    fn header(&self) -> Vec<String> {
        ["delta", "test_x", "test_y", "mean_gap", "max_gap", "n_replicates", "n_errors"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn records(&self) -> Result<Vec<Vec<String>>, CliError> {
        Ok(self
            .rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.delta),
                    fmt_f64(r.test_point[0]),
                    fmt_f64(r.test_point[1]),
                    fmt_f64(r.mean_gap),
                    fmt_f64(r.max_gap),
                    r.n_replicates.to_string(),
                    r.n_errors.to_string(),
                ]
            })
            .collect())
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn csv_bytes(header: &[String], records: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.error().to_string()))
}

/// Header row, then one row per record.
pub fn emit_csv<T: CsvTable + ?Sized>(table: &T, path: &Path) -> Result<(), CliError> {
    let bytes = csv_bytes(&table.header(), &table.records()?)?;
    write_atomic(path, &bytes)
}

/// Metadata sidecar path: `<path>.meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Flat `key = value` sidecar next to a CSV file.
pub fn emit_meta(csv_path: &Path, entries: &[(String, String)]) -> Result<(), CliError> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    write_atomic(&meta_path(csv_path), text.as_bytes())
}

/// Reads a sweep CSV written by [`emit_csv`].
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, CliError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_COLUMNS {
        return Err(CliError::Csv(format!("unexpected header {header:?}")));
    }
    let bad = |what: &str| CliError::Csv(format!("bad {what} in {}", path.display()));
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(SWEEP_COLUMNS[i]));
        let u = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(SWEEP_COLUMNS[i]));
        rows.push(SweepRow {
            classifier: ClassifierId::parse(&rec[0]).ok_or_else(|| bad("classifier"))?,
            prior_c1: f(1)?,
            test_point: vec![f(2)?, f(3)?],
            sigma: f(4)?,
            epsilon: f(5)?,
            delta: f(6)?,
            mean_post_c1: f(7)?,
            sem: f(8)?,
            n_replicates: u(9)?,
            n_errors: u(10)?,
            first_error: None,
        });
    }
    Ok(rows)
}

/// `(mean, lower, upper)`.
pub type Band = (f64, f64, f64);

/// Per-cell plot table: one row per prior, `mean`, `lower = mean - sem`,
/// `upper = mean + sem` for each classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub test_point: Vec<f64>,
    pub sigma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub priors: Vec<f64>,
    /// `(classifier, [(mean, lower, upper)] per prior)`.
    pub series: Vec<(ClassifierId, Vec<Band>)>,
}

impl PlotTable {
    pub fn file_stem(&self) -> String {
        format!(
            "cell_y{}_{}_s{:e}_e{:e}_d{:e}",
            self.test_point[0], self.test_point[1], self.sigma, self.epsilon, self.delta
        )
    }
}

impl CsvTable for PlotTable {
    fn header(&self) -> Vec<String> {
        let mut h = vec!["prior_c1".to_string()];
        for (id, _) in &self.series {
            for suffix in ["mean", "lower", "upper"] {
                h.push(format!("{id}_{suffix}"));
            }
        }
        h
    }

    fn records(&self) -> Result<Vec<Vec<String>>, CliError> {
        Ok(self
            .priors
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut r = vec![fmt_f64(*p)];
                for (_, values) in &self.series {
                    let (m, lo, hi) = values[i];
                    r.extend([fmt_f64(m), fmt_f64(lo), fmt_f64(hi)]);
                }
                r
            })
            .collect())
    }
}

/// Groups sweep rows into one table per (test point, sigma, epsilon, delta),
/// in first-appearance order.
pub fn plot_tables(result: &SweepResult) -> Vec<PlotTable> {
    let mut tables: Vec<PlotTable> = Vec::new();
    for r in &result.rows {
        let same_cell = |t: &PlotTable| {
            t.test_point == r.test_point && t.sigma == r.sigma && t.epsilon == r.epsilon && t.delta == r.delta
        };
        let idx = match tables.iter().position(same_cell) {
            Some(i) => i,
            None => {
                tables.push(PlotTable {
                    test_point: r.test_point.clone(),
                    sigma: r.sigma,
                    epsilon: r.epsilon,
                    delta: r.delta,
                    priors: Vec::new(),
                    series: ClassifierId::ALL.iter().map(|id| (*id, Vec::new())).collect(),
                });
                tables.len() - 1
            }
        };
        let t = &mut tables[idx];
        if !t.priors.contains(&r.prior_c1) {
            t.priors.push(r.prior_c1);
        }
        let band = (r.mean_post_c1, r.mean_post_c1 - r.sem, r.mean_post_c1 + r.sem);
        if let Some((_, values)) = t.series.iter_mut().find(|(id, _)| *id == r.classifier) {
            values.push(band);
        }
    }
    tables
}

/// Writes one CSV (and optionally one SVG) per cell into `dir`; returns the
/// CSV paths.
pub fn emit_plot_data(result: &SweepResult, dir: &Path, svg: bool) -> Result<Vec<PathBuf>, CliError> {
    if result.rows.is_empty() {
        return Err(CliError::Usage {
            key: "plot-data".into(),
            reason: "nothing to plot: the sweep result is empty".into(),
        });
    }
    let mut written = Vec::new();
    for table in plot_tables(result) {
        let path = dir.join(format!("{}.csv", table.file_stem()));
        emit_csv(&table, &path)?;
        if svg {
            let image = crate::plot::render_svg(&table);
            write_atomic(&dir.join(format!("{}.svg", table.file_stem())), image.as_bytes())?;
        }
        written.push(path);
    }
    Ok(written)
}
