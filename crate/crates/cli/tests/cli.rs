use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kbr_cli::output::read_sweep_csv;
use kbr_core::experiments::ClassifierId;

fn kbr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbr"))
        .args(args)
        .env_remove("KBR_OUTPUT_DIR")
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(str::to_string).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn default_run_writes_sweep_meta_and_plot_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kbr(tmp.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));

    let dir = tmp.path().join("kbr-out");
    let rows = read_sweep_csv(&dir.join("sweep-prior.csv")).unwrap();
    assert_eq!(rows.len(), 4 * 9 * 3);
    assert!(rows.iter().all(|r| r.n_replicates == 100 && r.n_errors == 0));

    let meta = fs::read_to_string(dir.join("sweep-prior.csv.meta")).unwrap();
    for key in ["seed = 20240611", "rng_family = ", "pinv_tolerance = ", "replicates = 100"] {
        assert!(meta.contains(key), "{key} missing from\n{meta}");
    }

    let plots: Vec<_> = fs::read_dir(dir.join("plot-sweep-prior"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    assert_eq!(plots.len(), 3);
    for p in &plots {
        let (header, rows) = read_table(p);
        assert_eq!(header.len(), 1 + 4 * 3);
        assert_eq!(rows.len(), 9);
        for row in &rows {
            for k in 0..4 {
                let (m, lo, hi) = (row[1 + 3 * k], row[2 + 3 * k], row[3 + 3 * k]);
                assert!(lo <= m && m <= hi, "{p:?}: {row:?}");
            }
        }
    }

    // BR_th at (0.5, 0.5) echoes the prior
    let centre = plots
        .iter()
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("cell_y0.5_0.5"))
        .expect("plot table at (0.5, 0.5)");
    let (header, rows) = read_table(centre);
    let col = header.iter().position(|h| h == "BR_th_mean").unwrap();
    for row in &rows {
        assert!((row[col] - row[0]).abs() < 1e-12);
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let a = kbr(tmp.path(), &["sweep-prior", "--replicates", "10", "--output-dir", "a"]);
    let b = kbr(tmp.path(), &["sweep-prior", "--replicates", "10", "--output-dir", "b"]);
    assert!(a.status.success() && b.status.success());
    let read = |d: &str| fs::read(tmp.path().join(d).join("sweep-prior.csv")).unwrap();
    assert_eq!(read("a"), read("b"));

    let c = kbr(tmp.path(), &["--replicates", "10", "--seed", "7", "--output-dir", "c"]);
    assert!(c.status.success());
    assert_ne!(read("a"), read("c"));
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_kbr"))
        .args(["--replicates", "3", "--plot-data", "false"])
        .env("KBR_OUTPUT_DIR", "from-env")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("from-env/sweep-prior.csv").exists());
    assert!(!tmp.path().join("from-env/plot-sweep-prior").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kbr(tmp.path(), &["--sigma", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sigma"));
    assert_eq!(kbr(tmp.path(), &["--bogus", "1"]).status.code(), Some(2));
    assert_eq!(kbr(tmp.path(), &["diagnose", "nonsense"]).status.code(), Some(2));

    // G_Y is numerically singular at a huge bandwidth, so delta = 0 fails
    // on every replicate
    let out = kbr(
        tmp.path(),
        &["--replicates", "3", "--sigma", "1e3", "--epsilon", "0.1", "--delta", "0"],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("warning"));
    let rows = read_sweep_csv(&tmp.path().join("kbr-out/sweep-prior.csv")).unwrap();
    let kbr1: Vec<_> = rows.iter().filter(|r| r.classifier == ClassifierId::Kbr1).collect();
    assert!(kbr1.iter().all(|r| r.is_hard_failure() && r.mean_post_c1.is_nan()));
    assert!(rows
        .iter()
        .filter(|r| r.classifier == ClassifierId::BrTh)
        .all(|r| r.n_errors == 0));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("run.conf"),
        "# small run\nreplicates = 4\nseed = 11\npriors = 0.2, 0.8\nplot_data = false\n",
    )
    .unwrap();
    let out = kbr(tmp.path(), &["--config", "run.conf", "--seed", "12"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let meta = fs::read_to_string(tmp.path().join("kbr-out/sweep-prior.csv.meta")).unwrap();
    assert!(meta.contains("seed = 12"), "{meta}");
    assert!(meta.contains("replicates = 4"), "{meta}");
    let rows = read_sweep_csv(&tmp.path().join("kbr-out/sweep-prior.csv")).unwrap();
    assert_eq!(rows.len(), 4 * 2 * 3);
    assert!(rows.iter().all(|r| r.n_replicates == 4));
}

#[test]
fn version_prints() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kbr(tmp.path(), &["version"]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        format!("kbr {}", env!("CARGO_PKG_VERSION"))
    );
}

#[test]
fn diagnostics_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kbr(tmp.path(), &["diagnose", "gram-nonsingular", "--trials", "50"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(tmp.path().join("kbr-out/diagnose-gram-nonsingular.csv")).unwrap();
    let records: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 1);
    assert_eq!(&records[0][3], "50");

    let out = kbr(
        tmp.path(),
        &["diagnose", "divergence-probe", "--probe-target", "kernel-section:0", "--probe-n", "50"],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let mut reader = csv::Reader::from_path(tmp.path().join("kbr-out/diagnose-divergence-probe.csv")).unwrap();
    let col = reader.headers().unwrap().iter().position(|h| h == "norm").unwrap();
    let norms: Vec<f64> = reader.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(norms.len(), 3);
    assert!(norms.windows(2).all(|w| w[1] > w[0]));

    let out = kbr(tmp.path(), &["diagnose", "prior-independence", "--replicates", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(tmp.path().join("kbr-out/diagnose-prior-independence.csv.meta").exists());
}

#[test]
fn svg_charts_on_request() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kbr(tmp.path(), &["--replicates", "3", "--svg"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let svgs = fs::read_dir(tmp.path().join("kbr-out/plot-sweep-prior"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 3);
}
