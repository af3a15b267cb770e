//! CSV serialization of every computed table, plus the full report bundle.
//!
//! Every file starts with a `# config=<hash> seed=<seed>` comment followed
//! by a header row. Floats are written with 17 significant digits so
//! re-runs are byte-comparable; the column schemas are documented in
//! `docs/csv_schema.md`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bounds::{
    bound_vs_delta, bound_vs_n, lipschitz_table, loss_lipschitz, loss_suprema, BoundInputs,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments::{generate_dataset, train};
use crate::graph::{qg_verify, QGCertificate};
use crate::losses::{loss_landscape, LossKind};

pub const LANDSCAPE_HEADER: &[&str] = &["theta", "loss_exp", "loss_nimp", "loss_vimp"];
pub const BOUND_VS_N_HEADER: &[&str] = &["n", "bound_exp", "bound_nimp", "bound_vimp"];
pub const BOUND_VS_DELTA_HEADER: &[&str] = &["delta", "bound_exp", "bound_nimp", "bound_vimp"];
pub const LIPSCHITZ_HEADER: &[&str] = &["constant", "expression", "value"];
pub const QG_CERTIFICATE_HEADER: &[&str] =
    &["epsilon", "mu", "samples", "worst_ratio", "resolution", "violations"];
pub const QG_VIOLATIONS_HEADER: &[&str] = &["index", "z", "v", "y", "distance", "loss", "ratio"];
pub const TRAINING_HEADER: &[&str] = &[
    "kind",
    "seed",
    "n",
    "theta_true",
    "theta_hat",
    "abs_error",
    "final_loss",
    "iterations",
    "converged",
];
pub const GRAPH_DISTANCE_HEADER: &[&str] =
    &["z", "v", "y", "distance", "nearest_z", "nearest_v", "nearest_y", "resolution", "on_boundary"];

/// 17 significant digits, enough to reproduce the f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes one CSV file with the standard comment line.
pub fn write_csv(
    path: &Path,
    config_hash: &str,
    seed: u64,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# config={config_hash} seed={seed}").expect("string write");
    writeln!(out, "{}", header.join(",")).expect("string write");
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "row width must match header");
        writeln!(out, "{}", row.join(",")).expect("string write");
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, out)?;
    Ok(())
}

/// Outcome of one report section; failures are recorded without aborting
/// the remaining sections.
#[derive(Debug)]
pub struct ReportSection {
    pub name: &'static str,
    pub outcome: std::result::Result<Vec<PathBuf>, String>,
}

impl ReportSection {
    pub fn ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

pub fn write_landscape_csv(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params()?;
    let bounds = cfg.bounds()?;
    let eps = cfg.epsilon()?;
    let noiseless = crate::experiments::NoiseConfig::noiseless(cfg.seed);
    let data = generate_dataset(&params, &bounds, cfg.dataset.n, &noiseless, cfg.dataset.contact_bias)?;
    let thetas: Vec<f64> = cfg
        .sweeps
        .theta_grid
        .values()?
        .into_iter()
        .map(|t| cfg.model.theta_true + t)
        .collect();
    let per_kind: Vec<Vec<(f64, f64)>> = LossKind::ALL
        .iter()
        .map(|k| loss_landscape(&params, &thetas, &data.points, *k, eps))
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = (0..thetas.len())
        .map(|i| {
            vec![
                fmt_f64(thetas[i]),
                fmt_f64(per_kind[0][i].1),
                fmt_f64(per_kind[1][i].1),
                fmt_f64(per_kind[2][i].1),
            ]
        })
        .collect();
    let path = out_dir.join("landscape.csv");
    write_csv(&path, &cfg.hash(), cfg.seed, LANDSCAPE_HEADER, &rows)?;
    Ok(vec![path])
}

/// Bound templates of the three approaches from the closed-form constants.
pub fn bound_templates(cfg: &ExperimentConfig) -> Result<(BoundInputs, BoundInputs, BoundInputs)> {
    let params = cfg.params()?;
    let bounds = cfg.bounds()?;
    let eps = cfg.epsilon()?;
    let table = lipschitz_table(&params, &bounds, eps);
    let sup = loss_suprema(&params, &bounds, eps);
    let lip = loss_lipschitz(&params, &bounds, &table, &sup, eps);
    let mk = |l: f64, b: f64| BoundInputs {
        delta: 0.05,
        n: 1,
        k: 1,
        b_theta: bounds.b_theta,
        l_loss_theta: l,
        b_loss: b,
    };
    Ok((mk(lip.exp_theta, sup.b_exp), mk(lip.nimp_theta, sup.b_nimp), mk(lip.vimp_theta, sup.b_vimp)))
}

pub fn write_bound_curves_csv(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (exp, nimp, vimp) = bound_templates(cfg)?;
    let ns: Vec<u64> = cfg
        .sweeps
        .n_grid_log10
        .values()?
        .into_iter()
        .map(|e| 10f64.powf(e).round().max(1.0) as u64)
        .collect();
    let rows_n: Vec<Vec<String>> = bound_vs_n(&ns, &exp, &nimp, &vimp)?
        .iter()
        .map(|r| {
            vec![
                format!("{}", r.sweep_value as u64),
                fmt_f64(r.bound_exp),
                fmt_f64(r.bound_nimp),
                fmt_f64(r.bound_vimp),
            ]
        })
        .collect();
    let n_path = out_dir.join("bound_vs_n.csv");
    write_csv(&n_path, &cfg.hash(), cfg.seed, BOUND_VS_N_HEADER, &rows_n)?;

    // delta sweep at the configured dataset size
    let n = cfg.dataset.n as u64;
    let (exp, nimp, vimp) = (exp.with_n(n), nimp.with_n(n), vimp.with_n(n));
    let deltas = cfg.sweeps.delta_grid.values()?;
    let rows_d: Vec<Vec<String>> = bound_vs_delta(&deltas, &exp, &nimp, &vimp)?
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.sweep_value),
                fmt_f64(r.bound_exp),
                fmt_f64(r.bound_nimp),
                fmt_f64(r.bound_vimp),
            ]
        })
        .collect();
    let d_path = out_dir.join("bound_vs_delta.csv");
    write_csv(&d_path, &cfg.hash(), cfg.seed, BOUND_VS_DELTA_HEADER, &rows_d)?;
    Ok(vec![n_path, d_path])
}

pub fn write_lipschitz_csv(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params()?;
    let bounds = cfg.bounds()?;
    let table = lipschitz_table(&params, &bounds, cfg.epsilon()?);
    let rows: Vec<Vec<String>> = table
        .as_rows()
        .iter()
        .map(|(name, expr, value)| vec![name.to_string(), expr.to_string(), fmt_f64(*value)])
        .collect();
    let path = out_dir.join("lipschitz_table.csv");
    write_csv(&path, &cfg.hash(), cfg.seed, LIPSCHITZ_HEADER, &rows)?;
    Ok(vec![path])
}

pub fn write_qg_csv(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(Vec<PathBuf>, QGCertificate)> {
    let params = cfg.params()?;
    let bounds = cfg.bounds()?;
    let cert = qg_verify(&params, &bounds, cfg.epsilon()?, cfg.qg.samples, cfg.seed, &cfg.oracle)?;
    let summary = vec![vec![
        fmt_f64(cert.eps),
        fmt_f64(cert.mu),
        format!("{}", cert.samples),
        fmt_f64(cert.worst_ratio),
        fmt_f64(cert.resolution),
        format!("{}", cert.violations.len()),
    ]];
    let cert_path = out_dir.join("qg_certificate.csv");
    write_csv(&cert_path, &cfg.hash(), cfg.seed, QG_CERTIFICATE_HEADER, &summary)?;

    let rows: Vec<Vec<String>> = cert
        .violations
        .iter()
        .map(|v| {
            vec![
                format!("{}", v.index),
                fmt_f64(v.datapoint.x.z),
                fmt_f64(v.datapoint.x.v),
                fmt_f64(v.datapoint.y.0),
                fmt_f64(v.distance),
                fmt_f64(v.loss),
                fmt_f64(v.ratio),
            ]
        })
        .collect();
    let viol_path = out_dir.join("qg_violations.csv");
    write_csv(&viol_path, &cfg.hash(), cfg.seed, QG_VIOLATIONS_HEADER, &rows)?;
    Ok((vec![cert_path, viol_path], cert))
}

pub fn write_training_csv(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let params = cfg.params()?;
    let bounds = cfg.bounds()?;
    let eps = cfg.epsilon()?;
    let mut rows = Vec::new();
    for &seed in &cfg.training_runs.seeds {
        for &n in &cfg.training_runs.n_values {
            let noise = crate::experiments::NoiseConfig {
                sigma_x: cfg.dataset.sigma_x,
                sigma_y: cfg.dataset.sigma_y,
                seed: cfg.seed ^ seed,
            };
            let ds = generate_dataset(&params, &bounds, n, &noise, cfg.dataset.contact_bias)?;
            for kind in LossKind::ALL {
                let r = train(&params, &bounds, &ds, kind, eps, &cfg.train_config(seed))?;
                rows.push(vec![
                    kind.name().to_string(),
                    format!("{seed}"),
                    format!("{n}"),
                    fmt_f64(ds.theta_true),
                    fmt_f64(r.theta_hat),
                    fmt_f64((r.theta_hat - ds.theta_true).abs()),
                    fmt_f64(*r.loss_curve.last().expect("nonempty curve")),
                    format!("{}", r.iterations),
                    format!("{}", r.converged),
                ]);
            }
        }
    }
    let path = out_dir.join("training.csv");
    write_csv(&path, &cfg.hash(), cfg.seed, TRAINING_HEADER, &rows)?;
    Ok(vec![path])
}

/// Runs all report sections, recording per-section failures instead of
/// aborting: landscapes, bound curves, the constant table, the QG
/// certificate, and training replicates.
pub fn run_report(cfg: &ExperimentConfig, out_dir: &Path) -> Vec<ReportSection> {
    let mut sections = Vec::new();
    let mut push = |name: &'static str, outcome: Result<Vec<PathBuf>>| {
        sections.push(ReportSection { name, outcome: outcome.map_err(|e| e.to_string()) });
    };
    push("landscape", write_landscape_csv(cfg, out_dir));
    push("bound_curves", write_bound_curves_csv(cfg, out_dir));
    push("lipschitz_table", write_lipschitz_csv(cfg, out_dir));
    push("qg_certificate", write_qg_csv(cfg, out_dir).map(|(paths, _)| paths));
    push("training", write_training_csv(cfg, out_dir));
    sections
}

/// True when a section reported a certificate violation rather than an
/// operational error.
pub fn qg_failed(cert: &QGCertificate) -> Option<Error> {
    if cert.passed() {
        None
    } else {
        Some(Error::CertificateFailed {
            violations: cert.violations.len(),
            worst_ratio: cert.worst_ratio,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::LinearGrid;

    /// Small config so the report bundle runs in seconds.
    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.n = 40;
        cfg.sweeps.theta_grid = LinearGrid { lo: -0.5, hi: 0.5, points: 21 };
        cfg.sweeps.n_grid_log10 = LinearGrid { lo: 1.0, hi: 6.0, points: 6 };
        cfg.sweeps.delta_grid = LinearGrid { lo: 0.05, hi: 0.95, points: 7 };
        cfg.qg.samples = 60;
        cfg.training_runs.seeds = vec![0, 1];
        cfg.training_runs.n_values = vec![30];
        cfg.trainer.iterations = 1500;
        cfg
    }

    #[test]
    fn fmt_round_trips_f64() {
        for x in [0.0, 1.0, -0.04905, 15.04905, 1e-300, std::f64::consts::PI] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn report_bundle_writes_all_sections() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        let sections = run_report(&cfg, dir.path());
        assert_eq!(sections.len(), 5);
        for s in &sections {
            assert!(s.ok(), "section {} failed: {:?}", s.name, s.outcome);
        }
        for file in [
            "landscape.csv",
            "bound_vs_n.csv",
            "bound_vs_delta.csv",
            "lipschitz_table.csv",
            "qg_certificate.csv",
            "qg_violations.csv",
            "training.csv",
        ] {
            let path = dir.path().join(file);
            assert!(path.exists(), "{file} missing");
            let text = fs::read_to_string(path).unwrap();
            assert!(text.starts_with("# config="), "{file} lacks the comment line");
        }
    }

    #[test]
    fn report_bundle_deterministic() {
        let cfg = small_config();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_report(&cfg, a.path());
        run_report(&cfg, b.path());
        for file in ["landscape.csv", "bound_vs_n.csv", "qg_certificate.csv", "training.csv"] {
            let left = fs::read(a.path().join(file)).unwrap();
            let right = fs::read(b.path().join(file)).unwrap();
            assert_eq!(left, right, "{file} differs between identical runs");
        }
    }

    #[test]
    fn landscape_csv_prediction_columns_match() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        write_landscape_csv(&cfg, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("landscape.csv")).unwrap();
        for line in text.lines().skip(2) {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert!((cols[1] - cols[2]).abs() <= 1e-10, "explicit vs naive implicit: {line}");
        }
    }

    #[test]
    fn schema_documents_every_column() {
        let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/csv_schema.md");
        let schema = fs::read_to_string(&schema_path)
            .unwrap_or_else(|e| panic!("missing {}: {e}", schema_path.display()));
        for header in [
            LANDSCAPE_HEADER,
            BOUND_VS_N_HEADER,
            BOUND_VS_DELTA_HEADER,
            LIPSCHITZ_HEADER,
            QG_CERTIFICATE_HEADER,
            QG_VIOLATIONS_HEADER,
            TRAINING_HEADER,
            GRAPH_DISTANCE_HEADER,
        ] {
            for col in header.iter() {
                assert!(schema.contains(col), "column `{col}` is not documented in csv_schema.md");
            }
        }
    }
}
