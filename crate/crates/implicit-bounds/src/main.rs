//! Command-line entry point: evaluates the model's constant tables,
//! landscapes, graph distances, certificates, and training runs, writing
//! CSV files into the output directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use implicit_bounds::bounds::{
    empirical_loss_suprema, lipschitz_table, loss_lipschitz, loss_suprema,
};
use implicit_bounds::config::ExperimentConfig;
use implicit_bounds::error::Error;
use implicit_bounds::experiments::{generate_dataset, train};
use implicit_bounds::graph::graph_distance;
use implicit_bounds::losses::{Datapoint, LossKind};
use implicit_bounds::report::{
    self, fmt_f64, run_report, write_csv, write_landscape_csv, write_qg_csv, GRAPH_DISTANCE_HEADER,
};

#[derive(Parser)]
#[command(
    name = "implicit-bounds",
    about = "Losses, generalization bounds, and graph-distance certificates for a rigid-contact toy model",
    version
)]
struct Cli {
    /// Path to a TOML experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (falls back to $IMPLICIT_BOUNDS_OUT, the config's
    /// output_dir, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured loss weight epsilon.
    #[arg(long, global = true)]
    eps: Option<f64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the model's elementary Lipschitz constants.
    Lipschitz,
    /// Print loss suprema (closed-form and Monte-Carlo) and the loss
    /// Lipschitz constants.
    Bounds {
        /// Monte-Carlo samples for the empirical suprema.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// Write the mean-loss landscape of all three losses over the theta grid.
    Landscape,
    /// Distance from one datapoint to the model graph.
    GraphDistance {
        #[arg(long)]
        z: f64,
        #[arg(long)]
        v: f64,
        #[arg(long)]
        y: f64,
    },
    /// Verify quadratic growth of the violation loss; exits 3 on violations.
    QgVerify {
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Train theta under one loss on a generated dataset.
    Train {
        #[arg(long, value_enum, default_value = "violation")]
        kind: KindArg,
    },
    /// Write every report section: landscapes, bound curves, the constant
    /// table, the QG certificate, and training replicates.
    Report,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KindArg {
    Explicit,
    NaiveImplicit,
    Violation,
}

impl From<KindArg> for LossKind {
    fn from(k: KindArg) -> LossKind {
        match k {
            KindArg::Explicit => LossKind::Explicit,
            KindArg::NaiveImplicit => LossKind::NaiveImplicit,
            KindArg::Violation => LossKind::Violation,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.to_string(),
                "exit_code": err.exit_code(),
            });
            eprintln!("{payload}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(eps) = cli.eps {
        cfg.epsilon = implicit_bounds::config::EpsilonSpec::Value(eps);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("IMPLICIT_BOUNDS_OUT").map(PathBuf::from))
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let params = cfg.params()?;
    let bounds = cfg.bounds()?;
    let eps = cfg.epsilon()?;

    match &cli.cmd {
        Cmd::Lipschitz => {
            let table = lipschitz_table(&params, &bounds, eps);
            println!("{:<22} {:<28} {:>24}", "constant", "expression", "value");
            for (name, expr, value) in table.as_rows() {
                println!("{name:<22} {expr:<28} {:>24}", fmt_f64(value));
            }
        }
        Cmd::Bounds { samples } => {
            let sup = loss_suprema(&params, &bounds, eps);
            let emp = empirical_loss_suprema(&params, &bounds, eps, *samples, cfg.seed);
            let table = lipschitz_table(&params, &bounds, eps);
            let lip = loss_lipschitz(&params, &bounds, &table, &sup, eps);
            println!("{:<8} {:>24} {:>24}", "bound", "closed_form", "monte_carlo");
            for (name, a, e) in [
                ("B_f", sup.b_f, emp.b_f),
                ("B_g", sup.b_g, emp.b_g),
                ("B_h", sup.b_h, emp.b_h),
                ("B_exp", sup.b_exp, emp.b_exp),
                ("B_nimp", sup.b_nimp, emp.b_nimp),
                ("B_vimp", sup.b_vimp, emp.b_vimp),
            ] {
                println!("{name:<8} {:>24} {:>24}", fmt_f64(a), fmt_f64(e));
            }
            println!();
            println!("{:<10} {:>24} {:>24}", "loss", "L_theta", "L_theta_general");
            for (name, a, g) in [
                ("explicit", lip.exp_theta, lip.exp_theta_general),
                ("nimp", lip.nimp_theta, lip.nimp_theta_general),
                ("vimp", lip.vimp_theta, lip.vimp_theta_general),
            ] {
                println!("{name:<10} {:>24} {:>24}", fmt_f64(a), fmt_f64(g));
            }
        }
        Cmd::Landscape => {
            let dir = out_dir(cli, &cfg);
            let paths = write_landscape_csv(&cfg, &dir)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Cmd::GraphDistance { z, v, y } => {
            let d = Datapoint::new(*z, *v, *y);
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("datapoint ({z}, {v}, {y})")));
            }
            let r = graph_distance(&params, &bounds, &d, &cfg.oracle)?;
            println!("distance   {}", fmt_f64(r.distance));
            println!("nearest_z  {}", fmt_f64(r.nearest.0.z));
            println!("nearest_v  {}", fmt_f64(r.nearest.0.v));
            println!("nearest_y  {}", fmt_f64(r.nearest.1));
            println!("resolution {}", fmt_f64(r.resolution));
            println!("on_boundary {}", r.on_boundary);
            let dir = out_dir(cli, &cfg);
            let row = vec![vec![
                fmt_f64(*z),
                fmt_f64(*v),
                fmt_f64(*y),
                fmt_f64(r.distance),
                fmt_f64(r.nearest.0.z),
                fmt_f64(r.nearest.0.v),
                fmt_f64(r.nearest.1),
                fmt_f64(r.resolution),
                format!("{}", r.on_boundary),
            ]];
            let path = dir.join("graph_distance.csv");
            write_csv(&path, &cfg.hash(), cfg.seed, GRAPH_DISTANCE_HEADER, &row)?;
            println!("wrote {}", path.display());
        }
        Cmd::QgVerify { samples } => {
            let mut qg_cfg = cfg.clone();
            if let Some(s) = samples {
                qg_cfg.qg.samples = *s;
            }
            let dir = out_dir(cli, &qg_cfg);
            let (paths, cert) = write_qg_csv(&qg_cfg, &dir)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            println!(
                "mu={} eps={} samples={} worst_ratio={} violations={}",
                cert.mu,
                cert.eps,
                cert.samples,
                cert.worst_ratio,
                cert.violations.len()
            );
            if let Some(err) = report::qg_failed(&cert) {
                return Err(err);
            }
        }
        Cmd::Train { kind } => {
            let noise = cfg.noise();
            let ds = generate_dataset(&params, &bounds, cfg.dataset.n, &noise, cfg.dataset.contact_bias)?;
            let r = train(&params, &bounds, &ds, (*kind).into(), eps, &cfg.train_config(cfg.seed))?;
            println!("theta_true {}", fmt_f64(ds.theta_true));
            println!("theta_hat  {}", fmt_f64(r.theta_hat));
            println!("final_loss {}", fmt_f64(*r.loss_curve.last().expect("nonempty")));
            println!("iterations {}", r.iterations);
            println!("converged  {}", r.converged);
        }
        Cmd::Report => {
            let dir = out_dir(cli, &cfg);
            let sections = run_report(&cfg, &dir);
            let mut failed = 0usize;
            for s in &sections {
                match &s.outcome {
                    Ok(paths) => {
                        for p in paths {
                            println!("[{}] wrote {}", s.name, p.display());
                        }
                    }
                    Err(msg) => {
                        failed += 1;
                        eprintln!("[{}] FAILED: {msg}", s.name);
                    }
                }
            }
            if failed > 0 {
                return Err(Error::ReportSections { failed });
            }
        }
    }
    Ok(())
}
