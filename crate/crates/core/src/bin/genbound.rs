use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use genbound::experiment::{
    cmd_bound, cmd_compare, cmd_gen_data, cmd_sweep, cmd_train, cmd_verify, ExpError, ExperimentConfig, GenKind,
    SweepAxis,
};

#[derive(Parser)]
#[command(name = "genbound", version, about = "Trajectory-based generalization bounds for homogeneous ReLU networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train and write trajectory.csv, bound_report.json, run.json
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run property-check suites, write verification.json
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Add a check with a corrupted gradient; it must fail
        #[arg(long)]
        inject_bug: bool,
    },
    /// Recompute the bound from a trajectory CSV
    Bound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SGLD over the configured betas plus a GD row
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One training run per value of the axis
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset CSV or an IDX fixture directory
    GenData {
        #[arg(long)]
        kind: GenKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        c_y: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, ExpError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> Result<bool, ExpError> {
    match cli.cmd {
        Cmd::Train { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let dir = out_dir(out, &cfg);
            let r = cmd_train(&cfg, &dir)?;
            println!(
                "{}: final train loss {}, CL {}, bound {} -> {}",
                config.display(),
                r.summary.final_train_loss,
                r.summary.final_cl,
                r.report.bound,
                dir.display()
            );
        }
        Cmd::Verify { suite, seed, out, inject_bug } => {
            let rep = cmd_verify(&suite, seed, inject_bug, &out)?;
            for c in &rep.checks {
                let tag = if c.passed { "ok  " } else { "FAIL" };
                println!(
                    "{tag} {:<32} n={:<6} max_violation={:e} tol={:e}",
                    c.name, c.instances, c.max_violation, c.tolerance
                );
            }
            return Ok(rep.passed);
        }
        Cmd::Bound { config, trajectory, out } => {
            let cfg = load(&config, None)?;
            let (rep, _) = cmd_bound(&cfg, &trajectory, out.as_deref())?;
            println!(
                "CL {} complexity {} confidence {} bound {}",
                rep.cl, rep.complexity_term, rep.confidence_term, rep.bound
            );
        }
        Cmd::Compare { config, seed, out } => {
            let cfg = load(&config, seed)?;
            for r in cmd_compare(&cfg, &out_dir(out, &cfg))? {
                println!(
                    "{:?} beta={} CL={} cl_bound={} sgld={}",
                    r.algorithm, r.beta, r.cl, r.cl_bound, r.sgld_bound
                );
            }
        }
        Cmd::Sweep { config, axis, seed, out } => {
            let cfg = load(&config, seed)?;
            for r in cmd_sweep(&cfg, axis, &out_dir(out, &cfg))? {
                println!("{}={} eta={} CL={} bound={}", axis.name(), r.value, r.eta, r.final_cl, r.bound);
            }
        }
        Cmd::GenData { kind, n, seed, out, c_y, noise } => cmd_gen_data(kind, n, seed, &out, c_y, noise)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
