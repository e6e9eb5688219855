use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rts_cli::config::{ConfigError, ExperimentConfig};
use rts_cli::{estimate, sweep, train};

#[derive(Parser)]
#[command(name = "rts", version, about = "Partition functions by Rao-Blackwellized tempered sampling")]
struct Cli {
    /// Worker threads for the chain pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the manifest's `out`, else `./out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Tempered run plus the requested estimators; writes estimates.json, stats.csv, transitions.csv.
    Estimate(RunArgs),
    /// Exact log Z of a stored RBM by enumeration.
    Oracle { params: PathBuf },
    /// RBM training with online log Z tracking; writes trace.csv and checkpoints.
    Train(RunArgs),
    /// Bootstrap RMSE against the number of temperatures; writes sweep.csv.
    SweepK(RunArgs),
    /// Per-temperature HMC step sizes for a Gaussian mixture; writes hmc_tune.csv.
    HmcTune(RunArgs),
}

fn prepare(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let dir = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok((cfg, dir))
}

fn done(dir: &Path, what: &str) {
    println!("wrote {what} to {}", dir.display());
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("setting up worker threads")?;
    }
    match cli.command {
        Command::Estimate(a) => {
            let (cfg, dir) = prepare(&a)?;
            let res = estimate::cmd_estimate(&cfg, &dir)?;
            for e in &res.estimates {
                println!("{:<10} log Z = {:.6}", e.method.name(), e.log_z.last().copied().unwrap_or(f64::NAN));
            }
            if let Some(z) = res.oracle_log_z {
                println!("{:<10} log Z = {z:.6}", "exact");
            }
            done(&dir, "estimates.json, stats.csv, transitions.csv");
        }
        Command::Oracle { params } => println!("{}", train::cmd_oracle(&params)?),
        Command::Train(a) => {
            let (cfg, dir) = prepare(&a)?;
            let s = train::cmd_train(&cfg, &dir)?;
            if let Some(z) = s.final_log_zhat_k {
                println!("tracked log Z = {z:.6} after {} records", s.records);
            }
            done(&dir, "trace.csv, final.rbm, train.json");
        }
        Command::SweepK(a) => {
            let (cfg, dir) = prepare(&a)?;
            for r in sweep::cmd_sweep_k(&cfg, &dir)? {
                println!("K={:<5} {:<8} rmse {:.4}", r.k, r.method.name(), r.rmse);
            }
            done(&dir, "sweep.csv");
        }
        Command::HmcTune(a) => {
            let (cfg, dir) = prepare(&a)?;
            let s = train::cmd_hmc_tune(&cfg, &dir)?;
            println!("eps at beta=1 {:.4}, at beta=0 {:.4}", s.tuning.eps_min, s.tuning.eps_max);
            done(&dir, "hmc_tune.csv, hmc_tune.json");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            // bad manifests are usage errors
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
