use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use irs_odrl::drl::AgentKind;
use irs_odrl::harness::commands::output_dir;
use irs_odrl::harness::{
    cmd_scalability, cmd_scaling_law, cmd_sweep_position, cmd_train, cmd_validate_solver,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "irs-odrl", version, about = "IRS beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Repetition count override.
    #[arg(long, global = true)]
    repetitions: Option<usize>,

    /// Agent override: mf-ddpg, od-ddpg, mf-dqn, od-dqn or ao-only.
    #[arg(long, global = true)]
    agent: Option<AgentKind>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write per-step records and summaries.
    Train,
    /// Converged transmit power versus IRS position.
    SweepPosition,
    /// Per-epoch run time versus system size.
    Scalability,
    /// Check the inner solver against brute-force oracles.
    ValidateSolver,
    /// Reflected power versus IRS size.
    ScalingLaw,
}

fn run(cli: Cli) -> irs_odrl::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.experiment.base_seed = s;
    }
    if let Some(r) = cli.repetitions {
        cfg.experiment.repetitions = r;
    }
    if let Some(a) = cli.agent {
        cfg.experiment.agent = a;
    }
    let out = output_dir(&cfg, cli.out.as_deref());
    match cli.command {
        Command::Train => {
            let report = cmd_train(&cfg, &out)?;
            eprintln!(
                "trained {} x{} for {} episodes -> {}",
                report.kind,
                report.runs.len(),
                cfg.experiment.episodes,
                out.display()
            );
        }
        Command::SweepPosition => {
            let report = cmd_sweep_position(&cfg, &out)?;
            for (p, s) in &report.trends {
                eprintln!("p_irs_w = {p}: spearman {s:.3}");
            }
        }
        Command::Scalability => {
            let report = cmd_scalability(&cfg, &out)?;
            for r in &report.rows {
                eprintln!(
                    "{:8} M={:<2} N={:<3} {:.3e} s/epoch",
                    r.method,
                    r.m,
                    r.n,
                    r.summary.mean_epoch_time_s.unwrap_or(f64::NAN)
                );
            }
        }
        Command::ValidateSolver => {
            let checks = cmd_validate_solver(&cfg, &out)?;
            let max_gap = checks.iter().map(|c| c.rel_gap).fold(f64::NEG_INFINITY, f64::max);
            eprintln!("{} instances, max relative gap {max_gap:.3e}", checks.len());
        }
        Command::ScalingLaw => {
            for r in cmd_scaling_law(&cfg, &out)? {
                eprintln!("N={:<4} aligned ratio {:?}", r.n, r.aligned_ratio);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
