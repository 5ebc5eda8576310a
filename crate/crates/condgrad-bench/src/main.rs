//! `cgbench` — experiment and verification CLI.
//!
//! Subcommands mirror the experiment kinds: `complete-fw` replicates the
//! completion study at desk scale, `svrf` runs the quadratic finite-sum
//! testbed, `ssvrf` drives the sketched solver and exports factors,
//! `lmo-bench` times the oracle across tolerances, and `verify-bounds`
//! executes the bound suites and exits nonzero on any failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use condgrad_bench::completion::run_fw_completion;
use condgrad_bench::config::{ExperimentConfig, ExperimentKind};
use condgrad_bench::lmobench::run_lmo_bench;
use condgrad_bench::metrics::write_csv;
use condgrad_bench::stochastic::{run_ssvrf, run_svrf};
use condgrad_bench::verify::verify_all;

#[derive(Parser)]
#[command(name = "cgbench", version, about = "Projection-free optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Line-oriented `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (`-` for stdout).
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Base seed; replaces the configured seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Wall-clock budget per run in seconds.
    #[arg(long)]
    time_budget_s: Option<f64>,
    /// Iteration cap per run.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Enable dense shadow checks (debug facility).
    #[arg(long)]
    shadow: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic completion replication over a (rank, tolerance) grid.
    CompleteFw(CommonArgs),
    /// Variance-reduced runs on the quadratic finite-sum testbed.
    Svrf(CommonArgs),
    /// Sketched runs on a rectangular completion instance.
    Ssvrf(CommonArgs),
    /// Oracle timing and accuracy across tolerances.
    LmoBench(CommonArgs),
    /// Execute the bound-verification suites.
    VerifyBounds(CommonArgs),
}

fn build_config(kind: ExperimentKind, args: &CommonArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(path) = &args.config {
        cfg.load_file(path).map_err(|e| e.to_string())?;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(budget) = args.time_budget_s {
        cfg.time_budget_s = Some(budget);
    }
    if let Some(max_iters) = args.max_iters {
        cfg.max_iter = max_iters;
    }
    cfg.shadow |= args.shadow;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::CompleteFw(args) => {
            let cfg = build_config(ExperimentKind::FwCompletion, &args)?;
            let (rows, summaries) = run_fw_completion(&cfg)?;
            write_csv(&rows, &args.out).map_err(|e| e.to_string())?;
            for cell in &summaries {
                eprintln!(
                    "cell r{} xi={:.0e} seed={}: {} iters, {:.3} ms/iter, min rel_err {:.3e}, \
                     eps/xi-bound {:.3e}, eps/schedule-bound {:.3e} ({:?})",
                    cell.rank,
                    cell.xi,
                    cell.seed,
                    cell.iterations,
                    cell.mean_iter_s * 1e3,
                    cell.min_rel_err,
                    cell.worst_eps_vs_xi_bound,
                    cell.worst_eps_vs_schedule_bound,
                    cell.termination,
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Svrf(args) => {
            let cfg = build_config(ExperimentKind::Svrf, &args)?;
            let rows = run_svrf(&cfg)?;
            write_csv(&rows, &args.out).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ssvrf(args) => {
            let cfg = build_config(ExperimentKind::Ssvrf, &args)?;
            let stem = (args.out.as_os_str() != "-").then(|| args.out.with_extension(""));
            let rows = run_ssvrf(&cfg, stem.as_deref())?;
            write_csv(&rows, &args.out).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::LmoBench(args) => {
            let cfg = build_config(ExperimentKind::LmoBench, &args)?;
            let rows = run_lmo_bench(&cfg)?;
            write_csv(&rows, &args.out).map_err(|e| e.to_string())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyBounds(args) => {
            let cfg = build_config(ExperimentKind::VerifyBounds, &args)?;
            let mut completion_cfg = ExperimentConfig::defaults(ExperimentKind::FwCompletion);
            completion_cfg.seeds = cfg.seeds.clone();
            if let Some(budget) = args.time_budget_s {
                completion_cfg.time_budget_s = Some(budget);
            }
            if let Some(max_iters) = args.max_iters {
                completion_cfg.max_iter = max_iters;
            }
            let results = verify_all(Some(&completion_cfg));
            let mut report = String::from("name,measured,bound,margin,pass\n");
            for line in &results {
                report.push_str(&line.report_line());
                report.push('\n');
            }
            if args.out.as_os_str() == "-" {
                print!("{report}");
            } else {
                std::fs::write(&args.out, &report).map_err(|e| e.to_string())?;
                print!("{report}");
            }
            let failures = results.iter().filter(|r| !r.pass).count();
            if failures > 0 {
                eprintln!("{failures} criterion(s) failed");
                Ok(ExitCode::FAILURE)
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
