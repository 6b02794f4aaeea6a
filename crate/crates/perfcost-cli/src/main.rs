//! `perfcost`: configuration-driven experiments for strategic-response cost
//! inference. Exit codes: 0 success, 2 invalid configuration or arguments,
//! 3 replication failure (partial results are preserved in the output
//! directory next to errors.json).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use perfcost_cli::config::{ExperimentConfig, ExperimentKind};
use perfcost_cli::{report, runner};

#[derive(Parser)]
#[command(name = "perfcost", version, about = "Strategic-response cost inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Added to every seed in the config.
    #[arg(long)]
    seed_offset: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a cost potential from ex-ante and ex-post samples.
    FitCost(RunArgs),
    /// 1D map/derivative estimation across sample sizes and benefit
    /// misspecifications.
    FitMapEval(RunArgs),
    /// Paired-regression error decay study with its deviation bound.
    ConvergenceStudy(RunArgs),
    /// Fit the cost, then minimize performative risk with the plug-in map.
    Optimize(RunArgs),
    /// Method comparison across numbers of published classifiers.
    Benchmark(RunArgs),
    /// Strategic-OLS closed forms: misspecification scale and regret.
    OlsOracle(RunArgs),
    /// Summarize a results directory into markdown.
    Report {
        /// Directory holding harness CSV/JSON outputs.
        #[arg(long, value_name = "dir")]
        r#in: PathBuf,
    },
}

fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("PERF_COST_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(num_threads_default);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

fn num_threads_default() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if cfg.kind != kind {
        eprintln!(
            "config error: config kind '{}' does not match subcommand '{}'",
            cfg.kind.as_str(),
            kind.as_str()
        );
        return ExitCode::from(2);
    }
    if let Some(offset) = args.seed_offset {
        cfg.seed_offset = cfg.seed_offset.wrapping_add(offset);
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("config error: {e}");
        return ExitCode::from(2);
    }
    let pool = thread_pool();
    let outcome = pool.install(|| runner::run_experiment(&cfg));
    match outcome {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.replication_errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                for e in &outcome.replication_errors {
                    eprintln!("replication failed [{}]: {}", e.context, e.message);
                }
                eprintln!(
                    "{} replication(s) failed; partial results preserved in {}",
                    outcome.replication_errors.len(),
                    cfg.out_dir.display()
                );
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::FitCost(a) => run(ExperimentKind::FitCost, a),
        Command::FitMapEval(a) => run(ExperimentKind::FitMapEval, a),
        Command::ConvergenceStudy(a) => run(ExperimentKind::ConvergenceStudy, a),
        Command::Optimize(a) => run(ExperimentKind::Optimize, a),
        Command::Benchmark(a) => run(ExperimentKind::Benchmark, a),
        Command::OlsOracle(a) => run(ExperimentKind::OlsOracle, a),
        Command::Report { r#in } => match report::emit_report(&r#in) {
            Ok(path) => {
                println!("wrote {}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("report error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
