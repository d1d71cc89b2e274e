use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adapd::harness::{
    build_topology, export_figures, grid_search, run_experiment, ExperimentConfig, HarnessError, RunSummary,
};
use adapd::topology::validate_mixing;
use clap::{Args, Parser, Subcommand};

/// Overrides relative output directories when set.
const OUTPUT_ROOT_ENV: &str = "ADAPD_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "adapd", version, about = "Decentralized consensus optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and write traces plus a summary.
    Run(ConfigArgs),
    /// Check the mixing matrix of the configured topology.
    ValidateTopology(ConfigArgs),
    /// Grid-search each algorithm's step parameter, then run the winners.
    Grid(ConfigArgs),
    /// Write per-algorithm mean/CI tables from a finished run.
    ExportFigures {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// `dotted.key=value`, repeatable; values are TOML literals.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::from_path(&args.config, &args.overrides)?;
    if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
        if cfg.output_dir.is_relative() {
            cfg.output_dir = Path::new(&root).join(&cfg.output_dir);
        }
    }
    Ok(cfg)
}

fn report(summary: &RunSummary) -> ExitCode {
    println!("run {} -> {}", summary.name, summary.output_dir.display());
    for a in &summary.algorithms {
        let fin = a.final_metrics.get("stationarity");
        match fin {
            Some(s) => println!(
                "  {:<16} step {:<10} final stationarity {:.4e} ± {:.2e}  ({} trials, {} failed)",
                a.label,
                a.step,
                s.mean,
                s.ci95,
                a.trials,
                a.failures.len()
            ),
            None => println!("  {:<16} step {:<10} all {} trials failed", a.label, a.step, a.trials),
        }
        for f in &a.failures {
            println!("    trial {} (seed {}): {}", f.trial, f.seed, f.message);
        }
    }
    if summary.any_diverged() {
        ExitCode::from(3)
    } else if summary.any_failed() {
        ExitCode::from(4)
    } else {
        ExitCode::SUCCESS
    }
}

fn validate_topology(cfg: &ExperimentConfig) -> Result<ExitCode, HarnessError> {
    let (graph, w) = build_topology(cfg, cfg.seed_base)?;
    let report = validate_mixing(&w, &graph);
    let out = serde_json::json!({
        "n_agents": graph.n_agents(),
        "edges": graph.edges().len(),
        "rho": w.rho(),
        "source": w.source(),
        "report": report,
        "pass": report.all_pass(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if report.all_pass() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn dispatch(cmd: Command) -> Result<ExitCode, HarnessError> {
    match cmd {
        Command::Run(args) => Ok(report(&run_experiment(&load(&args)?)?)),
        Command::Grid(args) => {
            let summary = grid_search(&load(&args)?)?;
            for a in &summary.algorithms {
                for p in &a.grid {
                    let score = p.score.map_or("failed".to_string(), |s| format!("{s:.4e}"));
                    println!("grid {:<16} {:<10} eps_hat {:<8} d {:<5} {score}", a.label, p.value, p.eps_hat, p.decay);
                }
            }
            Ok(report(&summary))
        }
        Command::ValidateTopology(args) => validate_topology(&load(&args)?),
        Command::ExportFigures { run_dir } => {
            for path in export_figures(&run_dir)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
