use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hetvar::methods::{apply_variant, MethodRegistry, MethodSelection};
use hetvar::par::{init_threads_from_env, Execution};
use hetvar::report::{analyze, parse_dataset, read_metrics_csv, write_metrics_csv};
use hetvar::simulation::{full_grid, SimulationConfig};
use hetvar::svg::{plot, Metric};
use hetvar::{AdjustmentPolicy, PitVariant, Result};

#[derive(Parser)]
#[command(name = "hetvar", version, about = "Between-study variance estimation for log-odds-ratios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate τ² and its confidence intervals for a dataset.
    Analyze {
        /// CSV with header study_id,x_t,n_t,x_c,n_c.
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated point estimators; defaults to all built-in ones.
        #[arg(long)]
        estimators: Option<String>,
        /// Comma-separated interval methods; defaults to all built-in ones.
        #[arg(long)]
        intervals: Option<String>,
        #[arg(long, default_value = "only")]
        policy: String,
        /// Variant for bare ssu/smu/fpu ids.
        #[arg(long, default_value = "model")]
        mode: String,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation grid and write the metrics CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Run replicates on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Draw panel figures from a metrics CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze {
            input,
            estimators,
            intervals,
            policy,
            mode,
            level,
            out,
        } => {
            let policy: AdjustmentPolicy = policy.parse()?;
            let variant: PitVariant = mode.parse()?;
            let selection = match (estimators, intervals) {
                (None, None) => MethodSelection::all_builtin(policy),
                (e, i) => MethodSelection::parse(
                    &apply_variant(e.as_deref().unwrap_or(""), variant),
                    &apply_variant(i.as_deref().unwrap_or(""), variant),
                    policy,
                )?,
            };
            let rows = parse_dataset(&std::fs::read_to_string(&input)?)?;
            let report = analyze(&rows, &selection, &MethodRegistry::new(), policy, level)?;
            match out {
                Some(path) => std::fs::write(path, report)?,
                None => print!("{report}"),
            }
        }
        Command::Simulate {
            config,
            reps,
            seed,
            out,
            sequential,
        } => {
            init_threads_from_env()?;
            let mut cfg = SimulationConfig::load(&config)?;
            if let Some(r) = reps {
                cfg.grid.reps = r;
            }
            if let Some(s) = seed {
                cfg.grid.seed = s;
            }
            let existing = if out.exists() {
                read_metrics_csv(&std::fs::read_to_string(&out)?)?
            } else {
                Vec::new()
            };
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            let rows = full_grid(&cfg, &MethodRegistry::new(), &existing, exec, |i, n, cell, skipped| {
                eprintln!(
                    "[{}/{}] k={} sizes={} p_c={} theta={} tau2={}{}",
                    i + 1,
                    n,
                    cell.k,
                    cell.sizes.label(),
                    cell.p_c,
                    cell.theta,
                    cell.tau2,
                    if skipped { " (done)" } else { "" }
                );
            })?;
            std::fs::write(&out, write_metrics_csv(&rows))?;
        }
        Command::Plot {
            input,
            metric,
            level,
            out,
        } => {
            let metric: Metric = metric.parse()?;
            let rows = read_metrics_csv(&std::fs::read_to_string(&input)?)?;
            std::fs::create_dir_all(&out)?;
            for fig in plot(&rows, metric, level)? {
                let path = out.join(&fig.file_name);
                std::fs::write(&path, fig.svg)?;
                eprintln!("wrote {}", path.display());
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
