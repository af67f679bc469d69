use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ecbench::pipeline::{self, Options, Output, Selection};
use ecbench::{exit_code, output_root, ExperimentConfig, OUTPUT_ENV};
use ecbench_core::models::ModelKind;

/// Benchmark of energy-conserving neural dynamics models.
#[derive(Parser)]
#[command(name = "ecbench", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(short, long, global = true, default_value = "ecbench.toml")]
    config: PathBuf,
    /// Output root; overrides $ECBENCH_OUTPUT and the config.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads; 1 runs everything serially.
    #[arg(short, long, global = true)]
    jobs: Option<usize>,
    /// Replace existing outputs that do not match the config.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Select {
    /// Only this system.
    #[arg(long)]
    system: Option<String>,
    /// Only this model kind (case-insensitive, e.g. clnn).
    #[arg(long)]
    model: Option<ModelKind>,
    /// Only this run seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate training and test datasets.
    Generate,
    /// Train models on the generated training sets.
    Train {
        #[command(flatten)]
        select: Select,
        /// Override train.epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue an unfinished or shorter run instead of refusing.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate trained models on the test sets.
    Evaluate {
        #[command(flatten)]
        select: Select,
        /// Horizons, e.g. 4,20; eval.t_eval by default.
        #[arg(long, value_delimiter = ',')]
        t_eval: Vec<usize>,
        /// Evaluate this run directory instead of the configured runs.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Score the analytic models of the structured kinds instead.
        #[arg(long, conflicts_with = "checkpoint")]
        oracle: bool,
    },
    /// Train and evaluate on growing training-set prefixes.
    Sweep {
        #[arg(long)]
        resume: bool,
    },
    /// Join all reports into reports/summary.csv.
    Report,
}

impl From<Select> for Selection {
    fn from(s: Select) -> Self {
        Selection { system: s.system, model: s.model, seed: s.seed }
    }
}

fn print(outputs: &[Output]) {
    for o in outputs {
        println!("{:<11} {}", o.status.to_string(), o.path.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(ecbench::ConfigError("--jobs must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("starting the worker pool")?;
    let opts = Options { parallel: jobs > 1, force: cli.force };
    if let Command::Report = cli.command {
        let cfg = ExperimentConfig::load(&cli.config).ok();
        let root = match &cfg {
            Some(c) => output_root(cli.output.as_deref(), std::env::var_os(OUTPUT_ENV).map(PathBuf::from), c),
            None => cli
                .output
                .clone()
                .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
                .context("report needs --output, $ECBENCH_OUTPUT or a readable config")?,
        };
        let (out, reports) = pipeline::report(&root)?;
        println!("{} reports joined", reports.len());
        print(&[out]);
        return Ok(());
    }
    let cfg = ExperimentConfig::load(&cli.config)?;
    let root = output_root(cli.output.as_deref(), std::env::var_os(OUTPUT_ENV).map(PathBuf::from), &cfg);
    let outputs = match cli.command {
        Command::Generate => pipeline::generate(&cfg, &root, opts)?,
        Command::Train { select, epochs, resume } => pipeline::train(&cfg, &root, &select.into(), epochs, resume, opts)?,
        Command::Evaluate { select, t_eval, checkpoint, oracle } => {
            let t = if t_eval.is_empty() { cfg.eval.t_eval.clone() } else { t_eval };
            let sel: Selection = select.into();
            if oracle {
                pipeline::evaluate_oracles(&cfg, &root, &sel, &t, opts)?
            } else if let Some(dir) = checkpoint {
                pipeline::evaluate_checkpoint(&cfg, &root, &dir, &t, opts)?
            } else {
                pipeline::evaluate_runs(&cfg, &root, &sel, &t, opts)?
            }
        }
        Command::Sweep { resume } => {
            let (out, rows) = pipeline::sweep(&cfg, &root, resume, opts)?;
            for r in &rows {
                println!("{} {} seed{} n={}: {:.4e}", r.system, r.model, r.seed, r.size, r.mean);
            }
            out
        }
        Command::Report => unreachable!(),
    };
    print(&outputs);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
