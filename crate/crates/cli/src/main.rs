//! `nodelab`: dataset generation, training, consistency grids, and reports.

mod commands;
mod config;
mod output;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::output::OutputDir;

#[derive(Parser)]
#[command(
    name = "nodelab",
    version,
    about = "Solver-locked or ODE-like? Neural ODE experiments."
)]
struct Cli {
    /// Worker threads for parallel runs.
    #[arg(long, env = "NODELAB_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset as CSV plus a metadata file.
    Generate(RunArgs),
    /// Train one model per seed and check its consistency across solvers.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Adapt the step size during training.
        #[arg(long)]
        adapt: bool,
    },
    /// Train over a list of step counts and evaluate each model on the solver grid.
    Grid(RunArgs),
    /// Summarize `summary.csv` files from `train` and `grid` runs.
    Report {
        /// Summary files to combine.
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed (for `generate`: the dataset seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn prepare(args: &RunArgs, is_generate: bool) -> Result<(LoadedConfig, ExperimentConfig, PathBuf)> {
    let loaded = LoadedConfig::load(&args.config)?;
    let mut effective = loaded.config.clone();
    if let Some(seed) = args.seed {
        if is_generate {
            effective.dataset.seed = seed;
        } else {
            effective.seeds = vec![seed];
        }
    }
    let out = match (&args.out, &effective.out_dir) {
        (Some(out), _) => out.clone(),
        (None, Some(dir)) => loaded.base_dir.join(dir),
        (None, None) => bail!("no output directory: pass --out or set out_dir in the config"),
    };
    Ok((loaded, effective, out))
}

fn run_command(
    args: &RunArgs,
    name: &str,
    body: impl FnOnce(&ExperimentConfig, &Path, &mut OutputDir) -> Result<Vec<String>>,
) -> Result<bool> {
    let (loaded, effective, out_path) = prepare(args, name == "generate")?;
    let mut out = OutputDir::create(&out_path)?;
    out.echo_config(&loaded.text, &effective)?;
    let failures = body(&effective, &loaded.base_dir, &mut out)?;
    for f in &failures {
        log::error!("{f}");
    }
    out.finish(name, &failures)?;
    log::info!("outputs in {}", out_path.display());
    Ok(failures.is_empty())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    match cli.command {
        Command::Generate(args) => run_command(&args, "generate", |c, _, out| commands::cmd_generate(c, out)),
        Command::Train { run, adapt } => {
            let name = if adapt { "train --adapt" } else { "train" };
            run_command(&run, name, |c, base, out| commands::cmd_train(c, base, adapt, out))
        }
        Command::Grid(args) => run_command(&args, "grid", commands::cmd_grid),
        Command::Report { summaries, out } => {
            let mut dir = OutputDir::create(&out)?;
            let rows = commands::cmd_report(&summaries, &mut dir)?;
            print!("{}", report::render_table(&rows));
            dir.finish("report", &[])?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some runs failed; see manifest.txt");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
