use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use o2orl::harness::{self, finetune_dir, RunConfig};
use o2orl::par::Parallelism;
use o2orl::Error;

/// Offline-to-online RL pipeline.
#[derive(Parser)]
#[command(name = "o2orl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quiet: bool,
    /// Run seeds one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline dataset.
    GenData(Common),
    /// Train one offline checkpoint per seed.
    TrainOffline(Common),
    /// Fine-tune every seed online.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file, or a directory of `seed_<s>/checkpoint.ck`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Aggregate run records into metrics and plots.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directories searched for run records (default: the finetune output).
        #[arg(long = "runs", num_args = 1..)]
        runs: Vec<PathBuf>,
    },
}

impl Common {
    fn resolve(&self, required: bool) -> Result<(RunConfig, PathBuf), Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None if required => return Err(Error::Config("--config is required".into())),
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output = out.clone();
        }
        let out = config.output.clone();
        Ok((config, out))
    }

    fn mode(&self) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData(c) => {
            let (config, out) = c.resolve(true)?;
            let r = harness::gen_data(&config, &out)?;
            if !c.quiet {
                println!(
                    "wrote {} transitions to {}; behavior score {}",
                    r.transitions,
                    r.path.display(),
                    fmt(r.behavior_score)
                );
            }
        }
        Command::TrainOffline(c) => {
            let (config, out) = c.resolve(true)?;
            let r = harness::train_offline_runs(&config, &out, c.mode())?;
            if !c.quiet {
                for (s, path, score) in &r.runs {
                    println!("seed {s}: {} (final eval {})", path.display(), fmt(*score));
                }
            }
        }
        Command::Finetune { common: c, checkpoint } => {
            let (config, out) = c.resolve(true)?;
            let r = harness::finetune_runs(&config, &out, checkpoint.as_deref(), c.mode())?;
            if !c.quiet {
                for s in &r.runs {
                    println!(
                        "{} seed {}: p0 {} degradation {} final improvement {} ({} episodes, {} steps)",
                        s.algorithm,
                        s.seed_index,
                        fmt(s.p0),
                        fmt(s.degradation),
                        fmt(s.final_improvement),
                        s.episodes,
                        s.steps
                    );
                }
                println!("index: {}", r.index.display());
            }
        }
        Command::Analyze { common: c, runs } => {
            let (config, out) = c.resolve(false)?;
            let runs = if runs.is_empty() { vec![finetune_dir(&out)] } else { runs };
            let dest = out.join("analysis");
            let r = harness::analyze(&runs, &dest, &config.analysis, Some(&config.env), config.seed)?;
            if !c.quiet {
                for a in &r.algorithms {
                    let show = |s: Option<harness::Stat>| {
                        s.map_or_else(|| "-".to_string(), |s| format!("{:.4} [{:.4}, {:.4}]", s.mean, s.lo, s.hi))
                    };
                    println!(
                        "{} ({} runs): degradation {} final improvement {} auc {}",
                        a.algorithm,
                        a.runs,
                        show(a.degradation),
                        show(a.final_improvement),
                        show(a.auc)
                    );
                }
                println!("wrote {} files to {}", r.files.len(), dest.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
