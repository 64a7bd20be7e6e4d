//! Command-line entry points for evolution runs, matched comparisons,
//! robustness trials, transcript analysis, and replay verification.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gea_core::engine::EvolutionMode;
use gea_core::error::GeaError;
use gea_core::experiment::{
    analyze_transcript, replay_transcript, run_compare, run_robustness, run_single,
    ExperimentConfig, OutputLayout,
};

#[derive(Parser)]
#[command(
    name = "gea",
    about = "Group-evolving agents experiment harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one evolution run and write its transcript and archive.
    Run {
        #[arg(long, value_parser = parse_mode)]
        mode: EvolutionMode,
        /// Experiment config file (JSON); defaults to the paper-desk preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run seed; defaults to the config's first seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run matched group/tree pairs over every seed and compare them.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seed list overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: PathBuf,
        /// Concurrent seed pairs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Bug-injection repair trials for both evolution modes.
    Robustness {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ancestor, tool-timeline, staged-evaluation, and patch-trajectory
    /// reports for a transcript.
    Analyze {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-execute a transcript from its recorded config and diff every field.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<EvolutionMode, String> {
    match s {
        "gea" => Ok(EvolutionMode::Gea),
        "tree" => Ok(EvolutionMode::Tree),
        other => Err(format!("unknown mode {other:?}, expected gea or tree")),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, GeaError> {
    match path {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::paper_desk()),
    }
}

fn exit_code_for(error: &GeaError) -> u8 {
    match error {
        GeaError::InvalidConfig(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, GeaError> {
    match cli.command {
        Command::Run {
            mode,
            config,
            seed,
            out,
        } => {
            let experiment = load_config(&config)?;
            let out = OutputLayout::new(out)?;
            let mut run_config = experiment.run.clone();
            run_config.mode = mode;
            run_config.seed = seed.unwrap_or(experiment.seeds[0]);
            if let Some(warning) = run_config.stage_plan.overlap_warning() {
                eprintln!("warning: {warning}");
            }
            if mode == EvolutionMode::Tree {
                let factor = run_config.selection.group_size as u32;
                run_config.iterations *= factor;
                run_config.schedule = run_config.schedule.scaled(factor);
                eprintln!(
                    "tree mode: iterations scaled x{factor} to {} for a matched evolved-agent budget",
                    run_config.iterations
                );
            }
            let (transcript, path) = run_single(run_config, &out)?;
            println!(
                "run complete: {} iterations, {} evolved agents, best {:.4}",
                transcript.iterations.len(),
                transcript.evolved_count(),
                transcript
                    .iterations
                    .last()
                    .map(|i| i.best_performance)
                    .unwrap_or(0.0)
            );
            println!("transcript: {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            config,
            seeds,
            out,
            jobs,
        } => {
            let mut experiment = load_config(&config)?;
            if let Some(seeds) = seeds {
                experiment.seeds = seeds;
                experiment.validate()?;
            }
            let out = OutputLayout::new(out)?;
            let report = run_compare(&experiment, &out, jobs)?;
            println!(
                "compare complete: {} seeds, gea wins {} / losses {} / ties {}",
                report.seeds.len(),
                report.wins,
                report.losses,
                report.ties
            );
            match report.sign_test.p_value {
                Some(p) => println!("one-sided sign test p = {p:.6}"),
                None => println!("sign test degenerate (all pairs tied)"),
            }
            println!(
                "mean final best: gea {:.4} vs tree {:.4}",
                report.gea.mean_final_best, report.tree.mean_final_best
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Robustness {
            config,
            trials,
            out,
        } => {
            let experiment = load_config(&config)?;
            let out = OutputLayout::new(out)?;
            let report = run_robustness(&experiment, trials, Some(&out))?;
            println!(
                "robustness complete: {} trials/mode, mean repair iterations gea {:.2} vs tree {:.2}",
                trials, report.summary.mean_gea, report.summary.mean_tree
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Analyze { transcript, out } => {
            let out_layout = OutputLayout::new(out)?;
            analyze_transcript(&transcript, &[1, 3, 5], &out_layout)?;
            println!("analysis reports written");
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { transcript } => {
            let report = replay_transcript(&transcript)?;
            if report.is_clean() {
                println!("replay clean: transcript reproduces exactly");
                Ok(ExitCode::SUCCESS)
            } else {
                for divergence in &report.divergences {
                    eprintln!(
                        "divergence at iteration {}, field {}",
                        divergence.iteration, divergence.field
                    );
                }
                Ok(ExitCode::FAILURE)
            }
        }
    }
}
