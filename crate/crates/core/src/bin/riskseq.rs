use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use riskseq::harness::{
    cmd_evaluate, cmd_exposure, cmd_finetune, cmd_generate, cmd_saliency, cmd_sweep, cmd_train, cmd_xcorr_demo,
    summary_csv, ExperimentConfig, ExperimentKind, RunOptions,
};
use riskseq::{Error, Result};

/// Risk-tolerant training experiments on sparsely labelled sequences.
///
/// Exit codes: 0 success, 2 configuration error, 3 data or format error,
/// 4 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "riskseq", version)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Fail on degenerate matrices and clipped risk labels.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inaccuracy exposure curves over the configured grid.
    Exposure,
    /// Build datasets and write their manifests.
    Generate,
    /// Train one run.
    Train {
        /// Risk level (defaults to the first configured level).
        #[arg(long)]
        risk_level: Option<usize>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Fine-tune from a checkpoint.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        risk_level: Option<usize>,
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Evaluate a checkpoint on the test split or a dataset manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train and evaluate every (risk level, run) cell.
    Sweep,
    /// Synthetic video pipeline: matrices, two-stage training, saliency.
    XcorrDemo,
    /// Guided-backprop saliency of a checkpoint for one matrix file.
    Saliency {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(cli: &Cli, fallback: ExperimentKind) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(fallback),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.out = o.clone();
    }
    Ok(config)
}

fn require_config(cli: &Cli) -> Result<ExperimentConfig> {
    if cli.config.is_none() {
        return Err(Error::Config("this command needs --config".into()));
    }
    load_config(cli, ExperimentKind::SyntheticSeq)
}

fn run(cli: &Cli) -> Result<()> {
    let options = RunOptions {
        jobs: cli.jobs,
        strict: cli.strict,
    };
    let first_level = |c: &ExperimentConfig| match c.kind {
        ExperimentKind::XcorrDemo => c.xcorr.risk_level,
        _ => c.risk_levels[0],
    };
    match &cli.command {
        Command::Exposure => {
            let (path, rows) = cmd_exposure(&load_config(cli, ExperimentKind::SyntheticSeq)?)?;
            println!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Generate => {
            let dir = cmd_generate(&require_config(cli)?, &options)?;
            println!("wrote datasets under {}", dir.display());
        }
        Command::Train { risk_level, run } => {
            let config = require_config(cli)?;
            let n = risk_level.unwrap_or_else(|| first_level(&config));
            let dir = cmd_train(&config, n, *run, &options)?;
            print!("{}", std::fs::read_to_string(dir.join("report.csv")).unwrap_or_default());
            println!("run directory: {}", dir.display());
        }
        Command::Finetune {
            checkpoint,
            risk_level,
            run,
        } => {
            let config = require_config(cli)?;
            let n = risk_level.unwrap_or_else(|| first_level(&config));
            let dir = cmd_finetune(&config, checkpoint, n, *run, &options)?;
            print!("{}", std::fs::read_to_string(dir.join("report.csv")).unwrap_or_default());
            println!("run directory: {}", dir.display());
        }
        Command::Evaluate { checkpoint, manifest } => {
            let (dir, report) = cmd_evaluate(&require_config(cli)?, checkpoint, manifest.as_deref(), &options)?;
            print!("{}", report.to_csv());
            println!("wrote {}", dir.display());
        }
        Command::Sweep => {
            let config = require_config(cli)?;
            let result = cmd_sweep(&config, &options)?;
            print!("{}", summary_csv(&result.summary(&config)?));
        }
        Command::XcorrDemo => {
            let out = cmd_xcorr_demo(&load_config(cli, ExperimentKind::XcorrDemo)?, &options)?;
            print!("{}", out.report.to_csv());
            print!("{}", out.saliency.to_csv());
        }
        Command::Saliency { checkpoint, input } => {
            let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            let (path, _) = cmd_saliency(checkpoint, input, &out_dir)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let defaults = ExperimentConfig::new(ExperimentKind::SyntheticSeq).to_toml();
    let command = Cli::command().after_long_help(format!("Configuration defaults:\n\n{defaults}"));
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
