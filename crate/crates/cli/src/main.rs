use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uqpen_cli::commands;
use uqpen_cli::config::{ExperimentConfig, HandSelector, Preset};
use uqpen_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "uqpen", version, about = "Uncertainty analysis for time-series character classifiers")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.learning_rate=0.05`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, value_enum, default_value_t = Preset::Desk, global = true)]
    preset: Preset,
    /// Hands used for training.
    #[arg(long, value_enum, global = true)]
    train_hand: Option<HandSelector>,
    /// Hands used for evaluation.
    #[arg(long, value_enum, global = true)]
    eval_hand: Option<HandSelector>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset CSV and its split manifest.
    Gen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one network.
    Train {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with SWAG and write the posterior.
    SwagTrain {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a deep ensemble.
    EnsembleTrain {
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model on the held-out fold and write the report bundle.
    Evaluate {
        /// Checkpoint, posterior file, or training output directory.
        #[arg(long)]
        model: PathBuf,
        /// Bundle directory (defaults to report.output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG figures from an evaluation bundle.
    Report {
        /// Bundle directory (defaults to report.output_dir).
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Figure directory (defaults to the bundle directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("UQPEN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("UQPEN_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let c = &cli.common;
    let mut cfg = ExperimentConfig::load(c.preset, c.config.as_deref(), &c.overrides)?;
    if let Some(h) = c.train_hand {
        cfg.eval.train_hand = h;
    }
    if let Some(h) = c.eval_hand {
        cfg.eval.eval_hand = h;
    }
    match cli.command {
        Command::Gen { out } => {
            let s = commands::cmd_gen(&cfg, &out)?;
            println!("wrote {} ({} samples: {} right, {} left)", out.display(), s.samples, s.right, s.left);
            println!("wrote {}", s.manifest.display());
        }
        Command::Train { out } => {
            commands::cmd_train(&cfg, &out)?;
            println!("wrote {}", out.join(commands::MODEL_FILE).display());
        }
        Command::SwagTrain { out } => {
            commands::cmd_swag_train(&cfg, &out)?;
            println!("wrote {}", out.join(commands::POSTERIOR_FILE).display());
        }
        Command::EnsembleTrain { out } => {
            commands::cmd_ensemble_train(&cfg, &out)?;
            println!("wrote {} members to {}", cfg.ensemble.member_count, out.display());
        }
        Command::Evaluate { model, out } => {
            let out = out.unwrap_or_else(|| cfg.report.output_dir.clone());
            let s = commands::cmd_evaluate(&cfg, &model, &out)?;
            println!(
                "accuracy {:.4}  ece {:.4}  mean TU {:.4}  AU {:.4}  EU {:.4} bits",
                s.accuracy, s.ece, s.mean_tu, s.mean_au, s.mean_eu
            );
            println!("wrote bundle to {}", out.display());
        }
        Command::Report { bundle, out } => {
            let bundle = bundle.unwrap_or_else(|| cfg.report.output_dir.clone());
            let out = out.unwrap_or_else(|| bundle.clone());
            commands::cmd_report(&bundle, &out)?;
            println!("wrote figures to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
