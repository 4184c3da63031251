use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scorefp::commands::{cmd_compare, cmd_denoise, cmd_evaluate, cmd_precompute, cmd_train, Status};
use scorefp::error::exit;
use scorefp::{AppResult, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "scorefp", version, about = "Fokker-Planck score precomputation and score-embedded training")]
struct Cli {
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input image (repeatable); replaces the configured inputs.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the log-density and score of each image.
    Precompute {
        #[command(flatten)]
        common: Common,
    },
    /// Train the score network.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Denoise by reverse flow and write the snapshot strip.
    Denoise {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Network checkpoint; defaults to the one written by `train`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Noisy image or noise to start from instead of the evaluation start.
        #[arg(long)]
        start: Option<PathBuf>,
    },
    /// Score the denoised snapshots against the clean image.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Race embedded against baseline training to each target SSIM.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Worker threads across images and seeds.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn resolve(common: Option<&Common>, mode: Option<Mode>) -> AppResult<RunConfig> {
    let mut cfg = match common.and_then(|c| c.config.as_deref()) {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = common {
        if let Some(seed) = c.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &c.out {
            cfg.out_dir = out.clone();
        }
        if !c.inputs.is_empty() {
            cfg.inputs = c.inputs.clone();
        }
    }
    if let Some(mode) = mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> AppResult<Status> {
    let (common, mode) = match &cli.command {
        Some(Command::Precompute { common }) | Some(Command::Compare { common, .. }) => (Some(common), None),
        Some(Command::Train { common, mode })
        | Some(Command::Denoise { common, mode, .. })
        | Some(Command::Evaluate { common, mode, .. }) => (Some(common), *mode),
        None => (None, None),
    };
    let cfg = resolve(common, mode)?;
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(Status::Converged);
    }
    match cli.command {
        None => {
            eprintln!("no command given; see --help");
            Err(scorefp::AppError::Input("missing command".into()))
        }
        Some(Command::Precompute { .. }) => cmd_precompute(&cfg),
        Some(Command::Train { .. }) => cmd_train(&cfg, cfg.mode),
        Some(Command::Denoise { checkpoint, start, .. }) => cmd_denoise(&cfg, cfg.mode, checkpoint.as_deref(), start.as_deref()),
        Some(Command::Evaluate { checkpoint, .. }) => cmd_evaluate(&cfg, cfg.mode, checkpoint.as_deref()),
        Some(Command::Compare { jobs, .. }) => cmd_compare(&cfg, jobs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::INPUT as u8 } else { exit::SUCCESS as u8 });
        }
    };
    match run(cli) {
        Ok(Status::Converged) => ExitCode::from(exit::SUCCESS as u8),
        Ok(Status::NotConverged) => {
            eprintln!("warning: policy iteration did not converge; artifacts were still written");
            ExitCode::from(exit::NOT_CONVERGED as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
