use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stransformer_cli::commands::{
    cmd_ablate, cmd_evaluate, cmd_forecast, cmd_gradcheck, cmd_synth, cmd_train, Ctx,
};
use stransformer_cli::{configfile, exit_code};
use stransformer_core::config::ModelConfig;
use stransformer_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stransformer",
    version,
    about = "Multivariate time-series forecasting with dual-axis convolutions and mask-gated attention"
)]
struct Cli {
    /// TOML run configuration (sections: data, model, train, eval).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Single seed driving model init, shuffling and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override SECTION.KEY=VALUE in the config (repeatable).
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,

    /// Run identifier used in artifact names; defaults to a config hash.
    #[arg(long, global = true)]
    run_id: Option<String>,

    /// Artifact directory (env STRANSFORMER_OUT_DIR, default ./runs).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model; writes checkpoint, loss history and a test report.
    Train {
        /// Learning-rate override.
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Evaluate a checkpoint on the configured dataset's test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Predict past the end of the configured dataset; writes a CSV.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train and evaluate all five component designs on identical data.
    Ablate,
    /// Verify tape gradients against central finite differences.
    Gradcheck,
    /// Generate a seeded synthetic dataset CSV.
    Synth {
        #[arg(long, default_value = "sines")]
        kind: String,
        #[arg(long, default_value_t = 3)]
        variables: usize,
        #[arg(long, default_value_t = 400)]
        length: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Explicit output path (defaults to an artifact in --out-dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn gradcheck_default_cfg() -> ModelConfig {
    ModelConfig {
        variables: 3,
        lookback: 8,
        horizon: 2,
        embed: 8,
        scn_channels: 4,
        blocks: 1,
        mask_blocks: 1,
        ..ModelConfig::default()
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = configfile::load(cli.config.as_deref(), &cli.sets)?;
    cfg.apply_seed(cli.seed);
    if let Cmd::Train { lr: Some(lr) } = &cli.cmd {
        cfg.train.lr = *lr;
    }
    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var_os("STRANSFORMER_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let run_id = cli.run_id.clone().unwrap_or_else(|| cfg.run_id());
    let ctx = Ctx { cfg, out_dir, run_id, force: cli.force };

    match &cli.cmd {
        Cmd::Train { .. } => cmd_train(&ctx),
        Cmd::Evaluate { checkpoint } => cmd_evaluate(&ctx, checkpoint),
        Cmd::Forecast { checkpoint } => cmd_forecast(&ctx, checkpoint),
        Cmd::Ablate => cmd_ablate(&ctx),
        Cmd::Gradcheck => {
            let model_cfg = if cli.config.is_some() || !cli.sets.is_empty() {
                ctx.cfg.model.clone()
            } else {
                gradcheck_default_cfg()
            };
            if cmd_gradcheck(&model_cfg)? {
                Ok(())
            } else {
                Err(Error::Numeric("gradient check exceeded tolerance".to_string()))
            }
        }
        Cmd::Synth { kind, variables, length, noise, out } => {
            let seed = cli.seed.unwrap_or(ctx.cfg.data.synth_seed);
            cmd_synth(&ctx, kind, *variables, *length, *noise, seed, out.clone())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
