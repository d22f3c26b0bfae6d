//! Command-line driver for the three-stage distillation and fusion pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use emokd::eval::SweepKind;
use emokd::pipeline::{self, load_config, Outcome, RunContext};

#[derive(Parser)]
#[command(
    name = "emokd",
    version,
    about = "Distilled vision head plus gated VLM fusion for image emotion classification"
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "emokd.toml")]
    config: PathBuf,
    /// Seed for splits, initialization, shuffling and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; the run directory is `<out>/<run_id>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set distill.alpha=0.7`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build categorical and generated descriptive instruction triplets.
    PrepareInstructions,
    /// Stage 2: train the distillation head.
    TrainDistill,
    /// Stage 3: train the fusion gate on the frozen head.
    TrainGate,
    /// Score VLM, student and fused predictions on the test split.
    Evaluate,
    /// Run an ablation sweep.
    Ablate {
        #[arg(long, value_enum)]
        which: Which,
    },
    /// Teacher versus VLM correctness partition.
    Complementarity,
    /// Write the synthetic dataset described by `[synthetic]` to disk.
    Synth,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Alpha,
    Depth,
    Gate,
}

impl From<Which> for SweepKind {
    fn from(w: Which) -> Self {
        match w {
            Which::Alpha => SweepKind::Alpha,
            Which::Depth => SweepKind::Depth,
            Which::Gate => SweepKind::Gate,
        }
    }
}

fn run(cli: &Cli) -> emokd::Result<Outcome> {
    let mut config = load_config(&cli.config, &cli.overrides, cli.seed)?;
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    let ctx = RunContext::new(config)?;
    log::info!("run {} in {}", ctx.run_id, ctx.dir.display());
    match cli.command {
        Command::PrepareInstructions => pipeline::cmd_prepare_instructions(&ctx, None),
        Command::TrainDistill => pipeline::cmd_train_distill(&ctx),
        Command::TrainGate => pipeline::cmd_train_gate(&ctx),
        Command::Evaluate => pipeline::cmd_evaluate(&ctx),
        Command::Ablate { which } => pipeline::cmd_ablate(&ctx, which.into()),
        Command::Complementarity => pipeline::cmd_complementarity(&ctx),
        Command::Synth => pipeline::cmd_synth(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for path in &outcome.written {
                log::info!("wrote {}", path.display());
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.summary).expect("serializable")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
