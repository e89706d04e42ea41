use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saci_cli::config::{ConfigSource, PipelineConfig};
use saci_cli::{pipeline, CliError};

/// Lagged-correlation causal analysis and synthetic additive cause indicators.
#[derive(Parser)]
#[command(name = "saci")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract market metric frames from trades and order book snapshots
    Features(Common),
    /// Score posts against lexicons into per-channel media frames
    Score(Common),
    /// Sweep lagged correlations of all frames against the effect
    Correlate(Common),
    /// Sweep, assemble the indicator and write the model and plot data
    Saci(Common),
    /// Evaluate the direction predictor and baselines on the held-out span
    Evaluate(Common),
    /// Generate a planted-causality fixture
    Synth(Common),
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set lag_max=5` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (same as `--set out=DIR`)
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut source = match &self.config {
            Some(p) => ConfigSource::from_file(p)?,
            None => ConfigSource::default(),
        };
        for s in &self.set {
            source.set(s)?;
        }
        if let Some(out) = &self.out {
            source.set(&format!("out={}", out.display()))?;
        }
        source.resolve()
    }
}

fn run(command: &Command) -> Result<String, CliError> {
    let (common, step): (&Common, fn(&PipelineConfig) -> Result<String, CliError>) = match command {
        Command::Features(c) => (c, pipeline::run_features),
        Command::Score(c) => (c, pipeline::run_score),
        Command::Correlate(c) => (c, pipeline::run_correlate),
        Command::Saci(c) => (c, pipeline::run_saci),
        Command::Evaluate(c) => (c, pipeline::run_evaluate),
        Command::Synth(c) => (c, pipeline::run_synth),
    };
    step(&common.resolve()?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SACI_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
