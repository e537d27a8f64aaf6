use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use probfb::MaternOrder;
use probfb_cli::commands::{self, ModelSource};
use probfb_cli::config::Config;
use probfb_cli::{CliError, Result};

/// Probabilistic filter banks as spectral mixture Gaussian processes.
#[derive(Debug, Parser)]
#[command(name = "probfb", version)]
struct Cli {
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Matérn smoothness ν: 0.5, 1.5 or 2.5.
    #[arg(long, global = true, value_parser = commands::parse_order)]
    order: Option<MaternOrder>,
    /// Number of filters D.
    #[arg(long, global = true)]
    filters: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Source {
    /// Input WAV (PCM16 or float32).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model file written by `fit`; the clip is fitted when absent.
    #[arg(long)]
    model: Option<PathBuf>,
}

impl From<Source> for ModelSource {
    fn from(s: Source) -> Self {
        Self {
            model: s.model,
            input: s.input,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a filter bank to a clip (a synthetic clip when no input is given).
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Export the smoothed subband spectrogram of a clip.
    Analyze(Source),
    /// Mask gaps in a clip and reconstruct them.
    Impute {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        gap_ms: Option<f64>,
        #[arg(long)]
        n_gaps: Option<usize>,
    },
    /// Write prior sample paths, or posterior ones given an input clip.
    Sample {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Length of prior samples in seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
    },
    /// Run the missing-data experiment across orders, gap lengths and clips.
    Experiment,
    /// Export the spectrum, kernel, Gram matrix and sample views.
    Views(Source),
    /// Write speech-like synthetic clips.
    Synth {
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(order) = cli.order {
        config.model.order = order;
        config.experiment.orders = vec![order];
    }
    if let Some(d) = cli.filters {
        config.model.filters = d;
    }
    if let Command::Impute { gap_ms, n_gaps, .. } = &cli.command {
        if let Some(g) = gap_ms {
            config.gaps.gap_ms = *g;
        }
        if let Some(n) = n_gaps {
            config.gaps.n_gaps = *n;
        }
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Fit { input } => commands::run_fit(&config, input.as_deref(), out).map(drop),
        Command::Analyze(source) => commands::run_analyze(&config, &source.into(), out),
        Command::Impute { source, .. } => commands::run_impute(&config, &source.into(), out).map(drop),
        Command::Sample {
            source,
            count,
            duration,
        } => commands::run_sample(&config, &source.into(), count, duration, out).map(drop),
        Command::Experiment => commands::run_experiment(&config, out),
        Command::Views(source) => commands::run_views(&config, &source.into(), out).map(drop),
        Command::Synth { count } => commands::run_synth(&config, count, out).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
