//! `sflab`: train, attack and analyse block-DCT models from a TOML run
//! config. Exit status is 0 on success, 1 on a usage error and 2 when the
//! run itself fails.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "sflab",
    version,
    about = "Block-DCT feature extraction and adversarial robustness workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; all override the run config.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Seed for the dataset, initialisation, shuffling and splits.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces the config's epsilon grid with a single budget.
    #[arg(long)]
    pub epsilon: Option<f32>,
    #[arg(long)]
    pub eta: Option<f32>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Run a single interpolation model with this alpha.
    #[arg(long, conflicts_with = "beta")]
    pub alpha: Option<f32>,
    /// Run a single substitution model with this beta.
    #[arg(long)]
    pub beta: Option<f32>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Domain {
    Pixel,
    Frequency,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MixKind {
    Interp,
    Subst,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train every configured variant and write checkpoints.
    Train(Common),
    /// White-box PGD against every configured variant.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        domain: Option<Domain>,
    },
    /// Craft pixel PGD on the surrogate and score the configured variants.
    Transfer(Common),
    /// Sweep interpolation or substitution stems.
    Mix {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: MixKind,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f32>,
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f32>,
    },
    /// Clean-vs-adversarial cosine similarity at each probe point.
    Probe(Common),
    /// Accuracy on low- and high-frequency reconstructions.
    Reconstruct(Common),
    /// Frequency-histogram adversarial detector.
    Detect {
        #[command(subcommand)]
        action: DetectAction,
    },
    /// Write the synthetic dataset as CIFAR-10 binary batches.
    GenData(Common),
}

#[derive(Subcommand, Debug)]
pub enum DetectAction {
    /// Fit a detector per variant on a 50/50 split and save it.
    Train(Common),
    /// Apply a saved detector to clean and attacked test images.
    Apply {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        detector: PathBuf,
    },
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("SFLAB_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("SFLAB_THREADS must be a positive integer, got {raw:?}"))?;
        anyhow::ensure!(n > 0, "SFLAB_THREADS must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", e.render());
            return ExitCode::from(1);
        }
    };
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(written) => {
            for path in written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
