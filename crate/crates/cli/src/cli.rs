use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use flatlab_core::continual::ProbeData;
use flatlab_core::DirectionKind;

use crate::commands::{self, Context, LandscapeArgs};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "flatlab", version, about = "Loss-landscape flatness and forgetting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataArg {
    Prior,
    New,
    Joint,
}

impl From<DataArg> for ProbeData {
    fn from(d: DataArg) -> Self {
        match d {
            DataArg::Prior => ProbeData::Prior,
            DataArg::New => ProbeData::New,
            DataArg::Joint => ProbeData::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionsArg {
    Gaussian,
    FilterNormalized,
}

impl From<DirectionsArg> for DirectionKind {
    fn from(d: DirectionsArg) -> Self {
        match d {
            DirectionsArg::Gaussian => DirectionKind::Gaussian,
            DirectionsArg::FilterNormalized => DirectionKind::GaussianFilterNormalized,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the base and follow-up stages; write checkpoints and loss traces.
    Train { config: PathBuf },
    /// Probe a checkpoint's loss surface; write surface CSV, contour SVG and flatness row.
    Landscape {
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Task seed; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        data: Option<DataArg>,
        #[arg(long, value_enum)]
        directions: Option<DirectionsArg>,
        #[arg(long)]
        direction_seed: Option<u64>,
        /// Symmetric grid half-width.
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long = "n")]
        n_per_axis: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the two-stage sequence for every seed; write reports and summary.csv.
    Sequence { config: PathBuf },
    /// Aggregate summary CSVs per method and correlate sharpness with forgetting.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Interpolate two checkpoints: lambda * a + (1 - lambda) * b.
    Merge {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = flatlab_core::continual::DEFAULT_WISEFT_LAMBDA)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flatness metrics of an existing surface CSV.
    Flatness {
        surface: PathBuf,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs one command, returning what it prints on stdout.
pub fn run(cli: Cli, ctx: &Context) -> Result<String> {
    let listing = |paths: Vec<PathBuf>| {
        paths
            .iter()
            .map(|p| format!("wrote {}\n", p.display()))
            .collect::<String>()
    };
    match cli.command {
        Command::Train { config } => commands::cmd_train(ctx, &config).map(listing),
        Command::Landscape {
            checkpoint,
            config,
            seed,
            data,
            directions,
            direction_seed,
            radius,
            n_per_axis,
            levels,
            out,
        } => {
            let args = LandscapeArgs {
                seed,
                data: data.map(Into::into),
                directions: directions.map(Into::into),
                direction_seed,
                radius,
                n_per_axis,
                levels,
                out,
            };
            commands::cmd_landscape(ctx, &checkpoint, &config, &args).map(listing)
        }
        Command::Sequence { config } => commands::cmd_sequence(ctx, &config).map(listing),
        Command::Compare { summaries, csv } => commands::cmd_compare(&summaries, csv.as_deref()),
        Command::Merge { a, b, lambda, out } => commands::cmd_merge(&a, &b, lambda, &out).map(|p| listing(vec![p])),
        Command::Flatness { surface, id, out } => {
            let text = commands::cmd_flatness(&surface, id.as_deref())?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &text).map_err(|e| crate::CliError::io(&path, e))?;
                    Ok(listing(vec![path]))
                }
                None => Ok(text),
            }
        }
    }
}
