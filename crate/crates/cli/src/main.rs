use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use spineseg_cli::commands::{self, EvalArgs, RasterizeArgs};
use spineseg_cli::{Outcome, Overrides, RunConfig};

/// Segmentation evaluation and vertebra morphometry for lateral lumbar
/// spine radiographs.
#[derive(Parser)]
#[command(name = "spineseg", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// VIA polygon export to semantic PNG masks and instance sidecars.
    Rasterize {
        via: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory with the annotated images, read for their sizes.
        #[arg(long, conflicts_with_all = ["width", "height"])]
        images: Option<PathBuf>,
        #[arg(long, requires = "height")]
        width: Option<usize>,
        #[arg(long, requires = "width")]
        height: Option<usize>,
        /// Also write one 0/255 PNG per instance.
        #[arg(long)]
        instance_pngs: bool,
    },
    /// Ground truth vs predictions: metrics.csv plus a report.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Column name in the report.
        #[arg(long, default_value = "model")]
        model: String,
    },
    /// Semantic PNG masks to instance sidecars.
    Instances {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sidecars to anatomically labelled sidecars.
    Label {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labelled sidecars to morphometry documents and CSVs.
    Morph {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic ground truth, perturbed predictions and construction truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Colour overlay of one sidecar.
    Overlay {
        input: PathBuf,
        /// Grayscale background image.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Comparison table over several models' metrics.csv files.
    Report {
        /// NAME=PATH to a metrics.csv; repeat per model.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn finish(outcome: Outcome) -> ExitCode {
    if outcome.is_success() {
        return ExitCode::SUCCESS;
    }
    for f in &outcome.failures {
        eprintln!("error: {}: {}", f.image_id, f.reason);
    }
    let ids: Vec<&str> = outcome.failures.iter().map(|f| f.image_id.as_str()).collect();
    eprintln!("{} of {} images failed: {}", ids.len(), outcome.processed, ids.join(", "));
    ExitCode::FAILURE
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = RunConfig::resolve(&cli.overrides)?;
    let outcome = match cli.command {
        Command::Rasterize { via, out, images, width, height, instance_pngs } => {
            let dims = width.zip(height);
            commands::rasterize(&cfg, &RasterizeArgs { via: &via, out: &out, images: images.as_deref(), dims, instance_pngs })?
        }
        Command::Eval { gt, pred, out, model } => {
            let (outcome, summary) = commands::eval(&cfg, &EvalArgs { gt: &gt, pred: &pred, out: &out, model: &model })?;
            if summary.is_some() {
                print!("{}", std::fs::read_to_string(out.join("report.txt"))?);
            }
            outcome
        }
        Command::Instances { input, out } => commands::instances(&cfg, &input, &out)?,
        Command::Label { input, out } => commands::label(&cfg, &input, &out)?,
        Command::Morph { input, out } => commands::morph(&cfg, &input, &out)?,
        Command::Synth { out, count } => commands::synth(&cfg, &out, count)?,
        Command::Overlay { input, image, out } => {
            commands::overlay(&cfg, &input, image.as_deref(), &out)?;
            Outcome::default()
        }
        Command::Report { models, out } => {
            let models = models
                .iter()
                .map(|m| m.split_once('=').map(|(n, p)| (n.to_string(), PathBuf::from(p))).ok_or_else(|| anyhow!("expected NAME=PATH, got `{m}`")))
                .collect::<Result<Vec<_>>>()?;
            commands::report(&models, &out)?;
            print!("{}", std::fs::read_to_string(out.join("report.txt"))?);
            Outcome::default()
        }
    };
    Ok(finish(outcome))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
