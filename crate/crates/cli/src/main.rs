mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use prodreid_core::ExtractorConfig;

use output::Failure;

#[derive(Parser, Debug)]
#[command(name = "prodreid", version, about = "Product re-identification engine")]
pub struct Cli {
    /// Seed for splits and synthesis.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output encoding on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a PRID index from <gallery>/<class>/<image> files.
    Index(IndexArgs),
    /// Search the index with one image or vector and decide known vs new.
    Query(QueryArgs),
    /// Add a new class to the index.
    Enroll(EnrollArgs),
    /// Produce a confusion matrix and report.
    Evaluate(EvaluateArgs),
    /// Write a synthetic bottle dataset.
    Synth(SynthArgs),
    /// Answer line-delimited JSON requests over TCP.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ExtractorArgs {
    /// Histogram bins per plane.
    #[arg(long, default_value_t = 16)]
    pub bins: u32,
    /// Square side images are resized to.
    #[arg(long, default_value_t = 224)]
    pub side: u32,
    /// RGB distance treated as background.
    #[arg(long, default_value_t = 30.0)]
    pub bg_tolerance: f64,
}

impl ExtractorArgs {
    pub fn config(&self) -> ExtractorConfig {
        ExtractorConfig {
            bins: self.bins,
            side: self.side,
            bg_tolerance: self.bg_tolerance,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct PlaneArgs {
    #[arg(long, default_value_t = 1)]
    pub brokers: usize,
    /// Searchers per broker.
    #[arg(long, default_value_t = 4)]
    pub searchers: usize,
}

#[derive(Args, Debug, Clone)]
pub struct TauArgs {
    /// Fixed squared-distance threshold; calibrated from the gallery when absent.
    #[arg(long)]
    pub tau: Option<f32>,
    #[arg(long, default_value_t = 95.0)]
    pub percentile: f64,
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    /// Hits that vote on the class.
    #[arg(long, default_value_t = 5)]
    pub vote_k: usize,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[arg(long)]
    pub gallery: PathBuf,
    #[arg(long, env = "PRODREID_INDEX")]
    pub out: PathBuf,
    /// Search partitions the index is meant to be served with.
    #[arg(long, default_value_t = 4)]
    pub partitions: usize,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true))]
pub struct QueryArgs {
    #[arg(long, env = "PRODREID_INDEX")]
    pub index: PathBuf,
    #[arg(long, group = "input")]
    pub image: Option<PathBuf>,
    /// JSON array of numbers, or a PRID file whose first record is used.
    #[arg(long, group = "input")]
    pub vector: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub tau: TauArgs,
    #[command(flatten)]
    pub plane: PlaneArgs,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true))]
pub struct EnrollArgs {
    #[arg(long, env = "PRODREID_INDEX")]
    pub index: PathBuf,
    #[arg(long)]
    pub class: String,
    #[arg(long, group = "input", num_args = 1..)]
    pub images: Vec<PathBuf>,
    /// Directory of images for the new class.
    #[arg(long, group = "input")]
    pub dir: Option<PathBuf>,
    /// JSON array (or array of arrays) of numbers, or a PRID file.
    #[arg(long, group = "input")]
    pub vectors: Option<PathBuf>,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true))]
pub struct EvaluateArgs {
    /// Reference matrix: vgg16, alexnet or alpha_alexnet.
    #[arg(long, group = "source")]
    pub fixture: Option<String>,
    /// Image dataset laid out as <dir>/<class>/<image>, split by --train-fraction.
    #[arg(long, group = "source")]
    pub dataset: Option<PathBuf>,
    /// Gallery PRID file; requires --queries.
    #[arg(long, group = "source", requires = "queries")]
    pub gallery: Option<PathBuf>,
    /// Labeled query PRID file.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Directory for confusion.csv and report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tau: TauArgs,
    #[command(flatten)]
    pub plane: PlaneArgs,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Eighteen bottle classes with near-identical whites.
    Bottles18,
    /// Well-separated colors.
    Separated,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Raster {
    Png,
    Ppm,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Bottles18)]
    pub preset: Preset,
    /// Class count for the separated preset (at most 27).
    #[arg(long, default_value_t = 18)]
    pub classes: usize,
    #[arg(long, default_value_t = 22)]
    pub images_per_class: usize,
    /// Per-channel color jitter for the separated preset.
    #[arg(long, default_value_t = 8)]
    pub jitter: u8,
    #[arg(long, value_enum, default_value_t = Raster::Png)]
    pub raster: Raster,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Served index; a missing file starts an empty gallery.
    #[arg(long, env = "PRODREID_INDEX")]
    pub index: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 7878)]
    pub port: u16,
    /// Rewrite the index file after every enroll.
    #[arg(long)]
    pub persist: bool,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub tau: TauArgs,
    #[command(flatten)]
    pub plane: PlaneArgs,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            Failure::new("Usage", e.to_string().trim_end()).report();
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::FAILURE
        }
    }
}
