//! `msr`: sender, channel, receiver and evaluation pipelines with run
//! manifests.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 format, 4 internal (including a
//! failed theorem check or a diverging replay), 5 curves without overlap.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Failure;

#[derive(Debug, Parser)]
#[command(name = "msr", version, about = "Base layer plus edge-metadata codec and R-D evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress an image into a base stream and an optional metadata stream.
    Encode(EncodeArgs),
    /// Decode, degrade, gate and reconstruct; score against a reference.
    Receive(ReceiveArgs),
    /// Build R-D curves over a corpus.
    Sweep(SweepArgs),
    /// Randomized exact check of the conditional-entropy inequalities.
    VerifyTheorem(VerifyArgs),
    /// Matched-quality saving and matched-rate gain between two curves.
    Compare(CompareArgs),
    /// Re-run a manifest and check that outputs are byte-identical.
    Replay(ReplayArgs),
    /// Write the bundled synthetic corpus as PGM files.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaKind {
    None,
    Canny,
    Grad2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Nearest,
    Bicubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusSet {
    All,
    EdgeRich,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    /// Input PGM/PPM image (colour is converted to luma).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Output file stem; defaults to the input file stem.
    #[arg(long)]
    pub stem: Option<String>,
    #[arg(long, default_value_t = 75)]
    pub q: u32,
    #[arg(long, value_enum, default_value_t = MetaKind::None)]
    pub meta: MetaKind,
    #[arg(long, default_value_t = 1.4)]
    pub canny_sigma: f64,
    #[arg(long, default_value_t = 40.0)]
    pub low: f64,
    #[arg(long, default_value_t = 100.0)]
    pub high: f64,
    /// Smoothing for the 2-bit gradient map.
    #[arg(long, default_value_t = 1.0)]
    pub grad_sigma: f64,
    /// Block size for OR/max pooling of the metadata map.
    #[arg(long, default_value_t = 1)]
    pub pool: usize,
    /// Base layer is the input downsampled by this factor.
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Bicubic)]
    pub downsample: KernelArg,
    /// Manifest path; defaults to `<out-dir>/<stem>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReceiveArgs {
    #[arg(long)]
    pub base: PathBuf,
    /// Metadata stream; omit for the fallback (no metadata) path.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, default_value = "NN")]
    pub regime: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "edgeguided")]
    pub reconstructor: String,
    /// Sharpening weight of the `edgeguided` reconstructor.
    #[arg(long, default_value_t = 0.6)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 1)]
    pub scale: usize,
    /// Reference image for metrics.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Reconstructed image (PGM).
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report; defaults to `<out>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Directory of .pgm/.ppm/.pnm images.
    #[arg(long, conflicts_with = "bundled")]
    pub corpus: Option<PathBuf>,
    /// Use the generated corpus instead of a directory.
    #[arg(long, value_enum)]
    pub bundled: Option<CorpusSet>,
    #[arg(long, value_delimiter = ',', default_value = "NN,LN,HN")]
    pub regimes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "10,30,50,70,90")]
    pub qs: Vec<u32>,
    /// Metadata kind for the metadata-on curves.
    #[arg(long, value_enum, default_value_t = MetaKind::Canny)]
    pub meta: MetaKind,
    /// Number of Canny sparsity levels; 0 disables metadata-on curves.
    #[arg(long, default_value_t = 3)]
    pub meta_levels: usize,
    #[arg(long, default_value_t = 1.4)]
    pub canny_sigma: f64,
    #[arg(long, default_value_t = 40.0)]
    pub low: f64,
    #[arg(long, default_value_t = 100.0)]
    pub high: f64,
    /// Geometric threshold step between sparsity levels.
    #[arg(long, default_value_t = 1.5)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1.0)]
    pub grad_sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub pools: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "bicubic,edgeguided")]
    pub reconstructors: Vec<String>,
    #[arg(long, default_value_t = 0.6)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Rate weight in distortion units per bit; required.
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value = "mse")]
    pub d_kind: String,
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// One curve per image instead of corpus means.
    #[arg(long)]
    pub per_image: bool,
    /// Worker threads; 0 uses all cores. Outputs do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum alphabet sizes for X, Y and M.
    #[arg(long, value_delimiter = ',', default_value = "4,4,4")]
    pub alphabets: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Curve label inside the reference file; defaults to its first curve.
    #[arg(long)]
    pub ref_method: Option<String>,
    #[arg(long)]
    pub test_method: Option<String>,
    #[arg(long, default_value = "psnr")]
    pub metric: String,
    /// Interpolate rate linearly or in log domain.
    #[arg(long, default_value = "linear")]
    pub axis: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = CorpusSet::All)]
    pub set: CorpusSet,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Encode(a) => commands::encode(&a).map(drop),
        Command::Receive(a) => commands::receive(&a).map(drop),
        Command::Sweep(a) => commands::sweep(&a).map(drop),
        Command::VerifyTheorem(a) => commands::verify_theorem(&a).map(drop),
        Command::Compare(a) => commands::compare(&a).map(drop),
        Command::Replay(a) => commands::replay(&a),
        Command::GenCorpus(a) => commands::gen_corpus(&a).map(drop),
    }
}
