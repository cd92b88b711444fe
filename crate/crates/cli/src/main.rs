//! `sis`: salient instance segmentation from the command line.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sis_core::synth::ShapeKind;

/// Exit status for an instance count the salient region cannot support.
const EXIT_INFEASIBLE_K: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "sis", version, about = "Proposal-free salient instance segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split the salient region of an image into k instances.
    Segment(SegmentArgs),
    /// Refine a saliency map with a fully connected CRF.
    Crf(CrfArgs),
    /// Write a SLIC superpixel label map.
    Slic(SlicArgs),
    /// Score predicted instance maps against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic fixture with known instances.
    Synth(SynthArgs),
    /// Run the network-block numerical checks.
    Netcheck(NetcheckArgs),
}

/// Pipeline settings that flags may override on top of `--config`.
#[derive(Debug, Args)]
struct TuningArgs {
    /// JSON file with pipeline settings; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target number of SLIC superpixels.
    #[arg(long)]
    superpixels: Option<usize>,
    /// Weight of the spatial term of the affinity.
    #[arg(long)]
    lambda: Option<f64>,
    /// Bandwidth of the feature term of the affinity.
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// RGB image (PPM or [h,w,3] NPY in [0,1]).
    #[arg(long)]
    image: PathBuf,
    /// Saliency map (PGM or [h,w] NPY in [0,1]).
    #[arg(long)]
    saliency: PathBuf,
    /// Deep feature map ([h,w,c] NPY, or PPM read in 8-bit units).
    #[arg(long)]
    features: PathBuf,
    /// Instance count, e.g. 3 or 4+.
    #[arg(long)]
    k: Option<String>,
    /// JSON sidecar holding the instance count as {"k": ...}.
    #[arg(long, conflicts_with = "k")]
    k_file: Option<PathBuf>,
    /// Output 16-bit PGM label map; confidences go next to it as JSON.
    #[arg(long)]
    out: PathBuf,
    /// Refine the saliency map with the dense CRF before clustering.
    #[arg(long)]
    refine_crf: bool,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct CrfArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    saliency: PathBuf,
    /// Refined saliency (8-bit PGM, or NPY when the name ends in .npy).
    #[arg(long)]
    out: PathBuf,
    /// JSON file with pipeline settings; its `crf` block is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mean-field iterations.
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Debug, Args)]
struct SlicArgs {
    #[arg(long)]
    image: PathBuf,
    /// Optional saliency map; non-salient pixels are blacked out first.
    #[arg(long)]
    saliency: Option<PathBuf>,
    /// 16-bit PGM of zero-based superpixel labels.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    compactness: Option<f64>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// JSON manifest listing prediction and ground-truth label maps.
    #[arg(long)]
    manifest: PathBuf,
    /// IoU thresholds for AP^r; repeat the flag for several.
    #[arg(long = "iou")]
    iou: Vec<f64>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Disks,
    Rectangles,
    Mixed,
}

impl From<ShapeArg> for ShapeKind {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Disks => ShapeKind::Disks,
            ShapeArg::Rectangles => ShapeKind::Rectangles,
            ShapeArg::Mixed => ShapeKind::Mixed,
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of shapes (1 to 8).
    #[arg(long)]
    count: usize,
    /// Side length of a square fixture.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Height, overriding --size.
    #[arg(long)]
    height: Option<usize>,
    /// Width, overriding --size.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ShapeArg::Disks)]
    shape: ShapeArg,
    /// Directory receiving image.ppm, saliency.pgm, features.npy, gt.pgm and k.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct NetcheckArgs {
    /// Parameter manifest (JSON map from tensor name to NPY path) to exercise.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Prefix of an SE block in the manifest.
    #[arg(long)]
    se_prefix: Option<String>,
    /// Prefix of a dense block in the manifest.
    #[arg(long)]
    dense_prefix: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIS_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(a) => commands::segment(a),
        Command::Crf(a) => commands::crf(a),
        Command::Slic(a) => commands::slic(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::Netcheck(a) => commands::netcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<sis_core::Error>() {
                Some(sis_core::Error::InstanceCount { .. }) => ExitCode::from(EXIT_INFEASIBLE_K),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
