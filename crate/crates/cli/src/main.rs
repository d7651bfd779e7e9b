//! Command-line front-end: corpus generation, preprocessing, training,
//! estimation, classification, and report emission.
//!
//! All paths resolve relative to `--workdir`, every random choice flows
//! from the single `--seed` flag, and each failure class exits with its
//! own status: 3 validation, 4 I/O, 5 numerical, 6 config.

mod pipeline;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oleospec_core::preprocess::Roi;
use oleospec_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "oleospec",
    version,
    about = "Multispectral oil-quality analysis"
)]
struct Cli {
    /// Root directory that all paths are resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RoiWindowArgs {
    /// Region of interest as `x,y,side`; defaults to the config's `roi`
    /// key or the centered 30x30 window.
    #[arg(long, value_parser = parse_roi)]
    roi: Option<Roi>,
    /// Smoothing window side; defaults to the config's `window` key or 3.
    #[arg(long)]
    window: Option<usize>,
    /// Use the median filter variant instead of the moving average.
    #[arg(long)]
    median: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus of raw/dark cube pairs.
    GenCorpus {
        /// Generator + corpus config file.
        #[arg(long)]
        config: PathBuf,
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess one sample and write its ROI pixel spectra as CSV.
    Preprocess {
        /// Sample directory holding `raw/` and `dark/` cubes.
        #[arg(long)]
        sample: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        roi_window: RoiWindowArgs,
        /// Rescale intensities to the 8-bit convention.
        #[arg(long)]
        rescale_8bit: bool,
    },
    /// Train the adulteration calibration from a corpus.
    TrainAdulteration {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output model file.
        #[arg(long)]
        model_out: PathBuf,
        /// Calibration-curve CSV (fraction vs normalized distance).
        #[arg(long)]
        curve_out: PathBuf,
        #[command(flatten)]
        roi_window: RoiWindowArgs,
        #[arg(long)]
        variance_floor: Option<f64>,
        /// Retained discriminant dimensions (overrides the variance floor).
        #[arg(long)]
        k: Option<usize>,
        /// Pure-class rows subsampled for the reference Gaussian.
        #[arg(long)]
        reference_subsample: Option<usize>,
        /// Also render the calibration curve as SVG next to the CSV.
        #[arg(long)]
        render_svg: bool,
    },
    /// Estimate the adulteration fraction of one sample.
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        /// Append `sample_id,estimate` to this CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        roi_window: RoiWindowArgs,
    },
    /// Train the reheat classifier from a corpus.
    TrainReheat {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output classifier file.
        #[arg(long)]
        classifier_out: PathBuf,
        /// Eigengap-vs-sigma CSV.
        #[arg(long)]
        gap_curve_out: PathBuf,
        /// Laplacian eigenvalues at the optimal sigma, as CSV.
        #[arg(long)]
        eigenvalues_out: PathBuf,
        #[command(flatten)]
        roi_window: RoiWindowArgs,
        #[arg(long)]
        variance_floor: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        /// Pixel stride for the clustering subsample.
        #[arg(long)]
        stride: Option<usize>,
        /// Eigenvalue threshold for counting connected components.
        #[arg(long)]
        threshold: Option<f64>,
        /// Number of log-spaced points in the sigma grid.
        #[arg(long)]
        sigma_grid: Option<usize>,
        /// Also render the eigengap curve as SVG next to the CSV.
        #[arg(long)]
        render_svg: bool,
    },
    /// Classify one sample into its qualitative reheat class.
    Classify {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        #[command(flatten)]
        roi_window: RoiWindowArgs,
    },
    /// Accuracy/repeatability report over a labelled corpus.
    Evaluate {
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for summary.csv, trials.csv, repeatability.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        roi_window: RoiWindowArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        datasets: Option<usize>,
        #[arg(long)]
        points_per_class: Option<usize>,
    },
}

fn parse_roi(s: &str) -> std::result::Result<Roi, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected x,y,side".into());
    }
    let nums: Vec<usize> = parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad integer {p:?}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    Ok(Roi::new(nums[0], nums[1], nums[2]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Validation(_) => 3,
                Error::Io { .. } => 4,
                Error::Numerical(_) => 5,
                Error::Config(_) => 6,
            })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let workdir = cli.workdir;
    let seed = cli.seed;
    match cli.command {
        Command::GenCorpus { config, out } => {
            pipeline::gen_corpus(&workdir.join(config), &workdir.join(out), seed)
        }
        Command::Preprocess {
            sample,
            out,
            roi_window,
            rescale_8bit,
        } => pipeline::preprocess_sample(
            &workdir.join(sample),
            &workdir.join(out),
            &pipeline::PreprocessArgs {
                roi: roi_window.roi,
                window: roi_window.window,
                median: roi_window.median,
                rescale_8bit,
            },
        ),
        Command::TrainAdulteration {
            config,
            corpus,
            model_out,
            curve_out,
            roi_window,
            variance_floor,
            k,
            reference_subsample,
            render_svg,
        } => pipeline::train_adulteration(&pipeline::TrainAdulterationArgs {
            config: workdir.join(config),
            corpus: workdir.join(corpus),
            model_out: workdir.join(model_out),
            curve_out: workdir.join(curve_out),
            roi: roi_window.roi,
            window: roi_window.window,
            median: roi_window.median,
            variance_floor,
            k,
            reference_subsample,
            render_svg,
            seed,
        }),
        Command::Estimate {
            model,
            sample,
            out,
            roi_window,
        } => pipeline::estimate_sample(
            &workdir.join(model),
            &workdir.join(sample),
            out.map(|o| workdir.join(o)).as_deref(),
            &roi_window.roi,
            roi_window.window,
            roi_window.median,
        ),
        Command::TrainReheat {
            config,
            corpus,
            classifier_out,
            gap_curve_out,
            eigenvalues_out,
            roi_window,
            variance_floor,
            k,
            stride,
            threshold,
            sigma_grid,
            render_svg,
        } => pipeline::train_reheat(&pipeline::TrainReheatArgs {
            config: workdir.join(config),
            corpus: workdir.join(corpus),
            classifier_out: workdir.join(classifier_out),
            gap_curve_out: workdir.join(gap_curve_out),
            eigenvalues_out: workdir.join(eigenvalues_out),
            roi: roi_window.roi,
            window: roi_window.window,
            median: roi_window.median,
            variance_floor,
            k,
            stride,
            threshold,
            sigma_grid,
            render_svg,
            seed,
        }),
        Command::Classify {
            classifier,
            sample,
            roi_window,
        } => pipeline::classify_sample(
            &workdir.join(classifier),
            &workdir.join(sample),
            &roi_window.roi,
            roi_window.window,
            roi_window.median,
        ),
        Command::Evaluate {
            classifier,
            corpus,
            out,
            roi_window,
            trials,
            datasets,
            points_per_class,
        } => pipeline::evaluate(&pipeline::EvaluateArgs {
            classifier: workdir.join(classifier),
            corpus: workdir.join(corpus),
            out: workdir.join(out),
            roi: roi_window.roi,
            window: roi_window.window,
            median: roi_window.median,
            trials,
            datasets,
            points_per_class,
            seed,
        }),
    }
}
