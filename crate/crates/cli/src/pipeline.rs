//! Command implementations: the glue between the on-disk corpus layout
//! and the core pipelines.
//!
//! Corpus layout written by `gen-corpus` and read back by the training
//! and evaluation commands:
//!
//! ```text
//! corpus/
//!   train/<sample_id>/raw/manifest.json + band_*.pgm
//!   train/<sample_id>/dark/...
//!   validation/<sample_id>/...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use oleospec_core::adulteration::{
    estimate, fit_model, AdulterationModel, CalibrationPoint, FitOptions,
};
use oleospec_core::config::Config;
use oleospec_core::cube::corpus::{generate_corpus, CorpusSpec, Split};
use oleospec_core::cube::{
    atomic_write, load_cube, save_cube, ClassLabel, GeneratorParams, SpectralCube,
};
use oleospec_core::fda::{compute_scatter, solve_fda};
use oleospec_core::preprocess::{
    build_data_matrix, extract_roi, rescale_to_8bit, smooth_with, stride_subsample, subtract_dark,
    Roi, SmoothKind,
};
use oleospec_core::reheat::{
    evaluate_classifier, train_classifier, EmbedOptions, EvaluationConfig, ReheatClassifier,
    TrainConfig,
};
use oleospec_core::{Error, Result};

use crate::svg;

const DEFAULT_WINDOW: usize = 3;

pub fn gen_corpus(config: &Path, out: &Path, seed: u64) -> Result<()> {
    let cfg = Config::from_file(config)?;
    let params = GeneratorParams::from_config(&cfg)?;
    let spec = CorpusSpec::from_config(&cfg)?;
    let corpus = generate_corpus(&params, &spec, seed)?;
    for record in &corpus {
        let dir = out.join(record.split.dir_name()).join(&record.sample_id);
        save_cube(&record.raw, dir.join("raw"))?;
        save_cube(&record.dark, dir.join("dark"))?;
    }
    println!(
        "wrote {} samples ({} train) to {}",
        corpus.len(),
        corpus.iter().filter(|r| r.split == Split::Train).count(),
        out.display()
    );
    Ok(())
}

/// Load one sample directory holding `raw/` and `dark/` cubes.
fn load_sample(dir: &Path) -> Result<(SpectralCube, SpectralCube)> {
    Ok((load_cube(dir.join("raw"))?, load_cube(dir.join("dark"))?))
}

/// Sample directories of one corpus split, sorted by name so every walk
/// is deterministic.
fn sample_dirs(corpus: &Path, split: &str) -> Result<Vec<PathBuf>> {
    let root = corpus.join(split);
    let mut dirs = Vec::new();
    let entries = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&root, e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::validation(format!(
            "no sample directories under {}",
            root.display()
        )));
    }
    Ok(dirs)
}

struct Preprocessed {
    cube: SpectralCube,
    roi: Roi,
}

/// Dark-subtract and smooth a sample, resolving the ROI against the
/// image bounds.
fn preprocess_cube(
    raw: &SpectralCube,
    dark: &SpectralCube,
    roi: Option<Roi>,
    window: usize,
    median: bool,
) -> Result<Preprocessed> {
    let cube = subtract_dark(raw, dark)?;
    let kind = if median {
        SmoothKind::Median
    } else {
        SmoothKind::MovingAverage
    };
    let cube = smooth_with(&cube, window, kind)?;
    let roi = match roi {
        Some(r) => r,
        None => Roi::centered(cube.width(), cube.height(), Roi::DEFAULT_SIDE)?,
    };
    roi.check_bounds(cube.width(), cube.height())?;
    Ok(Preprocessed { cube, roi })
}

fn config_roi(cfg: &Config) -> Result<Option<Roi>> {
    match cfg.get_f64_list("roi")? {
        Some(v) if v.len() == 3 => Ok(Some(Roi::new(v[0] as usize, v[1] as usize, v[2] as usize))),
        Some(_) => Err(Error::config("roi key must hold x,y,side")),
        None => Ok(None),
    }
}

pub struct PreprocessArgs {
    pub roi: Option<Roi>,
    pub window: Option<usize>,
    pub median: bool,
    pub rescale_8bit: bool,
}

pub fn preprocess_sample(sample: &Path, out: &Path, args: &PreprocessArgs) -> Result<()> {
    let (raw, dark) = load_sample(sample)?;
    let label = raw
        .label()
        .ok_or_else(|| Error::validation("sample cube carries no class label"))?;
    let pre = preprocess_cube(
        &raw,
        &dark,
        args.roi,
        args.window.unwrap_or(DEFAULT_WINDOW),
        args.median,
    )?;
    let mut block = extract_roi(&pre.cube, &pre.roi)?;
    if args.rescale_8bit {
        block = rescale_to_8bit(&block, pre.cube.bit_depth());
    }
    let matrix = build_data_matrix(&[(block, label)])?;
    matrix.save_csv(out)?;
    println!(
        "wrote {} pixel spectra for {} to {}",
        matrix.nrows(),
        raw.sample_id(),
        out.display()
    );
    Ok(())
}

pub struct TrainAdulterationArgs {
    pub config: PathBuf,
    pub corpus: PathBuf,
    pub model_out: PathBuf,
    pub curve_out: PathBuf,
    pub roi: Option<Roi>,
    pub window: Option<usize>,
    pub median: bool,
    pub variance_floor: Option<f64>,
    pub k: Option<usize>,
    pub reference_subsample: Option<usize>,
    pub render_svg: bool,
    pub seed: u64,
}

pub fn train_adulteration(args: &TrainAdulterationArgs) -> Result<()> {
    let cfg = Config::from_file(&args.config)?;
    let roi = args.roi.or(config_roi(&cfg)?);
    let window = match args.window {
        Some(w) => w,
        None => cfg.get_usize("window")?.unwrap_or(DEFAULT_WINDOW),
    };
    let floor = match args.variance_floor {
        Some(f) => f,
        None => cfg.get_f64("variance_floor")?.unwrap_or(0.99),
    };
    let k = match args.k {
        Some(k) => Some(k),
        None => cfg.get_usize("k")?,
    };
    let subsample = match args.reference_subsample {
        Some(s) => s,
        None => cfg.get_usize("reference_subsample")?.unwrap_or(900),
    };

    let mut labelled = Vec::new();
    let mut replicates = Vec::new();
    for dir in sample_dirs(&args.corpus, "train")? {
        let (raw, dark) = load_sample(&dir)?;
        let fraction = match raw.label() {
            Some(ClassLabel::AdulterationFraction(f)) => f,
            _ => {
                return Err(Error::validation(format!(
                    "{}: expected an adulteration-fraction label",
                    dir.display()
                )))
            }
        };
        let pre = preprocess_cube(&raw, &dark, roi, window, args.median)?;
        let block = extract_roi(&pre.cube, &pre.roi)?;
        labelled.push((block.clone(), ClassLabel::AdulterationFraction(fraction)));
        replicates.push((fraction, block));
    }

    let matrix = build_data_matrix(&labelled)?;
    let scatter = compute_scatter(&matrix)?;
    let fda = solve_fda(&scatter, floor, k)?;
    let projected: Vec<(f64, DMatrix<f64>)> = replicates
        .iter()
        .map(|(f, b)| Ok((*f, fda.project_block(b)?)))
        .collect::<Result<Vec<_>>>()?;
    let (model, curve) = fit_model(
        &projected,
        fda,
        &FitOptions {
            reference_subsample: subsample,
            seed: args.seed,
        },
    )?;

    model.save(&args.model_out)?;
    write_calibration_csv(&args.curve_out, &curve)?;
    if args.render_svg {
        let points: Vec<(f64, f64)> = curve
            .iter()
            .map(|p| (p.fraction, p.mean_normalized))
            .collect();
        let rendered = svg::line_chart(
            &points,
            false,
            "Calibration curve",
            "adulteration fraction",
            "normalized distance",
        );
        atomic_write(&args.curve_out.with_extension("svg"), rendered.as_bytes())?;
    }
    println!(
        "trained adulteration model: Y = {:.4}X^2 + {:.4}X, r_squared={:.4}, normalizer={:.4}; \
         model -> {}, curve -> {}",
        model.coeff_a,
        model.coeff_b,
        model.r_squared,
        model.normalizer,
        args.model_out.display(),
        args.curve_out.display()
    );
    Ok(())
}

fn write_calibration_csv(path: &Path, curve: &[CalibrationPoint]) -> Result<()> {
    let reps = curve
        .iter()
        .map(|p| p.replicate_normalized.len())
        .max()
        .unwrap_or(0);
    let mut text = String::from("fraction,mean_normalized_b");
    for i in 1..=reps {
        text.push_str(&format!(",rep_{i}"));
    }
    text.push('\n');
    for point in curve {
        text.push_str(&format!("{},{}", point.fraction, point.mean_normalized));
        for i in 0..reps {
            match point.replicate_normalized.get(i) {
                Some(v) => text.push_str(&format!(",{v}")),
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

pub fn estimate_sample(
    model_path: &Path,
    sample: &Path,
    out: Option<&Path>,
    roi: &Option<Roi>,
    window: Option<usize>,
    median: bool,
) -> Result<()> {
    let model = AdulterationModel::load(model_path)?;
    let (raw, dark) = load_sample(sample)?;
    let pre = preprocess_cube(&raw, &dark, *roi, window.unwrap_or(DEFAULT_WINDOW), median)?;
    let fraction = estimate(&pre.cube, &model, &pre.roi)?;
    println!("sample_id={} estimate={fraction}", raw.sample_id());
    if let Some(out) = out {
        append_csv_row(
            out,
            "sample_id,estimate",
            &format!("{},{fraction}", raw.sample_id()),
        )?;
    }
    Ok(())
}

/// Append one row, creating the file with its header when absent.
fn append_csv_row(path: &Path, header: &str, row: &str) -> Result<()> {
    let mut text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{header}\n"),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.push_str(row);
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub struct TrainReheatArgs {
    pub config: PathBuf,
    pub corpus: PathBuf,
    pub classifier_out: PathBuf,
    pub gap_curve_out: PathBuf,
    pub eigenvalues_out: PathBuf,
    pub roi: Option<Roi>,
    pub window: Option<usize>,
    pub median: bool,
    pub variance_floor: Option<f64>,
    pub k: Option<usize>,
    pub stride: Option<usize>,
    pub threshold: Option<f64>,
    pub sigma_grid: Option<usize>,
    pub render_svg: bool,
    pub seed: u64,
}

pub fn train_reheat(args: &TrainReheatArgs) -> Result<()> {
    let cfg = Config::from_file(&args.config)?;
    let roi = args.roi.or(config_roi(&cfg)?);
    let window = match args.window {
        Some(w) => w,
        None => cfg.get_usize("window")?.unwrap_or(DEFAULT_WINDOW),
    };
    let floor = match args.variance_floor {
        Some(f) => f,
        None => cfg.get_f64("variance_floor")?.unwrap_or(0.99),
    };
    let k = match args.k {
        Some(k) => Some(k),
        None => cfg.get_usize("k")?,
    };
    let stride = match args.stride {
        Some(s) => s,
        None => cfg.get_usize("stride")?.unwrap_or(3),
    };
    let threshold = match args.threshold {
        Some(t) => t,
        None => cfg
            .get_f64("component_threshold")?
            .unwrap_or(oleospec_core::reheat::COMPONENT_THRESHOLD),
    };
    let grid_points = match args.sigma_grid {
        Some(g) => g,
        None => cfg.get_usize("sigma_grid_points")?.unwrap_or(60),
    };

    let mut labelled = Vec::new();
    let mut captures = Vec::new();
    let mut roi_side = 0;
    for dir in sample_dirs(&args.corpus, "train")? {
        let (raw, dark) = load_sample(&dir)?;
        let cycles = match raw.label() {
            Some(ClassLabel::HeatCycles(c)) => c,
            _ => {
                return Err(Error::validation(format!(
                    "{}: expected a heat-cycles label",
                    dir.display()
                )))
            }
        };
        let pre = preprocess_cube(&raw, &dark, roi, window, args.median)?;
        let block = extract_roi(&pre.cube, &pre.roi)?;
        roi_side = pre.roi.side;
        labelled.push((block.clone(), ClassLabel::HeatCycles(cycles)));
        captures.push((cycles, block));
    }

    let matrix = build_data_matrix(&labelled)?;
    let scatter = compute_scatter(&matrix)?;
    let fda = solve_fda(&scatter, floor, k)?;
    let projected: Vec<(u32, DMatrix<f64>)> = captures
        .iter()
        .map(|(c, block)| {
            let sub = stride_subsample(block, roi_side, stride, None)?;
            Ok((*c, fda.project_block(&sub)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let (classifier, diagnostics) = train_classifier(
        &projected,
        fda,
        &TrainConfig {
            sigma_grid: None,
            grid_points,
            component_threshold: threshold,
            embed: EmbedOptions::default(),
            seed: args.seed,
        },
    )?;

    if !diagnostics.kmeans_converged {
        eprintln!("warning: k-means hit the iteration cap; keeping the best clustering found");
    }
    classifier.save(&args.classifier_out)?;
    let mut gap_csv = String::from("sigma,eigengap\n");
    for (sigma, gap) in &diagnostics.gap_curve {
        gap_csv.push_str(&format!("{sigma},{gap}\n"));
    }
    atomic_write(&args.gap_curve_out, gap_csv.as_bytes())?;
    let mut ev_csv = String::from("index,eigenvalue\n");
    for (i, ev) in diagnostics.eigenvalues_at_opt.iter().enumerate() {
        ev_csv.push_str(&format!("{i},{ev}\n"));
    }
    atomic_write(&args.eigenvalues_out, ev_csv.as_bytes())?;
    if args.render_svg {
        let rendered = svg::line_chart(
            &diagnostics.gap_curve,
            true,
            "Eigengap sweep",
            "sigma",
            "eigengap",
        );
        atomic_write(
            &args.gap_curve_out.with_extension("svg"),
            rendered.as_bytes(),
        )?;
    }
    println!(
        "trained reheat classifier: sigma_opt={:.4}, {} qualitative classes; classifier -> {}, \
         gap curve -> {}, eigenvalues -> {}",
        classifier.sigma_opt,
        classifier.n_qualitative,
        args.classifier_out.display(),
        args.gap_curve_out.display(),
        args.eigenvalues_out.display()
    );
    Ok(())
}

pub fn classify_sample(
    classifier_path: &Path,
    sample: &Path,
    roi: &Option<Roi>,
    window: Option<usize>,
    median: bool,
) -> Result<()> {
    let classifier = ReheatClassifier::load(classifier_path)?;
    let (raw, dark) = load_sample(sample)?;
    let pre = preprocess_cube(&raw, &dark, *roi, window.unwrap_or(DEFAULT_WINDOW), median)?;
    let block = extract_roi(&pre.cube, &pre.roi)?;
    let (class, distance) = oleospec_core::reheat::classify(&block, &classifier)?;
    println!(
        "sample_id={} qualitative_class={class} distance={distance}",
        raw.sample_id()
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub classifier: PathBuf,
    pub corpus: PathBuf,
    pub out: PathBuf,
    pub roi: Option<Roi>,
    pub window: Option<usize>,
    pub median: bool,
    pub trials: Option<usize>,
    pub datasets: Option<usize>,
    pub points_per_class: Option<usize>,
    pub seed: u64,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let classifier = ReheatClassifier::load(&args.classifier)?;
    // evaluate the held-out split when present, the training split otherwise
    let split = if args.corpus.join("validation").is_dir() {
        "validation"
    } else {
        "train"
    };
    let window = args.window.unwrap_or(DEFAULT_WINDOW);
    let mut blocks = Vec::new();
    for dir in sample_dirs(&args.corpus, split)? {
        let (raw, dark) = load_sample(&dir)?;
        let cycles = match raw.label() {
            Some(ClassLabel::HeatCycles(c)) => c,
            _ => {
                return Err(Error::validation(format!(
                    "{}: expected a heat-cycles label",
                    dir.display()
                )))
            }
        };
        let pre = preprocess_cube(&raw, &dark, args.roi, window, args.median)?;
        blocks.push((cycles, extract_roi(&pre.cube, &pre.roi)?));
    }

    let report = evaluate_classifier(
        &classifier,
        &blocks,
        &EvaluationConfig {
            trials: args.trials.unwrap_or(20),
            datasets: args.datasets.unwrap_or(5),
            points_per_class: args.points_per_class.unwrap_or(100),
            seed: args.seed,
            embed: EmbedOptions::default(),
        },
    )?;

    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let summary = format!(
        "heat_max_accuracy,heat_min_accuracy,heat_mode_accuracy,\
         qualitative_max_accuracy,qualitative_min_accuracy,qualitative_mode_accuracy,mean_resc\n\
         {},{},{},{},{},{},{}\n",
        report.heat_accuracy.max,
        report.heat_accuracy.min,
        report.heat_accuracy.mode,
        report.qualitative_accuracy.max,
        report.qualitative_accuracy.min,
        report.qualitative_accuracy.mode,
        report.mean_resc
    );
    atomic_write(&args.out.join("summary.csv"), summary.as_bytes())?;

    let mut trials_csv = String::from("trial,heat_accuracy,qualitative_accuracy\n");
    for t in &report.trials {
        trials_csv.push_str(&format!(
            "{},{},{}\n",
            t.trial, t.heat_accuracy, t.qualitative_accuracy
        ));
    }
    atomic_write(&args.out.join("trials.csv"), trials_csv.as_bytes())?;

    let mut rep_csv = String::from("heat_cycles,dataset,resc,assignment_counts,assignments\n");
    for sample in &report.repeatability {
        for (d, (rep, assignments)) in sample
            .dataset_reports
            .iter()
            .zip(&sample.dataset_assignments)
            .enumerate()
        {
            let counts: Vec<String> = rep
                .class_counts
                .iter()
                .map(|(class, count)| format!("{class}:{count}"))
                .collect();
            let sequence: Vec<String> = assignments.iter().map(|a| a.to_string()).collect();
            rep_csv.push_str(&format!(
                "{},{},{},{},{}\n",
                sample.heat_cycles,
                d,
                rep.resc,
                counts.join("|"),
                sequence.join("|")
            ));
        }
    }
    atomic_write(&args.out.join("repeatability.csv"), rep_csv.as_bytes())?;

    // per-sample aggregates: the per-dataset mean and the sum over
    // datasets, reported side by side
    let mut rep_summary = String::from("heat_cycles,mean_resc,sum_resc\n");
    for sample in &report.repeatability {
        rep_summary.push_str(&format!(
            "{},{},{}\n",
            sample.heat_cycles, sample.mean_resc, sample.sum_resc
        ));
    }
    atomic_write(
        &args.out.join("repeatability_summary.csv"),
        rep_summary.as_bytes(),
    )?;

    println!(
        "evaluation over {split} split: heat mode accuracy={:.4}, qualitative mode accuracy={:.4}, \
         mean ReSc={:.4}; reports -> {}",
        report.heat_accuracy.mode,
        report.qualitative_accuracy.mode,
        report.mean_resc,
        args.out.display()
    );
    Ok(())
}
