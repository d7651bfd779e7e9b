//! Acceptance suite: end-to-end checks on the shipped synthetic corpora
//! plus the numerical property suites. Each test prints one PASS line
//! with the measured figures.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oleospec_core::adulteration::{
    bhattacharyya, estimate, fit_model, mse, FitOptions, GaussianClassModel,
};
use oleospec_core::config::Config;
use oleospec_core::cube::corpus::{generate_corpus, CorpusSpec, SampleRecord, Split};
use oleospec_core::cube::{ClassLabel, GeneratorParams, SpectralCube};
use oleospec_core::fda::{compute_scatter, solve_fda, FdaModel, ScatterPair, SW_RIDGE};
use oleospec_core::preprocess::{
    build_data_matrix, extract_roi, smooth, stride_subsample, subtract_dark, DataMatrix, Roi,
};
use oleospec_core::reheat::{
    affinity, count_components, evaluate_classifier, laplacian, sigma_sweep,
    spectral_embed_cluster, train_classifier, EmbedOptions, EvaluationConfig, ReheatClassifier,
    TrainConfig, COMPONENT_THRESHOLD,
};

fn repo_config(name: &str) -> Config {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    Config::from_file(&path).expect("shipped config parses")
}

fn roi_from(cfg: &Config) -> Roi {
    let v = cfg.require_f64_list("roi").expect("roi key");
    Roi::new(v[0] as usize, v[1] as usize, v[2] as usize)
}

fn preprocess_block(record: &SampleRecord, window: usize, roi: &Roi) -> DMatrix<f64> {
    let cube = subtract_dark(&record.raw, &record.dark).expect("dark subtraction");
    let cube = smooth(&cube, window).expect("smoothing");
    extract_roi(&cube, roi).expect("roi extraction")
}

fn preprocessed_cube(record: &SampleRecord, window: usize) -> SpectralCube {
    let cube = subtract_dark(&record.raw, &record.dark).expect("dark subtraction");
    smooth(&cube, window).expect("smoothing")
}

// ---------------------------------------------------------------------
// Adulteration pipeline fixture (criteria 1-3 share it)
// ---------------------------------------------------------------------

struct AdultFixture {
    scatter: ScatterPair,
    fda: FdaModel,
    model: oleospec_core::adulteration::AdulterationModel,
    curve: Vec<oleospec_core::adulteration::CalibrationPoint>,
    predicted: Vec<f64>,
    actual: Vec<f64>,
    train_seconds: f64,
    projected_shape: (usize, usize),
    roi: Roi,
    /// First preprocessed replicate cube of every training class.
    train_cubes: Vec<(f64, SpectralCube)>,
}

fn adult_fixture() -> &'static AdultFixture {
    static FIXTURE: OnceLock<AdultFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let cfg = repo_config("adulteration.cfg");
        let params = GeneratorParams::from_config(&cfg).expect("generator params");
        let spec = CorpusSpec::from_config(&cfg).expect("corpus spec");
        let roi = roi_from(&cfg);
        let window = cfg.require_usize("window").expect("window");
        let k = cfg.get_usize("k").expect("k parses");
        let floor = cfg.require_f64("variance_floor").expect("variance floor");
        let subsample = cfg
            .require_usize("reference_subsample")
            .expect("reference subsample");

        let start = Instant::now();
        let corpus = generate_corpus(&params, &spec, 7).expect("corpus generation");

        let mut labelled = Vec::new();
        let mut replicates = Vec::new();
        let mut train_cubes: Vec<(f64, SpectralCube)> = Vec::new();
        for record in corpus.iter().filter(|r| r.split == Split::Train) {
            let block = preprocess_block(record, window, &roi);
            let fraction = match record.label {
                ClassLabel::AdulterationFraction(f) => f,
                _ => unreachable!("adulteration corpus"),
            };
            if !train_cubes.iter().any(|(f, _)| *f == fraction) {
                train_cubes.push((fraction, preprocessed_cube(record, window)));
            }
            labelled.push((block.clone(), record.label));
            replicates.push((fraction, block));
        }
        let matrix = build_data_matrix(&labelled).expect("data matrix");
        assert_eq!((matrix.nrows(), matrix.ncols()), (121_500, 9));
        let scatter = compute_scatter(&matrix).expect("scatter");
        let fda = solve_fda(&scatter, floor, k).expect("fda solve");
        let projected_full = oleospec_core::fda::project(&matrix, &fda).expect("projection");
        let projected_shape = (projected_full.nrows(), projected_full.ncols());
        drop(projected_full);
        let projected: Vec<(f64, DMatrix<f64>)> = replicates
            .iter()
            .map(|(f, b)| (*f, fda.project_block(b).expect("projection")))
            .collect();
        let (model, curve) = fit_model(
            &projected,
            fda.clone(),
            &FitOptions {
                reference_subsample: subsample,
                seed: 7,
            },
        )
        .expect("calibration fit");
        let train_seconds = start.elapsed().as_secs_f64();

        let mut predicted = Vec::new();
        let mut actual = Vec::new();
        for record in corpus.iter().filter(|r| r.split == Split::Validation) {
            let cube = preprocessed_cube(record, window);
            let fraction = match record.label {
                ClassLabel::AdulterationFraction(f) => f,
                _ => unreachable!("adulteration corpus"),
            };
            predicted.push(estimate(&cube, &model, &roi).expect("estimation"));
            actual.push(fraction);
        }

        AdultFixture {
            scatter,
            fda,
            model,
            curve,
            predicted,
            actual,
            train_seconds,
            projected_shape,
            roi,
            train_cubes,
        }
    })
}

#[test]
fn criterion_1_calibration_quality() {
    let fx = adult_fixture();
    assert!(
        fx.model.r_squared >= 0.98,
        "R² = {} below 0.98",
        fx.model.r_squared
    );
    for pair in fx.curve.windows(2) {
        assert!(
            pair[1].mean_normalized > pair[0].mean_normalized,
            "normalized distances not strictly increasing at fraction {}",
            pair[1].fraction
        );
    }
    assert!(
        fx.train_seconds <= 60.0,
        "training took {:.1} s",
        fx.train_seconds
    );
    // the shipped pipeline pins five discriminant dimensions
    assert_eq!(fx.fda.k(), 5);
    assert_eq!(fx.projected_shape, (121_500, 5));
    println!(
        "ACCEPTANCE 1 PASS — calibration R² = {:.4} (>= 0.98), Y = {:.3}X² + {:.3}X, \
         distances strictly increasing, 121500x9 reduced to 121500x5 (k = 5), training {:.1} s (<= 60 s)",
        fx.model.r_squared, fx.model.coeff_a, fx.model.coeff_b, fx.train_seconds
    );
}

#[test]
fn criterion_2_estimation_error() {
    let fx = adult_fixture();
    let err = mse(&fx.predicted, &fx.actual).expect("mse");
    let worst = fx
        .predicted
        .iter()
        .zip(&fx.actual)
        .map(|(p, a)| (p - a).abs())
        .fold(0.0f64, f64::max);
    assert_eq!(fx.predicted.len(), 16);
    assert!(err <= 0.0029, "validation MSE {err} above 0.0029");

    // estimate/fit round trip over the training classes, plus the pure
    // class self-estimate
    let mut worst_round_trip: f64 = 0.0;
    for (fraction, cube) in &fx.train_cubes {
        let predicted = estimate(cube, &fx.model, &fx.roi).expect("estimation");
        let error = (predicted - fraction).abs();
        worst_round_trip = worst_round_trip.max(error);
        assert!(
            error <= 0.02,
            "training class {fraction}: round-trip error {error}"
        );
        if *fraction == 0.0 {
            assert!(error <= 0.01, "pure-class estimate off by {error}");
        }
    }
    println!(
        "ACCEPTANCE 2 PASS — 16-sample validation MSE = {:.2e} (<= 2.9e-3), worst |error| = {:.4}, \
         training-class round trip <= {:.4} (<= 0.02)",
        err, worst, worst_round_trip
    );
}

/// Double-loop scatter oracle over the per-class definitions.
fn scatter_oracle(data: &DataMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = data.ncols();
    let values = data.values();
    let grand = values.row_mean().transpose();
    let mut within = DMatrix::zeros(n, n);
    let mut between = DMatrix::zeros(n, n);
    for label in data.class_order() {
        let rows = data.class_rows(label);
        let mut mean = DVector::zeros(n);
        for &r in &rows {
            mean += values.row(r).transpose();
        }
        mean /= rows.len() as f64;
        for &r in &rows {
            let d = values.row(r).transpose() - &mean;
            for i in 0..n {
                for j in 0..n {
                    within[(i, j)] += d[i] * d[j];
                }
            }
        }
        let dm = &mean - &grand;
        for i in 0..n {
            for j in 0..n {
                between[(i, j)] += dm[i] * dm[j];
            }
        }
    }
    (within, between)
}

fn random_data(rng: &mut ChaCha8Rng, classes: usize, rows: usize, cols: usize) -> DataMatrix {
    let blocks: Vec<(DMatrix<f64>, ClassLabel)> = (0..classes)
        .map(|c| {
            let center: Vec<f64> = (0..cols).map(|_| rng.random_range(-4.0..4.0)).collect();
            (
                DMatrix::from_fn(rows, cols, |_, j| center[j] + rng.random_range(-1.0..1.0)),
                ClassLabel::HeatCycles((c % 6) as u32),
            )
        })
        .collect();
    build_data_matrix(&blocks).expect("random data")
}

#[test]
fn criterion_3_fda_correctness() {
    // (a) generalized eigen residual on the shipped-corpus model
    let fx = adult_fixture();
    let mut worst_residual: f64 = 0.0;
    for (i, &lambda) in fx.fda.eigenvalues().iter().take(fx.fda.k()).enumerate() {
        let v = fx.fda.projection().column(i).into_owned();
        let lhs = &fx.scatter.between * &v;
        let rhs = &fx.scatter.within * &v * lambda;
        let rel = (&lhs - &rhs).norm() / lhs.norm();
        worst_residual = worst_residual.max(rel);
        assert!(rel <= 1e-6, "retained pair {i}: residual {rel}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(301);
    // (b) scatter vs double-loop oracle on 100 random instances
    let mut worst_scatter: f64 = 0.0;
    for _ in 0..100 {
        let classes = rng.random_range(2..5usize);
        let rows = rng.random_range(5..30usize);
        let cols = rng.random_range(2..6usize);
        let data = random_data(&mut rng, classes, rows, cols);
        let s = compute_scatter(&data).expect("scatter");
        let (within, between) = scatter_oracle(&data);
        let rel_w = (&s.within - &within).norm() / within.norm();
        let rel_b = (&s.between - &between).norm() / between.norm();
        worst_scatter = worst_scatter.max(rel_w).max(rel_b);
        assert!(rel_w <= 1e-10 && rel_b <= 1e-10, "scatter oracle mismatch");
    }

    // (c) 2-class Fisher direction vs the closed form
    let mut worst_angle: f64 = 0.0;
    for _ in 0..100 {
        let cols = rng.random_range(2..6usize);
        let data = random_data(&mut rng, 2, 40, cols);
        let s = compute_scatter(&data).expect("scatter");
        let model = solve_fda(&s, 0.99, None).expect("solve");
        let ridge = SW_RIDGE * s.within.trace() / cols as f64;
        let sw = &s.within + DMatrix::identity(cols, cols) * ridge;
        let dmu = &s.class_means[1].1 - &s.class_means[0].1;
        let w = sw.lu().solve(&dmu).expect("solve").normalize();
        let v = model.projection().column(0).into_owned();
        let angle = (&v - &w * v.dot(&w)).norm().asin();
        worst_angle = worst_angle.max(angle);
        assert!(angle <= 1e-8, "fisher direction angle {angle}");
    }
    println!(
        "ACCEPTANCE 3 PASS — eigen residual <= {:.1e} (<= 1e-6), scatter oracle <= {:.1e} \
         (<= 1e-10 rel, 100 runs), fisher angle <= {:.1e} (<= 1e-8 rad, 100 runs)",
        worst_residual, worst_scatter, worst_angle
    );
}

// ---------------------------------------------------------------------
// Bhattacharyya quadrature oracle
// ---------------------------------------------------------------------

/// Composite-Simpson integral of √(f_a·f_b); the distance is −ln of it.
fn bhattacharyya_quadrature(a: &GaussianClassModel, b: &GaussianClassModel) -> f64 {
    let d = a.dim();
    let inv_a = a.covariance().clone().try_inverse().expect("invertible");
    let inv_b = b.covariance().clone().try_inverse().expect("invertible");
    let det_a = a.covariance().determinant();
    let det_b = b.covariance().determinant();
    let norm = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) * (det_a * det_b).powf(0.25);
    let sqrt_ff = |x: &DVector<f64>| {
        let da = x - a.mean();
        let db = x - b.mean();
        let qa = (&inv_a * &da).dot(&da);
        let qb = (&inv_b * &db).dot(&db);
        (-(qa + qb) / 4.0).exp() / norm
    };

    let max_std = a
        .covariance()
        .diagonal()
        .iter()
        .chain(b.covariance().diagonal().iter())
        .fold(0.0f64, |acc, &v| acc.max(v.sqrt()));
    let center = (a.mean() + b.mean()) * 0.5;
    let half = 10.0 * max_std + (a.mean() - b.mean()).norm();

    // Simpson weights over an odd node count per axis.
    let simpson = |n: usize, i: usize| -> f64 {
        if i == 0 || i == n - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    match d {
        1 => {
            let n = 2001;
            let h = 2.0 * half / (n - 1) as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let x = DVector::from_vec(vec![center[0] - half + h * i as f64]);
                acc += simpson(n, i) * sqrt_ff(&x);
            }
            acc * h / 3.0
        }
        2 => {
            let n = 501;
            let h = 2.0 * half / (n - 1) as f64;
            let mut acc = 0.0;
            for i in 0..n {
                let wi = simpson(n, i);
                let xi = center[0] - half + h * i as f64;
                for j in 0..n {
                    let x = DVector::from_vec(vec![xi, center[1] - half + h * j as f64]);
                    acc += wi * simpson(n, j) * sqrt_ff(&x);
                }
            }
            acc * h * h / 9.0
        }
        _ => unreachable!("oracle covers 1-D and 2-D"),
    }
}

#[test]
fn criterion_4_bhattacharyya_correctness() {
    // hand-evaluated scalar cases
    let g = |mean: f64, var: f64| {
        GaussianClassModel::from_parts(
            DVector::from_vec(vec![mean]),
            DMatrix::from_element(1, 1, var),
            100,
        )
        .expect("1-D gaussian")
    };
    let shift = bhattacharyya(&g(0.0, 1.0), &g(2.0, 1.0)).expect("distance");
    assert!((shift - 0.5).abs() <= 1e-10, "mean-shift case: {shift}");
    let ratio = bhattacharyya(&g(0.0, 1.0), &g(0.0, 4.0)).expect("distance");
    let expected = 0.5 * (2.5f64 / 2.0).ln();
    assert!(
        (ratio - expected).abs() <= 1e-10,
        "variance-ratio case: {ratio}"
    );

    // quadrature oracle on random 1-D and 2-D pairs
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let d = if case < 10 { 1 } else { 2 };
        let random_gaussian = |rng: &mut ChaCha8Rng| {
            let mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let cov = if d == 1 {
                DMatrix::from_element(1, 1, rng.random_range(0.5..2.0))
            } else {
                let spread = rng.random_range(0.5..1.5);
                let tilt = rng.random_range(-0.4..0.4);
                DMatrix::from_row_slice(2, 2, &[spread, tilt, tilt, rng.random_range(0.5..1.5)])
                    + DMatrix::identity(2, 2) * 0.5
            };
            GaussianClassModel::from_parts(mean, cov, 100).expect("random gaussian")
        };
        let a = random_gaussian(&mut rng);
        let b = random_gaussian(&mut rng);
        let direct = bhattacharyya(&a, &b).expect("distance");
        let integral = bhattacharyya_quadrature(&a, &b);
        let via_integral = -integral.ln();
        let diff = (direct - via_integral).abs();
        worst = worst.max(diff);
        assert!(
            diff <= 1e-4,
            "case {case} ({d}-D): direct {direct} vs quadrature {via_integral}"
        );
    }
    println!(
        "ACCEPTANCE 4 PASS — scalar hand cases at 1e-10, quadrature oracle max |Δ| = {:.2e} \
         (<= 1e-4, 20 pairs)",
        worst
    );
}

// ---------------------------------------------------------------------
// Spectral clustering recovery
// ---------------------------------------------------------------------

fn planted_line_clusters(rng: &mut ChaCha8Rng, per: usize) -> (DMatrix<f64>, Vec<usize>) {
    let centers = [0.0, 10.0, 22.0, 36.0, 52.0, 70.0];
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (c, &center) in centers.iter().enumerate() {
        for _ in 0..per {
            rows.push(center + rng.random_range(-1.0..1.0));
            rows.push(rng.random_range(-1.0..1.0));
            rows.push(rng.random_range(-1.0..1.0));
            truth.push(c);
        }
    }
    (
        DMatrix::from_row_slice(per * centers.len(), 3, &rows),
        truth,
    )
}

fn exactly_recovered(labels: &[usize], truth: &[usize], clusters: usize) -> bool {
    let mut map = vec![usize::MAX; clusters];
    for (&l, &t) in labels.iter().zip(truth) {
        if map[l] == usize::MAX {
            map[l] = t;
        } else if map[l] != t {
            return false;
        }
    }
    let mut seen = vec![false; clusters];
    for &m in &map {
        if m == usize::MAX || seen[m] {
            return false;
        }
        seen[m] = true;
    }
    true
}

#[test]
fn criterion_5_spectral_recovery() {
    let mut recovered = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (points, truth) = planted_line_clusters(&mut rng, 15);
        let grid = oleospec_core::reheat::default_sigma_grid(&points, 40).expect("grid");
        let (sigma_opt, _) = sigma_sweep(&points, 6, &grid).expect("sweep");
        let outcome = spectral_embed_cluster(&points, sigma_opt, 6, seed, &EmbedOptions::default())
            .expect("clustering");
        if exactly_recovered(&outcome.labels, &truth, 6) {
            recovered += 1;
        }
    }
    assert!(recovered >= 19, "only {recovered}/20 exact recoveries");

    // block-diagonal component counting, 50 random instances
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let mut exact = 0;
    for _ in 0..50 {
        let blocks = rng.random_range(2..7usize);
        let per = rng.random_range(3..7usize);
        let m = blocks * per;
        let mut w = DMatrix::zeros(m, m);
        for b in 0..blocks {
            for i in 0..per {
                for j in (i + 1)..per {
                    let v = rng.random_range(0.1..1.0);
                    w[(b * per + i, b * per + j)] = v;
                    w[(b * per + j, b * per + i)] = v;
                }
            }
        }
        let (l, _) = laplacian(&w).expect("laplacian");
        let mut evs: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
        evs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        if count_components(&evs, COMPONENT_THRESHOLD).expect("count") == blocks {
            exact += 1;
        }
    }
    assert_eq!(
        exact,
        50,
        "component counting missed {} instances",
        50 - exact
    );
    println!(
        "ACCEPTANCE 5 PASS — planted 6-cluster recovery {recovered}/20 (>= 19), \
         block-diagonal component count 50/50"
    );
}

// ---------------------------------------------------------------------
// Reheat pipeline on the shipped corpus
// ---------------------------------------------------------------------

struct ReheatFixture {
    classifier: ReheatClassifier,
    report: oleospec_core::reheat::EvaluationReport,
    eigenvalues_at_opt: Vec<f64>,
}

fn reheat_fixture() -> &'static ReheatFixture {
    static FIXTURE: OnceLock<ReheatFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let cfg = repo_config("reheat.cfg");
        let params = GeneratorParams::from_config(&cfg).expect("generator params");
        let spec = CorpusSpec::from_config(&cfg).expect("corpus spec");
        let roi = roi_from(&cfg);
        let window = cfg.require_usize("window").expect("window");
        let stride = cfg.require_usize("stride").expect("stride");
        let k = cfg.get_usize("k").expect("k parses");
        let floor = cfg.require_f64("variance_floor").expect("variance floor");
        let corpus = generate_corpus(&params, &spec, 11).expect("corpus generation");

        let mut labelled = Vec::new();
        let mut train_blocks: Vec<(u32, DMatrix<f64>)> = Vec::new();
        let mut test_blocks: Vec<(u32, DMatrix<f64>)> = Vec::new();
        for record in &corpus {
            let block = preprocess_block(record, window, &roi);
            let cycles = match record.label {
                ClassLabel::HeatCycles(c) => c,
                _ => unreachable!("reheat corpus"),
            };
            match record.split {
                Split::Train => {
                    labelled.push((block.clone(), record.label));
                    train_blocks.push((cycles, block));
                }
                Split::Validation => test_blocks.push((cycles, block)),
            }
        }
        let matrix = build_data_matrix(&labelled).expect("data matrix");
        let scatter = compute_scatter(&matrix).expect("scatter");
        let fda = solve_fda(&scatter, floor, k).expect("fda solve");

        // clustering points: stride-subsampled pixels from every capture
        let projected: Vec<(u32, DMatrix<f64>)> = train_blocks
            .iter()
            .map(|(c, block)| {
                let sub = stride_subsample(block, roi.side, stride, None).expect("subsample");
                (*c, fda.project_block(&sub).expect("projection"))
            })
            .collect();
        let (classifier, diagnostics) = train_classifier(
            &projected,
            fda,
            &TrainConfig {
                seed: 11,
                ..TrainConfig::default()
            },
        )
        .expect("training");

        let report = evaluate_classifier(
            &classifier,
            &test_blocks,
            &EvaluationConfig {
                trials: cfg.require_usize("trials").expect("trials"),
                datasets: cfg.require_usize("datasets").expect("datasets"),
                points_per_class: cfg
                    .require_usize("points_per_class")
                    .expect("points_per_class"),
                seed: 11,
                embed: EmbedOptions::default(),
            },
        )
        .expect("evaluation");

        ReheatFixture {
            classifier,
            report,
            eigenvalues_at_opt: diagnostics.eigenvalues_at_opt,
        }
    })
}

#[test]
fn criterion_6_reheat_pipeline() {
    let fx = reheat_fixture();
    assert_eq!(
        fx.classifier.n_qualitative,
        4,
        "expected 4 qualitative classes, got {} (eigenvalues {:?})",
        fx.classifier.n_qualitative,
        &fx.eigenvalues_at_opt[..8.min(fx.eigenvalues_at_opt.len())]
    );
    assert!(
        fx.report.heat_accuracy.mode >= 0.90,
        "heat-class mode accuracy {} below 0.90",
        fx.report.heat_accuracy.mode
    );
    assert!(
        fx.report.mean_resc >= 0.97,
        "mean ReSc {} below 0.97",
        fx.report.mean_resc
    );
    println!(
        "ACCEPTANCE 6 PASS — 4 qualitative classes at σ_opt = {:.3}, heat mode accuracy = {:.3} \
         (>= 0.90, min {:.3}, max {:.3}), qualitative mode accuracy = {:.3}, mean ReSc = {:.3} (>= 0.97)",
        fx.classifier.sigma_opt,
        fx.report.heat_accuracy.mode,
        fx.report.heat_accuracy.min,
        fx.report.heat_accuracy.max,
        fx.report.qualitative_accuracy.mode,
        fx.report.mean_resc
    );
}

// ---------------------------------------------------------------------
// Numerical invariants, 1000 randomized cases per property
// ---------------------------------------------------------------------

#[test]
fn criterion_8_numerical_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(801);

    // Laplacian spectrum in [0, 2] and affinity symmetry
    for _ in 0..1000 {
        let m = rng.random_range(4..12usize);
        let dims = rng.random_range(1..4usize);
        let points = DMatrix::from_fn(m, dims, |_, _| rng.random_range(-3.0..3.0));
        let sigma = rng.random_range(0.5..4.0);
        let w = affinity(&points, sigma).expect("affinity");
        for i in 0..m {
            assert_eq!(w[(i, i)], 0.0);
            for j in 0..m {
                assert_eq!(w[(i, j)], w[(j, i)]);
                if i != j {
                    assert!(w[(i, j)] > 0.0 && w[(i, j)] <= 1.0);
                }
            }
        }
        let (l, _) = laplacian(&w).expect("laplacian");
        let evs = l.symmetric_eigenvalues();
        let min = evs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = evs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= -1e-8, "eigenvalue {min} below 0");
        assert!(min <= 1e-8, "smallest eigenvalue {min} not ~0");
        assert!(max <= 2.0 + 1e-8, "eigenvalue {max} above 2");
    }

    // kernel scale coupling: power-of-two scaling is exact, and the
    // cluster assignments are unchanged
    for case in 0..1000 {
        let m = rng.random_range(6..12usize);
        let points = DMatrix::from_fn(m, 2, |_, _| rng.random_range(-3.0..3.0));
        let sigma = rng.random_range(0.5..2.0);
        let c = [0.5, 2.0, 4.0, 8.0][case % 4];
        let w = affinity(&points, sigma).expect("affinity");
        let w_scaled = affinity(&(&points * c), sigma * c).expect("affinity");
        assert_eq!(w, w_scaled, "kernel not scale-invariant for c = {c}");
        if case % 50 == 0 {
            let a = spectral_embed_cluster(&points, sigma, 2, 9, &EmbedOptions::default())
                .expect("cluster");
            let b =
                spectral_embed_cluster(&(&points * c), sigma * c, 2, 9, &EmbedOptions::default())
                    .expect("cluster");
            assert_eq!(a.labels, b.labels, "assignments changed under scaling");
        }
    }

    // smoothing matches the naive windowed-mean oracle
    let specs = oleospec_core::cube::reference_band_specs().to_vec();
    for _ in 0..1000 {
        let w = rng.random_range(4..10usize);
        let h = rng.random_range(4..10usize);
        let window = rng.random_range(1..=4usize.min(w).min(h));
        let bands: Vec<_> = (0..9)
            .map(|_| {
                let values: Vec<u16> = (0..w * h).map(|_| rng.random_range(0..1024)).collect();
                oleospec_core::cube::BandImage::new(w, h, 10, values).expect("band")
            })
            .collect();
        let cube = SpectralCube::new("prop", None, specs.clone(), bands).expect("cube");
        let smoothed = smooth(&cube, window).expect("smooth");
        let lo = (window / 2) as isize;
        let hi = window as isize - 1 - lo;
        for b in 0..9 {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0u64;
                    for dy in -lo..=hi {
                        for dx in -lo..=hi {
                            let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                            let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                            acc += cube.band(b).get(sx, sy) as u64;
                        }
                    }
                    let expected = (acc as f64 / (window * window) as f64).round() as u16;
                    assert_eq!(
                        smoothed.band(b).get(x, y),
                        expected,
                        "window {window} at ({x},{y})"
                    );
                }
            }
        }
    }

    // dark subtraction clamps at zero
    for _ in 0..1000 {
        let w = rng.random_range(2..8usize);
        let h = rng.random_range(2..8usize);
        let mk = |rng: &mut ChaCha8Rng| {
            let bands: Vec<_> = (0..9)
                .map(|_| {
                    let values: Vec<u16> = (0..w * h).map(|_| rng.random_range(0..1024)).collect();
                    oleospec_core::cube::BandImage::new(w, h, 10, values).expect("band")
                })
                .collect();
            SpectralCube::new("prop", None, specs.clone(), bands).expect("cube")
        };
        let raw = mk(&mut rng);
        let dark = mk(&mut rng);
        let out = subtract_dark(&raw, &dark).expect("subtract");
        for b in 0..9 {
            for i in 0..w * h {
                let r = raw.band(b).values()[i] as i32;
                let d = dark.band(b).values()[i] as i32;
                assert_eq!(out.band(b).values()[i] as i32, (r - d).max(0));
            }
        }
    }

    println!(
        "ACCEPTANCE 8 PASS — Laplacian spectrum ⊂ [0,2]±1e-8, affinity symmetric with zero \
         diagonal, kernel scale-coupling exact, smoothing matches the naive oracle, dark \
         subtraction clamps at zero (1000 randomized cases per property)"
    );
}
