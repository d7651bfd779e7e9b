//! Reheat-cycle classification by eigengap-optimized spectral clustering.
//!
//! Pixel spectra in the reduced space are wired into a Gaussian-kernel
//! affinity graph; the normalized Laplacian's spectrum drives both the
//! kernel-width sweep (maximize the `n`-th eigengap) and the count of
//! connected components under a fixed threshold, which fixes the number
//! of qualitative classes. K-means on the leading eigenvectors yields
//! clusters whose distance from the pure-oil reference cluster defines
//! the qualitative class ranges.

mod kmeans;

pub use kmeans::{kmeans, KMeansResult};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cube::{atomic_write, derive_seed};
use crate::error::{Error, Result};
use crate::fda::FdaModel;

/// Eigenvalues below this threshold count as connected components.
pub const COMPONENT_THRESHOLD: f64 = 0.025;

/// Gaussian-kernel affinity matrix: `W(i,j) = exp(−‖xᵢ−xⱼ‖²/2σ²)` off
/// the diagonal, zero on it.
pub fn affinity(points: &DMatrix<f64>, sigma: f64) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::validation(format!("sigma {sigma} must be > 0")));
    }
    let m = points.nrows();
    if m < 2 {
        return Err(Error::validation("affinity needs at least two points"));
    }
    let denom = 2.0 * sigma * sigma;
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let mut d2 = 0.0;
            for c in 0..points.ncols() {
                let diff = points[(i, c)] - points[(j, c)];
                d2 += diff * diff;
            }
            let v = (-d2 / denom).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

/// Normalized graph Laplacian `L = I − D^{-1/2} W D^{-1/2}` and the
/// degree diagonal.
pub fn laplacian(w: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let m = w.nrows();
    if w.ncols() != m {
        return Err(Error::validation("affinity matrix must be square"));
    }
    for i in 0..m {
        if w[(i, i)] != 0.0 {
            return Err(Error::validation("affinity diagonal must be zero"));
        }
        for j in (i + 1)..m {
            if w[(i, j)] < 0.0 {
                return Err(Error::validation("affinity entries must be non-negative"));
            }
            if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 {
                return Err(Error::validation("affinity matrix must be symmetric"));
            }
        }
    }
    let mut degrees = DVector::zeros(m);
    for i in 0..m {
        degrees[i] = w.row(i).sum();
        if degrees[i] <= 0.0 {
            return Err(Error::numerical(format!(
                "isolated vertex {i}: zero degree"
            )));
        }
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut l = DMatrix::identity(m, m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                l[(i, j)] = -w[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
            }
        }
    }
    Ok((l, degrees))
}

/// Laplacian spectrum at one kernel width: ascending eigenvalues plus
/// the eigenvectors of the `n_vectors` smallest.
#[derive(Debug, Clone)]
pub struct GraphSpectrum {
    pub sigma: f64,
    pub eigenvalues: Vec<f64>,
    pub embedding: DMatrix<f64>,
}

impl GraphSpectrum {
    pub fn compute(points: &DMatrix<f64>, sigma: f64, n_vectors: usize) -> Result<Self> {
        let w = affinity(points, sigma)?;
        let (l, _) = laplacian(&w)?;
        let m = l.nrows();
        if n_vectors > m {
            return Err(Error::validation(format!(
                "cannot take {n_vectors} eigenvectors from {m} points"
            )));
        }
        let eig = SymmetricEigen::new(l);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .expect("finite eigenvalues")
                .then(a.cmp(&b))
        });
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut embedding = DMatrix::zeros(m, n_vectors);
        for (col, &i) in order.iter().take(n_vectors).enumerate() {
            let mut v = eig.eigenvectors.column(i).into_owned();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            embedding.set_column(col, &v);
        }
        Ok(GraphSpectrum {
            sigma,
            eigenvalues,
            embedding,
        })
    }
}

/// Ascending Laplacian eigenvalues only (no eigenvectors); `None` when
/// the kernel width leaves an isolated vertex (the graph disconnects
/// numerically at very small widths).
fn spectrum_eigenvalues(points: &DMatrix<f64>, sigma: f64) -> Result<Option<Vec<f64>>> {
    let w = affinity(points, sigma)?;
    if (0..w.nrows()).any(|i| w.row(i).sum() <= 0.0) {
        return Ok(None);
    }
    let (l, _) = laplacian(&w)?;
    let mut evs: Vec<f64> = l.symmetric_eigenvalues().iter().copied().collect();
    evs.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(Some(evs))
}

/// 60 log-spaced kernel widths spanning `[1e-2·d̄, 1e2·d̄]` where `d̄`
/// is the median pairwise distance of the points.
pub fn default_sigma_grid(points: &DMatrix<f64>, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::validation("sigma grid needs at least one point"));
    }
    let m = points.nrows();
    if m < 2 {
        return Err(Error::validation("sigma grid needs at least two points"));
    }
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let mut d2 = 0.0;
            for c in 0..points.ncols() {
                let diff = points[(i, c)] - points[(j, c)];
                d2 += diff * diff;
            }
            dists.push(d2.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let median = dists[dists.len() / 2];
    if !(median > 0.0) {
        return Err(Error::numerical(
            "degenerate point set: median pairwise distance is zero",
        ));
    }
    if count == 1 {
        return Ok(vec![median]);
    }
    let lo = (median * 1e-2).ln();
    let hi = (median * 1e2).ln();
    Ok((0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

/// Sweep the kernel width over `grid`, scoring each width by the
/// `n_target`-th eigengap: the gap after the `n_target` smallest
/// eigenvalues of the normalized Laplacian (counting the gap between
/// the 5th and 6th eigenvalue, zero-indexed, when `n_target = 6`).
/// Widths that disconnect the graph numerically score a zero gap.
/// Returns the argmax width and the full gap curve.
pub fn sigma_sweep(
    points: &DMatrix<f64>,
    n_target: usize,
    grid: &[f64],
) -> Result<(f64, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::validation("empty sigma grid"));
    }
    if grid.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::validation("sigma grid entries must be > 0"));
    }
    if n_target < 2 {
        return Err(Error::validation("eigengap target must be >= 2"));
    }
    if points.nrows() <= n_target {
        return Err(Error::validation(format!(
            "need more than {n_target} points, got {}",
            points.nrows()
        )));
    }
    let curve: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&sigma| {
            let gap = match spectrum_eigenvalues(points, sigma)? {
                Some(evs) => evs[n_target] - evs[n_target - 1],
                None => 0.0,
            };
            Ok((sigma, gap))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = curve[0];
    for &(sigma, gap) in &curve[1..] {
        if gap > best.1 {
            best = (sigma, gap);
        }
    }
    Ok((best.0, curve))
}

/// Count connected components: eigenvalues below `threshold`.
pub fn count_components(eigenvalues: &[f64], threshold: f64) -> Result<usize> {
    if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::validation("eigenvalues must be sorted ascending"));
    }
    if eigenvalues
        .iter()
        .any(|&v| !(-1e-8..=2.0 + 1e-8).contains(&v))
    {
        return Err(Error::validation(
            "eigenvalues outside [0, 2]: not a normalized Laplacian spectrum",
        ));
    }
    Ok(eigenvalues.iter().filter(|&&v| v < threshold).count())
}

#[derive(Debug, Clone)]
pub struct EmbedOptions {
    /// Row-normalize the embedding before K-means (off by default; the
    /// plain eigenvector rows are the canonical procedure here).
    pub row_normalize: bool,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            row_normalize: false,
            restarts: 20,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub labels: Vec<usize>,
    /// Per-cluster means of the input points (original reduced space).
    pub centers: Vec<DVector<f64>>,
    pub inertia: f64,
    pub converged: bool,
}

/// Embed the points with the `n_clusters` smallest-eigenvalue
/// eigenvectors and cluster the rows with seeded K-means.
pub fn spectral_embed_cluster(
    points: &DMatrix<f64>,
    sigma: f64,
    n_clusters: usize,
    seed: u64,
    opts: &EmbedOptions,
) -> Result<ClusterOutcome> {
    if n_clusters == 0 || n_clusters > points.nrows() {
        return Err(Error::validation(format!(
            "cluster count {n_clusters} outside 1..={}",
            points.nrows()
        )));
    }
    let spectrum = GraphSpectrum::compute(points, sigma, n_clusters)?;
    let mut embedding = spectrum.embedding;
    if opts.row_normalize {
        for mut row in embedding.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
    }
    let km = kmeans(&embedding, n_clusters, seed, opts.restarts, opts.max_iter)?;
    let d = points.ncols();
    let mut counts = vec![0usize; n_clusters];
    let mut centers = vec![DVector::zeros(d); n_clusters];
    for (i, &c) in km.labels.iter().enumerate() {
        counts[c] += 1;
        centers[c] += points.row(i).transpose();
    }
    for (center, &count) in centers.iter_mut().zip(&counts) {
        *center /= count as f64;
    }
    Ok(ClusterOutcome {
        labels: km.labels,
        centers,
        inertia: km.inertia,
        converged: km.converged,
    })
}

/// Qualitative class interval on the distance-from-reference axis.
/// Boundaries resolve to the lower class; the last interval is open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRange {
    pub low: f64,
    pub high: Option<f64>,
}

impl ClassRange {
    fn contains(&self, d: f64) -> bool {
        d >= self.low && self.high.is_none_or(|h| d <= h)
    }
}

/// Trained reheat classifier.
#[derive(Debug, Clone)]
pub struct ReheatClassifier {
    pub fda: FdaModel,
    pub sigma_opt: f64,
    pub n_qualitative: usize,
    /// Cluster centers in the reduced space, ordered by distance from
    /// the reference center (class 0 first).
    pub cluster_centers: Vec<DVector<f64>>,
    pub reference_center: DVector<f64>,
    pub class_ranges: Vec<ClassRange>,
    pub seed: u64,
    /// Qualitative class that each training heat class majority-lands
    /// in; the ground truth for accuracy reports.
    pub heat_assignments: Vec<(u32, usize)>,
}

/// Training knobs; the defaults match the shipped configs.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Explicit sigma grid; `None` derives [`default_sigma_grid`].
    pub sigma_grid: Option<Vec<f64>>,
    pub grid_points: usize,
    pub component_threshold: f64,
    pub embed: EmbedOptions,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            sigma_grid: None,
            grid_points: 60,
            component_threshold: COMPONENT_THRESHOLD,
            embed: EmbedOptions::default(),
            seed: 0,
        }
    }
}

/// Sweep/eigenvalue traces kept for reporting.
#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    pub gap_curve: Vec<(f64, f64)>,
    pub eigenvalues_at_opt: Vec<f64>,
    pub kmeans_inertia: f64,
    /// False when the best K-means restart hit the iteration cap; the
    /// classifier then carries the best-so-far clustering.
    pub kmeans_converged: bool,
}

/// Train the qualitative classifier from projected training blocks,
/// one `(heat_cycles, m×k block)` entry per class.
pub fn train_classifier(
    training: &[(u32, DMatrix<f64>)],
    fda: FdaModel,
    cfg: &TrainConfig,
) -> Result<(ReheatClassifier, TrainDiagnostics)> {
    let mut cycles: Vec<u32> = training.iter().map(|(c, _)| *c).collect();
    cycles.sort_unstable();
    cycles.dedup();
    if !cycles.contains(&0) {
        return Err(Error::validation("pure class (heat cycles 0) absent"));
    }
    if cycles.len() < 2 {
        return Err(Error::validation(
            "need the pure class plus at least one heated class",
        ));
    }

    // Stack the blocks, remembering each row's heat class.
    let k = training[0].1.ncols();
    let total: usize = training.iter().map(|(_, b)| b.nrows()).sum();
    let mut points = DMatrix::zeros(total, k);
    let mut row_class = Vec::with_capacity(total);
    let mut at = 0;
    for (c, block) in training {
        if block.ncols() != k {
            return Err(Error::validation("training blocks differ in column count"));
        }
        points.rows_mut(at, block.nrows()).copy_from(block);
        row_class.extend(std::iter::repeat_n(*c, block.nrows()));
        at += block.nrows();
    }

    let grid = match &cfg.sigma_grid {
        Some(g) => g.clone(),
        None => default_sigma_grid(&points, cfg.grid_points)?,
    };
    let (sigma_opt, gap_curve) = sigma_sweep(&points, cycles.len(), &grid)?;

    let spectrum = GraphSpectrum::compute(&points, sigma_opt, 0)?;
    let n_qualitative = count_components(&spectrum.eigenvalues, cfg.component_threshold)?;
    if n_qualitative < 2 {
        return Err(Error::numerical(format!(
            "found {n_qualitative} connected components; need >= 2 qualitative classes"
        )));
    }

    let outcome = spectral_embed_cluster(
        &points,
        sigma_opt,
        n_qualitative,
        derive_seed(cfg.seed, 0x636c7573),
        &cfg.embed,
    )?;

    // Reference cluster: majority home of the pure-oil rows.
    let mut pure_counts = vec![0usize; n_qualitative];
    for (i, &c) in row_class.iter().enumerate() {
        if c == 0 {
            pure_counts[outcome.labels[i]] += 1;
        }
    }
    let reference_cluster = pure_counts
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("n_qualitative >= 2");
    let reference_center = outcome.centers[reference_cluster].clone();

    // Order clusters by distance from the reference center.
    let mut by_distance: Vec<(usize, f64)> = outcome
        .centers
        .iter()
        .enumerate()
        .map(|(i, c)| (i, (c - &reference_center).norm()))
        .collect();
    by_distance.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .expect("finite distances")
            .then(a.0.cmp(&b.0))
    });

    let cluster_centers: Vec<DVector<f64>> = by_distance
        .iter()
        .map(|&(i, _)| outcome.centers[i].clone())
        .collect();
    let distances: Vec<f64> = by_distance.iter().map(|&(_, d)| d).collect();
    let class_ranges = midpoint_ranges(&distances);

    // Map each original cluster id to its rank (= qualitative class).
    let mut rank_of = vec![0usize; n_qualitative];
    for (rank, &(orig, _)) in by_distance.iter().enumerate() {
        rank_of[orig] = rank;
    }
    let mut heat_assignments = Vec::with_capacity(cycles.len());
    for &c in &cycles {
        let mut counts = vec![0usize; n_qualitative];
        for (i, &rc) in row_class.iter().enumerate() {
            if rc == c {
                counts[rank_of[outcome.labels[i]]] += 1;
            }
        }
        let class = counts
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
            .map(|(i, _)| i)
            .expect("counts non-empty");
        heat_assignments.push((c, class));
    }

    Ok((
        ReheatClassifier {
            fda,
            sigma_opt,
            n_qualitative,
            cluster_centers,
            reference_center,
            class_ranges,
            seed: cfg.seed,
            heat_assignments,
        },
        TrainDiagnostics {
            gap_curve,
            eigenvalues_at_opt: spectrum.eigenvalues,
            kmeans_inertia: outcome.inertia,
            kmeans_converged: outcome.converged,
        },
    ))
}

/// Midpoint-separated intervals between consecutive sorted distances;
/// the final interval is open-ended so the axis `[0, ∞)` is covered.
fn midpoint_ranges(sorted_distances: &[f64]) -> Vec<ClassRange> {
    let q = sorted_distances.len();
    let mut ranges = Vec::with_capacity(q);
    let mut low = 0.0;
    for i in 0..q {
        let high = if i + 1 < q {
            Some((sorted_distances[i] + sorted_distances[i + 1]) / 2.0)
        } else {
            None
        };
        ranges.push(ClassRange { low, high });
        if let Some(h) = high {
            low = h;
        }
    }
    ranges
}

/// Classify a sample from its raw-band pixel block: project, take the
/// pixel-mean center, and place its distance from the reference center
/// into the class ranges. Returns `(qualitative_class, distance)`.
pub fn classify(
    sample_pixels: &DMatrix<f64>,
    classifier: &ReheatClassifier,
) -> Result<(usize, f64)> {
    if sample_pixels.nrows() == 0 {
        return Err(Error::validation("empty sample block"));
    }
    let projected = classifier.fda.project_block(sample_pixels)?;
    let center = projected.row_mean().transpose();
    let distance = (&center - &classifier.reference_center).norm();
    let class = classifier
        .class_ranges
        .iter()
        .position(|r| r.contains(distance))
        .expect("ranges cover [0, inf)");
    Ok((class, distance))
}

/// Repeatability of repeated classifications of one sample (one entry
/// per trial). `ReSc = 1 − LS/MS`; a single observed class scores 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatabilityReport {
    pub class_counts: BTreeMap<usize, usize>,
    pub resc: f64,
    /// Accuracy statistics are filled by the evaluation harness when
    /// ground truth is available.
    pub mode_accuracy: Option<f64>,
    pub min_accuracy: Option<f64>,
    pub max_accuracy: Option<f64>,
}

pub fn repeatability(assignments: &[usize]) -> Result<RepeatabilityReport> {
    if assignments.is_empty() {
        return Err(Error::validation("repeatability needs at least one trial"));
    }
    let mut class_counts = BTreeMap::new();
    for &a in assignments {
        *class_counts.entry(a).or_insert(0usize) += 1;
    }
    let ms = *class_counts.values().max().expect("non-empty") as f64;
    let ls = if class_counts.len() == 1 {
        0.0
    } else {
        *class_counts.values().min().expect("non-empty") as f64
    };
    Ok(RepeatabilityReport {
        class_counts,
        resc: 1.0 - ls / ms,
        mode_accuracy: None,
        min_accuracy: None,
        max_accuracy: None,
    })
}

/// Max/min/mode summary of per-trial accuracies. Accuracies are exact
/// ratios, so the mode counts exact values; ties go to the larger one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyStats {
    pub max: f64,
    pub min: f64,
    pub mode: f64,
}

pub fn accuracy_stats(accuracies: &[f64]) -> Result<AccuracyStats> {
    if accuracies.is_empty() {
        return Err(Error::validation("no accuracies to summarize"));
    }
    let mut sorted = accuracies.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite accuracies"));
    let mut mode = sorted[0];
    let mut best_run = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i >= best_run {
            best_run = j - i;
            mode = sorted[i];
        }
        i = j;
    }
    Ok(AccuracyStats {
        max: sorted[sorted.len() - 1],
        min: sorted[0],
        mode,
    })
}

#[derive(Debug, Clone)]
pub struct EvaluationConfig {
    pub trials: usize,
    pub datasets: usize,
    /// Rows drawn per class per trial dataset.
    pub points_per_class: usize,
    pub seed: u64,
    pub embed: EmbedOptions,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            trials: 20,
            datasets: 5,
            points_per_class: 100,
            seed: 0,
            embed: EmbedOptions::default(),
        }
    }
}

/// One classification trial record.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub heat_accuracy: f64,
    pub qualitative_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SampleRepeatability {
    pub heat_cycles: u32,
    pub dataset_reports: Vec<RepeatabilityReport>,
    /// Raw per-trial assignments behind each dataset report.
    pub dataset_assignments: Vec<Vec<usize>>,
    pub mean_resc: f64,
    /// Sum of the per-dataset scores (the multi-dataset aggregate).
    pub sum_resc: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub trials: Vec<TrialRecord>,
    pub heat_accuracy: AccuracyStats,
    pub qualitative_accuracy: AccuracyStats,
    pub repeatability: Vec<SampleRepeatability>,
    pub mean_resc: f64,
}

/// Accuracy-and-repeatability harness over labelled raw-band blocks,
/// one `(heat_cycles, m×9 block)` entry per class.
///
/// Per trial, a seeded per-class subsample is clustered two ways at the
/// trained kernel width: into as many clusters as heat classes (heat
/// classification, majority-mapped) and into the qualitative classes
/// via each cluster center's distance range. Repeatability repeatedly
/// classifies per-class subsamples and scores the assignment counts.
pub fn evaluate_classifier(
    classifier: &ReheatClassifier,
    test: &[(u32, DMatrix<f64>)],
    cfg: &EvaluationConfig,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::validation("no test classes"));
    }
    if cfg.trials == 0 || cfg.datasets == 0 || cfg.points_per_class == 0 {
        return Err(Error::validation(
            "trials, datasets, points_per_class must be positive",
        ));
    }
    let mut classes: Vec<u32> = test.iter().map(|(c, _)| *c).collect();
    classes.sort_unstable();
    classes.dedup();
    let expected: BTreeMap<u32, usize> = classifier.heat_assignments.iter().copied().collect();
    for &c in &classes {
        if !expected.contains_key(&c) {
            return Err(Error::validation(format!(
                "heat class {c} was not part of training"
            )));
        }
    }

    let trial_records: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| evaluate_trial(classifier, test, &classes, &expected, cfg, t))
        .collect::<Result<Vec<_>>>()?;

    let heat_accuracy = accuracy_stats(
        &trial_records
            .iter()
            .map(|r| r.heat_accuracy)
            .collect::<Vec<_>>(),
    )?;
    let qualitative_accuracy = accuracy_stats(
        &trial_records
            .iter()
            .map(|r| r.qualitative_accuracy)
            .collect::<Vec<_>>(),
    )?;

    // Repeatability: per class, per dataset, classify seeded subsamples.
    let mut repeatability_reports = Vec::new();
    let mut all_resc = Vec::new();
    for (ci, &c) in classes.iter().enumerate() {
        let block = merged_class_block(test, c);
        let mut dataset_reports = Vec::with_capacity(cfg.datasets);
        let mut dataset_assignments = Vec::with_capacity(cfg.datasets);
        for d in 0..cfg.datasets {
            let mut assignments = Vec::with_capacity(cfg.trials);
            for t in 0..cfg.trials {
                let salt = 0x5245_0000_0000_0000 | (ci as u64) << 32 | (d as u64) << 16 | t as u64;
                let sub = subsample_rows(&block, cfg.points_per_class, derive_seed(cfg.seed, salt));
                let (class, _) = classify(&sub, classifier)?;
                assignments.push(class);
            }
            dataset_reports.push(repeatability(&assignments)?);
            dataset_assignments.push(assignments);
        }
        let scores: Vec<f64> = dataset_reports.iter().map(|r| r.resc).collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let sum = scores.iter().sum::<f64>();
        all_resc.extend(scores);
        repeatability_reports.push(SampleRepeatability {
            heat_cycles: c,
            dataset_reports,
            dataset_assignments,
            mean_resc: mean,
            sum_resc: sum,
        });
    }
    let mean_resc = all_resc.iter().sum::<f64>() / all_resc.len() as f64;

    Ok(EvaluationReport {
        trials: trial_records,
        heat_accuracy,
        qualitative_accuracy,
        repeatability: repeatability_reports,
        mean_resc,
    })
}

fn evaluate_trial(
    classifier: &ReheatClassifier,
    test: &[(u32, DMatrix<f64>)],
    classes: &[u32],
    expected: &BTreeMap<u32, usize>,
    cfg: &EvaluationConfig,
    trial: usize,
) -> Result<TrialRecord> {
    let k = classifier.fda.k();
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (ci, &c) in classes.iter().enumerate() {
        let block = merged_class_block(test, c);
        let salt = 0x4143_0000_0000_0000 | (ci as u64) << 32 | trial as u64;
        let sub = subsample_rows(&block, cfg.points_per_class, derive_seed(cfg.seed, salt));
        let projected = classifier.fda.project_block(&sub)?;
        for r in 0..projected.nrows() {
            rows.extend(projected.row(r).iter().copied());
            truth.push(c);
        }
    }
    let m = truth.len();
    let points = DMatrix::from_row_slice(m, k, &rows);

    // Heat-class clustering: as many clusters as heat classes, each
    // mapped to its majority class.
    let heat_outcome = spectral_embed_cluster(
        &points,
        classifier.sigma_opt,
        classes.len(),
        derive_seed(cfg.seed, 0x4845_0000_0000_0000 | trial as u64),
        &cfg.embed,
    )?;
    let heat_accuracy = majority_mapped_accuracy(&heat_outcome.labels, &truth, classes.len());

    // Qualitative clustering: the trained class count; clusters map to
    // classes through their center's distance from the reference.
    let qual_outcome = spectral_embed_cluster(
        &points,
        classifier.sigma_opt,
        classifier.n_qualitative,
        derive_seed(cfg.seed, 0x5155_0000_0000_0000 | trial as u64),
        &cfg.embed,
    )?;
    let cluster_class: Vec<usize> = qual_outcome
        .centers
        .iter()
        .map(|center| {
            let d = (center - &classifier.reference_center).norm();
            classifier
                .class_ranges
                .iter()
                .position(|r| r.contains(d))
                .expect("ranges cover [0, inf)")
        })
        .collect();
    let correct = qual_outcome
        .labels
        .iter()
        .zip(&truth)
        .filter(|(&cluster, &heat)| cluster_class[cluster] == expected[&heat])
        .count();
    let qualitative_accuracy = correct as f64 / m as f64;

    Ok(TrialRecord {
        trial,
        heat_accuracy,
        qualitative_accuracy,
    })
}

fn merged_class_block(test: &[(u32, DMatrix<f64>)], class: u32) -> DMatrix<f64> {
    let blocks: Vec<&DMatrix<f64>> = test
        .iter()
        .filter(|(c, _)| *c == class)
        .map(|(_, b)| b)
        .collect();
    let cols = blocks[0].ncols();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    out
}

fn subsample_rows(block: &DMatrix<f64>, count: usize, seed: u64) -> DMatrix<f64> {
    let take = count.min(block.nrows());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, block.nrows(), take);
    let mut out = DMatrix::zeros(take, block.ncols());
    for (r, idx) in picks.iter().enumerate() {
        out.set_row(r, &block.row(idx));
    }
    out
}

/// Accuracy after mapping every cluster to its majority truth class.
fn majority_mapped_accuracy(labels: &[usize], truth: &[u32], n_clusters: usize) -> f64 {
    let mut per_cluster: Vec<BTreeMap<u32, usize>> = vec![BTreeMap::new(); n_clusters];
    for (&l, &t) in labels.iter().zip(truth) {
        *per_cluster[l].entry(t).or_insert(0) += 1;
    }
    let correct: usize = per_cluster
        .iter()
        .map(|counts| counts.values().max().copied().unwrap_or(0))
        .sum();
    correct as f64 / labels.len() as f64
}

impl ReheatClassifier {
    pub fn to_text(&self) -> String {
        let mut out = String::from("[reheat-classifier]\n");
        out.push_str(&format!("sigma_opt={}\n", self.sigma_opt));
        out.push_str(&format!("n_qualitative={}\n", self.n_qualitative));
        out.push_str(&format!("seed={}\n", self.seed));
        let fmt_vec = |v: &DVector<f64>| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        out.push_str(&format!(
            "reference_center={}\n",
            fmt_vec(&self.reference_center)
        ));
        for (i, c) in self.cluster_centers.iter().enumerate() {
            out.push_str(&format!("center_{i}={}\n", fmt_vec(c)));
        }
        for (i, r) in self.class_ranges.iter().enumerate() {
            let high = r.high.map_or("inf".to_string(), |h| format!("{h}"));
            out.push_str(&format!("range_{i}={},{high}\n", r.low));
        }
        let assignments: Vec<String> = self
            .heat_assignments
            .iter()
            .map(|(h, q)| format!("{h}:{q}"))
            .collect();
        out.push_str(&format!("heat_assignments={}\n", assignments.join(",")));
        out.push_str("[fda]\n");
        out.push_str(&self.fda.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fda_start = text
            .find("[fda]")
            .ok_or_else(|| Error::validation("classifier file missing [fda] section"))?;
        let head = &text[..fda_start];
        let fda = FdaModel::from_text(text[fda_start + "[fda]".len()..].trim_start())?;

        let mut sigma_opt = None;
        let mut n_qualitative = None;
        let mut seed = None;
        let mut reference_center = None;
        let mut centers: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
        let mut ranges: BTreeMap<usize, ClassRange> = BTreeMap::new();
        let mut heat_assignments = Vec::new();
        let parse_vec = |s: &str| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(
                s.split(',')
                    .map(|x| {
                        x.parse::<f64>()
                            .map_err(|_| Error::validation(format!("bad number {x:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            ))
        };
        for line in head.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("bad classifier line {line:?}")))?;
            match key {
                "sigma_opt" => sigma_opt = Some(parse_plain_f64(value)?),
                "n_qualitative" => {
                    n_qualitative =
                        Some(value.parse::<usize>().map_err(|_| {
                            Error::validation(format!("bad n_qualitative {value:?}"))
                        })?)
                }
                "seed" => {
                    seed = Some(
                        value
                            .parse::<u64>()
                            .map_err(|_| Error::validation(format!("bad seed {value:?}")))?,
                    )
                }
                "reference_center" => reference_center = Some(parse_vec(value)?),
                "heat_assignments" => {
                    for pair in value.split(',').filter(|s| !s.is_empty()) {
                        let (h, q) = pair.split_once(':').ok_or_else(|| {
                            Error::validation(format!("bad heat assignment {pair:?}"))
                        })?;
                        heat_assignments.push((
                            h.parse::<u32>()
                                .map_err(|_| Error::validation(format!("bad heat class {h:?}")))?,
                            q.parse::<usize>()
                                .map_err(|_| Error::validation(format!("bad class index {q:?}")))?,
                        ));
                    }
                }
                _ if key.starts_with("center_") => {
                    let idx: usize = key["center_".len()..]
                        .parse()
                        .map_err(|_| Error::validation(format!("bad key {key:?}")))?;
                    centers.insert(idx, parse_vec(value)?);
                }
                _ if key.starts_with("range_") => {
                    let idx: usize = key["range_".len()..]
                        .parse()
                        .map_err(|_| Error::validation(format!("bad key {key:?}")))?;
                    let (low, high) = value
                        .split_once(',')
                        .ok_or_else(|| Error::validation(format!("bad range {value:?}")))?;
                    let high = if high == "inf" {
                        None
                    } else {
                        Some(parse_plain_f64(high)?)
                    };
                    ranges.insert(
                        idx,
                        ClassRange {
                            low: parse_plain_f64(low)?,
                            high,
                        },
                    );
                }
                other => {
                    return Err(Error::validation(format!(
                        "unknown classifier key {other:?}"
                    )))
                }
            }
        }
        let (sigma_opt, n_qualitative, seed, reference_center) =
            match (sigma_opt, n_qualitative, seed, reference_center) {
                (Some(s), Some(n), Some(sd), Some(r)) => (s, n, sd, r),
                _ => return Err(Error::validation("classifier file missing required keys")),
            };
        if centers.len() != n_qualitative || ranges.len() != n_qualitative {
            return Err(Error::validation(
                "classifier file centers/ranges do not match n_qualitative",
            ));
        }
        Ok(ReheatClassifier {
            fda,
            sigma_opt,
            n_qualitative,
            cluster_centers: centers.into_values().collect(),
            reference_center,
            class_ranges: ranges.into_values().collect(),
            seed,
            heat_assignments,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_plain_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::validation(format!("bad number {s:?}")))
}
