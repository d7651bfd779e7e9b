//! Adulteration-level estimation.
//!
//! Each class of projected pixel spectra is modelled as a multivariate
//! Gaussian; the Bhattacharyya distance of every class against the
//! pure-oil reference, averaged over replicates and normalized by the
//! largest class distance, is calibrated against the palm-oil volume
//! fraction with a quadratic through the origin, `Y = aX² + bX`.
//! Estimation inverts the quadratic on a fresh sample's normalized
//! distance.

use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cube::{atomic_write, SpectralCube};
use crate::error::{Error, Result};
use crate::fda::FdaModel;
use crate::preprocess::{extract_roi, Roi};

/// Gaussian fit of one class in the reduced space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassModel {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    sample_count: usize,
}

impl GaussianClassModel {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn from_parts(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        sample_count: usize,
    ) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::validation("covariance shape does not match mean"));
        }
        Ok(GaussianClassModel {
            mean,
            covariance,
            sample_count,
        })
    }
}

/// Sample mean and covariance (divisor `m − 1`) of a block of rows,
/// ridged by `εI` with `ε = 1e-10·trace/k` so the covariance is always
/// invertible (absolute `1e-10` when the block has zero spread).
pub fn fit_gaussian(rows: &DMatrix<f64>) -> Result<GaussianClassModel> {
    let m = rows.nrows();
    let k = rows.ncols();
    if m < k + 1 {
        return Err(Error::validation(format!(
            "gaussian fit needs at least k+1={} rows, got {m}",
            k + 1
        )));
    }
    let mean = rows.row_mean().transpose();
    let mut cov = DMatrix::zeros(k, k);
    for r in 0..m {
        let d = rows.row(r).transpose() - &mean;
        cov.syger(1.0, &d, &d, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov /= (m - 1) as f64;
    let trace = cov.trace();
    let eps = if trace > 0.0 {
        1e-10 * trace / k as f64
    } else {
        1e-10
    };
    for i in 0..k {
        cov[(i, i)] += eps;
    }
    if Cholesky::new(cov.clone()).is_none() {
        return Err(Error::numerical(
            "class covariance is singular after regularization",
        ));
    }
    GaussianClassModel::from_parts(mean, cov, m)
}

/// Bhattacharyya distance between two Gaussians:
/// `B = ⅛ Δμᵀ C⁻¹ Δμ + ½ ln(det C / √(det C_a · det C_b))` with
/// `C = (C_a + C_b)/2`.
pub fn bhattacharyya(a: &GaussianClassModel, b: &GaussianClassModel) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let pooled = (&a.covariance + &b.covariance) * 0.5;
    let chol_pooled = Cholesky::new(pooled)
        .ok_or_else(|| Error::numerical("pooled covariance not positive definite"))?;
    let chol_a = Cholesky::new(a.covariance.clone())
        .ok_or_else(|| Error::numerical("first covariance not positive definite"))?;
    let chol_b = Cholesky::new(b.covariance.clone())
        .ok_or_else(|| Error::numerical("second covariance not positive definite"))?;

    let delta = &a.mean - &b.mean;
    let solved = chol_pooled.solve(&delta);
    let mahalanobis = delta.dot(&solved) / 8.0;

    let log_det = |c: &Cholesky<f64, nalgebra::Dyn>| {
        2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    };
    let log_term = 0.5 * (log_det(&chol_pooled) - 0.5 * (log_det(&chol_a) + log_det(&chol_b)));
    Ok((mahalanobis + log_term).max(0.0))
}

/// Calibrated adulteration model.
#[derive(Debug, Clone)]
pub struct AdulterationModel {
    pub coeff_a: f64,
    pub coeff_b: f64,
    /// Largest raw training-class mean distance; normalized training
    /// distances lie in [0, 1].
    pub normalizer: f64,
    pub r_squared: f64,
    pub reference: GaussianClassModel,
    pub fda: FdaModel,
}

/// One row of the calibration curve export.
#[derive(Debug, Clone)]
pub struct CalibrationPoint {
    pub fraction: f64,
    pub mean_normalized: f64,
    pub replicate_normalized: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Rows subsampled from the pooled pure-oil class for the reference
    /// Gaussian.
    pub reference_subsample: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            reference_subsample: 900,
            seed: 0,
        }
    }
}

/// Fit the calibration from projected replicate blocks.
///
/// `training` holds one entry per replicate, `(fraction, m×k block)`;
/// fraction 0 must be present and at least three distinct fractions are
/// required.
pub fn fit_model(
    training: &[(f64, DMatrix<f64>)],
    fda: FdaModel,
    opts: &FitOptions,
) -> Result<(AdulterationModel, Vec<CalibrationPoint>)> {
    let mut fractions: Vec<f64> = Vec::new();
    for (f, _) in training {
        if !fractions.contains(f) {
            fractions.push(*f);
        }
    }
    fractions.sort_by(|a, b| a.partial_cmp(b).expect("finite fractions"));
    if fractions.len() < 3 {
        return Err(Error::validation(format!(
            "need >= 3 distinct fractions, got {}",
            fractions.len()
        )));
    }
    if !fractions.contains(&0.0) {
        return Err(Error::validation("missing reference class (fraction 0)"));
    }

    // Pool the pure-oil rows and subsample the reference set.
    let zero_blocks: Vec<&DMatrix<f64>> = training
        .iter()
        .filter(|(f, _)| *f == 0.0)
        .map(|(_, b)| b)
        .collect();
    let k = zero_blocks[0].ncols();
    let pooled_rows: usize = zero_blocks.iter().map(|b| b.nrows()).sum();
    let mut pooled = DMatrix::zeros(pooled_rows, k);
    let mut at = 0;
    for b in &zero_blocks {
        pooled.rows_mut(at, b.nrows()).copy_from(*b);
        at += b.nrows();
    }
    let take = opts.reference_subsample.min(pooled_rows);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let picks = rand::seq::index::sample(&mut rng, pooled_rows, take);
    let mut reference_rows = DMatrix::zeros(take, k);
    for (r, idx) in picks.iter().enumerate() {
        reference_rows.set_row(r, &pooled.row(idx));
    }
    let reference = fit_gaussian(&reference_rows)?;

    // Raw distance of every replicate against the reference.
    let raw: Vec<(f64, f64)> = training
        .par_iter()
        .map(|(f, block)| {
            let g = fit_gaussian(block)?;
            Ok((*f, bhattacharyya(&g, &reference)?))
        })
        .collect::<Result<Vec<_>>>()?;

    // Mean over replicates per fraction, then normalize by the maximum.
    let mut per_fraction: Vec<(f64, Vec<f64>)> = fractions
        .iter()
        .map(|&f| {
            (
                f,
                raw.iter()
                    .filter(|(x, _)| *x == f)
                    .map(|(_, b)| *b)
                    .collect(),
            )
        })
        .collect();
    let normalizer = per_fraction
        .iter()
        .map(|(_, b)| b.iter().sum::<f64>() / b.len() as f64)
        .fold(f64::MIN, f64::max);
    if !(normalizer > 0.0) {
        return Err(Error::numerical(
            "degenerate calibration: largest class distance is not positive",
        ));
    }
    for (_, reps) in &mut per_fraction {
        for b in reps.iter_mut() {
            *b /= normalizer;
        }
    }
    let curve: Vec<CalibrationPoint> = per_fraction
        .iter()
        .map(|(f, reps)| CalibrationPoint {
            fraction: *f,
            mean_normalized: reps.iter().sum::<f64>() / reps.len() as f64,
            replicate_normalized: reps.clone(),
        })
        .collect();

    let points: Vec<(f64, f64)> = curve
        .iter()
        .map(|p| (p.fraction, p.mean_normalized))
        .collect();
    let (coeff_a, coeff_b, r_squared) = fit_quadratic_through_origin(&points)?;

    Ok((
        AdulterationModel {
            coeff_a,
            coeff_b,
            normalizer,
            r_squared,
            reference,
            fda,
        },
        curve,
    ))
}

/// Least-squares fit of `y = a x² + b x` (no intercept) with the
/// coefficient of determination against the mean.
pub fn fit_quadratic_through_origin(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::validation("quadratic fit needs >= 2 points"));
    }
    let (mut s4, mut s3, mut s2, mut s2y, mut s1y) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let x2 = x * x;
        s4 += x2 * x2;
        s3 += x2 * x;
        s2 += x2;
        s2y += x2 * y;
        s1y += x * y;
    }
    let det = s4 * s2 - s3 * s3;
    if det.abs() < 1e-30 {
        return Err(Error::numerical("degenerate abscissae in quadratic fit"));
    }
    let a = (s2y * s2 - s3 * s1y) / det;
    let b = (s4 * s1y - s3 * s2y) / det;

    let mean_y = points.iter().map(|(_, y)| y).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| (y - (a * x * x + b * x)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res < 1e-30 {
        1.0
    } else {
        0.0
    };
    Ok((a, b, r_squared))
}

/// Forward curve `Y(x) = a x² + b x`.
pub fn predict_distance(a: f64, b: f64, x: f64) -> f64 {
    a * x * x + b * x
}

/// Unique non-negative root of `a x² + b x = y`; falls back to the
/// linear solution when `|a|` is negligible.
pub fn invert_quadratic(a: f64, b: f64, y: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(Error::numerical(format!(
            "negative normalized distance {y}"
        )));
    }
    if a.abs() < 1e-12 {
        if b.abs() < 1e-30 {
            return Err(Error::numerical("degenerate calibration curve (a = b = 0)"));
        }
        return Ok(y / b);
    }
    let disc = b * b + 4.0 * a * y;
    if disc < 0.0 {
        return Err(Error::numerical(
            "out of calibration range: no real root for the measured distance",
        ));
    }
    Ok((-b + disc.sqrt()) / (2.0 * a))
}

/// Estimate the adulteration fraction of a preprocessed sample cube.
pub fn estimate(sample: &SpectralCube, model: &AdulterationModel, roi: &Roi) -> Result<f64> {
    let block = extract_roi(sample, roi)?;
    let projected = model.fda.project_block(&block)?;
    let gaussian = fit_gaussian(&projected)?;
    let y = bhattacharyya(&gaussian, &model.reference)? / model.normalizer;
    let x = invert_quadratic(model.coeff_a, model.coeff_b, y)?;
    Ok(x.clamp(0.0, 1.0))
}

/// Mean squared error between predictions and ground truth.
pub fn mse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::validation(format!(
            "mse needs equal non-empty lists, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    Ok(predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / predicted.len() as f64)
}

impl AdulterationModel {
    pub fn to_text(&self) -> String {
        let mut out = String::from("[adulteration-model]\n");
        out.push_str(&format!("coeff_a={}\n", self.coeff_a));
        out.push_str(&format!("coeff_b={}\n", self.coeff_b));
        out.push_str(&format!("normalizer={}\n", self.normalizer));
        out.push_str(&format!("r_squared={}\n", self.r_squared));
        out.push_str(&format!(
            "reference_sample_count={}\n",
            self.reference.sample_count()
        ));
        let mean: Vec<String> = self
            .reference
            .mean()
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&format!("reference_mean={}\n", mean.join(",")));
        let cov_rows: Vec<String> = (0..self.reference.dim())
            .map(|r| {
                self.reference
                    .covariance()
                    .row(r)
                    .iter()
                    .map(|v| format!("{v}"))
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect();
        out.push_str(&format!("reference_cov={}\n", cov_rows.join(";")));
        out.push_str("[fda]\n");
        out.push_str(&self.fda.to_text());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fda_start = text
            .find("[fda]")
            .ok_or_else(|| Error::validation("model file missing [fda] section"))?;
        let head = &text[..fda_start];
        let fda_text = text[fda_start + "[fda]".len()..].trim_start();
        let fda = FdaModel::from_text(fda_text)?;

        let mut coeff_a = None;
        let mut coeff_b = None;
        let mut normalizer = None;
        let mut r_squared = None;
        let mut count = None;
        let mut mean = None;
        let mut cov = None;
        for line in head.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("bad model line {line:?}")))?;
            match key {
                "coeff_a" => coeff_a = Some(parse_f64(value)?),
                "coeff_b" => coeff_b = Some(parse_f64(value)?),
                "normalizer" => normalizer = Some(parse_f64(value)?),
                "r_squared" => r_squared = Some(parse_f64(value)?),
                "reference_sample_count" => {
                    count =
                        Some(value.parse::<usize>().map_err(|_| {
                            Error::validation(format!("bad sample count {value:?}"))
                        })?)
                }
                "reference_mean" => {
                    mean = Some(DVector::from_vec(
                        value
                            .split(',')
                            .map(parse_f64)
                            .collect::<Result<Vec<_>>>()?,
                    ))
                }
                "reference_cov" => {
                    let rows: Vec<Vec<f64>> = value
                        .split(';')
                        .map(|row| row.split(',').map(parse_f64).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?;
                    let k = rows.len();
                    if rows.iter().any(|r| r.len() != k) {
                        return Err(Error::validation("reference_cov is not square"));
                    }
                    cov = Some(DMatrix::from_fn(k, k, |r, c| rows[r][c]));
                }
                other => return Err(Error::validation(format!("unknown model key {other:?}"))),
            }
        }
        let (coeff_a, coeff_b, normalizer, r_squared, count, mean, cov) =
            match (coeff_a, coeff_b, normalizer, r_squared, count, mean, cov) {
                (Some(a), Some(b), Some(n), Some(r), Some(c), Some(m), Some(v)) => {
                    (a, b, n, r, c, m, v)
                }
                _ => return Err(Error::validation("model file missing required keys")),
            };
        Ok(AdulterationModel {
            coeff_a,
            coeff_b,
            normalizer,
            r_squared,
            reference: GaussianClassModel::from_parts(mean, cov, count)?,
            fda,
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

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::validation(format!("bad number {s:?}")))
}
