//! Fisher discriminant analysis: scatter matrices, the generalized
//! eigenproblem, and projection into the reduced space.
//!
//! The generalized problem `S_b v = λ S_w v` is solved by Cholesky
//! whitening: `S_w` is nudged to `S_w + εI` with
//! `ε = 1e-8·trace(S_w)/n`, factored as `L Lᵀ`, and the ordinary
//! symmetric problem `L⁻¹ S_b L⁻ᵀ u = λ u` is solved; generalized
//! eigenvectors are recovered as `v = L⁻ᵀ u`, unit-normalized, with the
//! first nonzero component positive so repeated solves are identical.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::cube::{atomic_write, ClassLabel};
use crate::error::{Error, Result};
use crate::preprocess::DataMatrix;

/// Relative ridge added to `S_w` before factorization.
pub const SW_RIDGE: f64 = 1e-8;

/// Eigenvalues below this fraction of the largest are treated as zero
/// when accounting retained variance.
pub const EIGENVALUE_FLOOR: f64 = 1e-10;

/// Within- and between-class scatter with the per-class means behind them.
#[derive(Debug, Clone)]
pub struct ScatterPair {
    pub within: DMatrix<f64>,
    pub between: DMatrix<f64>,
    pub class_means: Vec<(ClassLabel, DVector<f64>)>,
    pub grand_mean: DVector<f64>,
}

/// Compute class means, the grand mean, and both scatter matrices.
///
/// `S_w` sums the outer products of centered rows per class; `S_b` sums
/// the outer products of (class mean − grand mean) over classes,
/// unweighted by class size.
pub fn compute_scatter(data: &DataMatrix) -> Result<ScatterPair> {
    let classes = data.class_order();
    if classes.len() < 2 {
        return Err(Error::validation(format!(
            "scatter needs >= 2 classes, got {}",
            classes.len()
        )));
    }
    let n = data.ncols();
    let values = data.values();

    let per_class: Vec<(ClassLabel, DVector<f64>, DMatrix<f64>)> = classes
        .par_iter()
        .map(|&label| {
            let rows = data.class_rows(label);
            if rows.len() < 2 {
                return Err(Error::validation(format!(
                    "class {label} has {} rows, need >= 2",
                    rows.len()
                )));
            }
            let mut mean = DVector::zeros(n);
            for &r in &rows {
                mean += values.row(r).transpose();
            }
            mean /= rows.len() as f64;
            let mut cov = DMatrix::zeros(n, n);
            for &r in &rows {
                let d = values.row(r).transpose() - &mean;
                cov.syger(1.0, &d, &d, 1.0);
            }
            cov.fill_upper_triangle_with_lower_triangle();
            Ok((label, mean, cov))
        })
        .collect::<Result<Vec<_>>>()?;

    let grand_mean = values.row_mean().transpose();
    let mut within = DMatrix::zeros(n, n);
    let mut between = DMatrix::zeros(n, n);
    let mut class_means = Vec::with_capacity(per_class.len());
    for (label, mean, cov) in per_class {
        within += &cov;
        let d = &mean - &grand_mean;
        between.syger(1.0, &d, &d, 1.0);
        class_means.push((label, mean));
    }
    between.fill_upper_triangle_with_lower_triangle();
    Ok(ScatterPair {
        within,
        between,
        class_means,
        grand_mean,
    })
}

/// Trained projection: the discriminant basis and its eigenvalue record.
#[derive(Debug, Clone, PartialEq)]
pub struct FdaModel {
    projection: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    k: usize,
    retained_variance_fraction: f64,
    class_order: Vec<ClassLabel>,
}

impl FdaModel {
    /// Projection matrix W (n×k), columns ordered by descending eigenvalue.
    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    /// All generalized eigenvalues, descending (small ones zeroed).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn retained_variance_fraction(&self) -> f64 {
        self.retained_variance_fraction
    }

    pub fn class_order(&self) -> &[ClassLabel] {
        &self.class_order
    }

    /// Project a bare pixel-spectra block (no labels).
    pub fn project_block(&self, block: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if block.ncols() != self.projection.nrows() {
            return Err(Error::validation(format!(
                "block has {} columns, model expects {}",
                block.ncols(),
                self.projection.nrows()
            )));
        }
        Ok(block * &self.projection)
    }

    /// Text form: a header line with `k`, `n`, and the retained-variance
    /// fraction, the eigenvalue line, then one row of W per input band.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let classes: Vec<String> = self.class_order.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!(
            "k={},n={},retained_variance={},classes={}\n",
            self.k,
            self.projection.nrows(),
            self.retained_variance_fraction,
            classes.join(";")
        ));
        let evs: Vec<String> = self.eigenvalues.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!("eigenvalues={}\n", evs.join(",")));
        for r in 0..self.projection.nrows() {
            let row: Vec<String> = self
                .projection
                .row(r)
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::validation("empty model text"))?;
        let mut k = None;
        let mut n = None;
        let mut retained = None;
        let mut class_order = Vec::new();
        for field in header.split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("bad header field {field:?}")))?;
            match key {
                "k" => k = Some(parse_usize(value)?),
                "n" => n = Some(parse_usize(value)?),
                "retained_variance" => retained = Some(parse_f64(value)?),
                "classes" => {
                    for label in value.split(';').filter(|s| !s.is_empty()) {
                        class_order.push(label.parse::<ClassLabel>()?);
                    }
                }
                other => return Err(Error::validation(format!("unknown header key {other:?}"))),
            }
        }
        let (k, n, retained) = match (k, n, retained) {
            (Some(k), Some(n), Some(r)) => (k, n, r),
            _ => {
                return Err(Error::validation(
                    "model header missing k/n/retained_variance",
                ))
            }
        };
        let ev_line = lines
            .next()
            .ok_or_else(|| Error::validation("model text missing eigenvalue line"))?;
        let ev_values = ev_line
            .strip_prefix("eigenvalues=")
            .ok_or_else(|| Error::validation("second line must be eigenvalues=..."))?;
        let eigenvalues = ev_values
            .split(',')
            .map(parse_f64)
            .collect::<Result<Vec<f64>>>()?;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::validation("model text missing projection rows"))?;
            let row = line
                .split(',')
                .map(parse_f64)
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != k {
                return Err(Error::validation(format!(
                    "projection row has {} values, expected k={k}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        let projection = DMatrix::from_fn(n, k, |r, c| rows[r][c]);
        Ok(FdaModel {
            projection,
            eigenvalues,
            k,
            retained_variance_fraction: retained,
            class_order,
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

fn parse_usize(s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::validation(format!("bad integer {s:?}")))
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::validation(format!("bad number {s:?}")))
}

/// Solve the generalized eigenproblem and pick the projection rank.
///
/// `k` is the smallest count of leading eigenvalues whose share of the
/// positive spectrum reaches `variance_floor`, unless `k_override` pins
/// it explicitly.
pub fn solve_fda(
    scatter: &ScatterPair,
    variance_floor: f64,
    k_override: Option<usize>,
) -> Result<FdaModel> {
    if !(variance_floor > 0.0 && variance_floor <= 1.0) {
        return Err(Error::validation(format!(
            "variance floor {variance_floor} outside (0, 1]"
        )));
    }
    let n = scatter.within.nrows();
    if scatter.within.ncols() != n || scatter.between.nrows() != n || scatter.between.ncols() != n {
        return Err(Error::validation(
            "scatter matrices must be square and same size",
        ));
    }
    if let Some(k) = k_override {
        if k == 0 || k > n {
            return Err(Error::validation(format!("k override {k} outside 1..={n}")));
        }
    }

    let ridge = SW_RIDGE * scatter.within.trace() / n as f64;
    let mut sw = scatter.within.clone();
    for i in 0..n {
        sw[(i, i)] += ridge;
    }
    let chol = sw.clone().cholesky().ok_or_else(|| {
        Error::numerical("within-class scatter is singular beyond regularization rescue")
    })?;
    let l = chol.l();

    // M = L^-1 S_b L^-T, symmetric with the same eigenvalues as the
    // generalized pencil.
    let c = l
        .solve_lower_triangular(&scatter.between)
        .ok_or_else(|| Error::numerical("forward substitution failed"))?;
    let m = l
        .solve_lower_triangular(&c.transpose())
        .ok_or_else(|| Error::numerical("forward substitution failed"))?
        .transpose();
    let m = (&m + m.transpose()) * 0.5;

    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("symmetric eigenvalues are finite")
            .then(a.cmp(&b))
    });

    let lambda_max = eig.eigenvalues[order[0]];
    if !(lambda_max > 0.0) {
        return Err(Error::numerical(
            "no discriminative direction: between-class scatter has no positive eigenvalue",
        ));
    }
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| {
            let v = eig.eigenvalues[i];
            if v < EIGENVALUE_FLOOR * lambda_max {
                0.0
            } else {
                v
            }
        })
        .collect();

    let total: f64 = eigenvalues.iter().filter(|&&v| v > 0.0).sum();
    let k = match k_override {
        Some(k) => k,
        None => {
            let mut cum = 0.0;
            let mut k = n;
            for (i, &v) in eigenvalues.iter().enumerate() {
                cum += v.max(0.0);
                if cum / total >= variance_floor {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    let retained: f64 = eigenvalues[..k].iter().filter(|&&v| v > 0.0).sum::<f64>() / total;

    // Back-transform, normalize, and fix signs of the retained vectors.
    let lt = l.transpose();
    let mut projection = DMatrix::zeros(n, k);
    for (col, &i) in order.iter().take(k).enumerate() {
        let u = eig.eigenvectors.column(i).into_owned();
        let mut v = lt
            .solve_upper_triangular(&u)
            .ok_or_else(|| Error::numerical("back substitution failed"))?;
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::numerical("zero generalized eigenvector"));
        }
        v /= norm;
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v = -v;
            }
        }
        projection.set_column(col, &v);
    }

    Ok(FdaModel {
        projection,
        eigenvalues,
        k,
        retained_variance_fraction: retained,
        class_order: scatter.class_means.iter().map(|(l, _)| *l).collect(),
    })
}

/// Project a labelled data matrix: `Y = X W`, labels carried through.
pub fn project(data: &DataMatrix, model: &FdaModel) -> Result<DataMatrix> {
    let projected = model.project_block(data.values())?;
    DataMatrix::new(projected, data.labels().to_vec())
}
