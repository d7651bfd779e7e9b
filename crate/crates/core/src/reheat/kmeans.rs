//! Seeded K-means (Lloyd's algorithm) with restarts.
//!
//! Each restart draws its initial centers as distinct data rows from a
//! seed-derived stream; the best within-cluster sum of squares wins,
//! ties broken by restart index, so the outcome is a pure function of
//! `(data, k, seed)`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cube::derive_seed;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// k×d matrix of cluster centers in the clustered space.
    pub centers: DMatrix<f64>,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    pub converged: bool,
}

pub fn kmeans(
    data: &DMatrix<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
) -> Result<KMeansResult> {
    let m = data.nrows();
    if k == 0 {
        return Err(Error::validation("k must be positive"));
    }
    if m < k {
        return Err(Error::validation(format!(
            "cannot form {k} clusters from {m} points"
        )));
    }
    if restarts == 0 {
        return Err(Error::validation("need at least one restart"));
    }

    let outcomes: Vec<Option<KMeansResult>> = (0..restarts)
        .into_par_iter()
        .map(|r| run_once(data, k, derive_seed(seed, r as u64), max_iter))
        .collect();

    let best = outcomes
        .into_iter()
        .flatten()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.inertia
                .partial_cmp(&b.inertia)
                .expect("finite inertia")
                .then(ia.cmp(ib))
        })
        .map(|(_, r)| r);
    best.ok_or_else(|| Error::numerical("k-means failed: every restart produced an empty cluster"))
}

/// One Lloyd run; `None` when a cluster empties out.
fn run_once(data: &DMatrix<f64>, k: usize, seed: u64, max_iter: usize) -> Option<KMeansResult> {
    let m = data.nrows();
    let d = data.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, m, k);
    let mut centers = DMatrix::zeros(k, d);
    for (c, idx) in picks.iter().enumerate() {
        centers.set_row(c, &data.row(idx));
    }

    let mut labels = vec![usize::MAX; m];
    let mut converged = false;
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..m {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let mut dist = 0.0;
                for j in 0..d {
                    let diff = data[(i, j)] - centers[(c, j)];
                    dist += diff * diff;
                }
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
        let mut counts = vec![0usize; k];
        let mut sums: DMatrix<f64> = DMatrix::zeros(k, d);
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for j in 0..d {
                sums[(c, j)] += data[(i, j)];
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..k {
            for j in 0..d {
                centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
            }
        }
    }

    let mut inertia = 0.0;
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..d {
            let diff = data[(i, j)] - centers[(c, j)];
            inertia += diff * diff;
        }
    }
    Some(KMeansResult {
        labels,
        centers,
        inertia,
        converged,
    })
}
