//! Image preprocessing and data-matrix assembly.
//!
//! Dark-current removal subtracts the paired dark frame pixelwise and
//! clamps at zero (negative transmittance is unphysical). Smoothing is
//! a windowed moving average with edge replication; a median variant is
//! available where a nonlinear filter is preferred. ROI extraction
//! turns a cube window into a block of pixel spectra (one row per
//! pixel, one column per band), and blocks stack into a labelled
//! [`DataMatrix`].
//!
//! Window anchoring: an even window of side `n` has no center pixel, so
//! the window covers offsets `-(n/2) ..= n-1-(n/2)` in each dimension
//! (for `n = 30`: 15 above/left, 14 below/right of the target pixel).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::cube::{atomic_write, BandImage, ClassLabel, SpectralCube, BAND_COUNT};
use crate::error::{Error, Result};

/// Square region of interest, given by its top-left corner and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

impl Roi {
    pub const DEFAULT_SIDE: usize = 30;

    pub fn new(x: usize, y: usize, side: usize) -> Self {
        Roi { x, y, side }
    }

    /// The image-centered ROI of the given side.
    pub fn centered(width: usize, height: usize, side: usize) -> Result<Self> {
        if side == 0 || side > width || side > height {
            return Err(Error::validation(format!(
                "ROI side {side} does not fit a {width}x{height} image"
            )));
        }
        Ok(Roi {
            x: (width - side) / 2,
            y: (height - side) / 2,
            side,
        })
    }

    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        if self.side == 0 {
            return Err(Error::validation("ROI side must be positive"));
        }
        if self.x + self.side > width || self.y + self.side > height {
            return Err(Error::validation(format!(
                "ROI {}x{} at ({}, {}) exceeds {}x{} image bounds",
                self.side, self.side, self.x, self.y, width, height
            )));
        }
        Ok(())
    }
}

/// Smoothing filter choice; the moving average is the canonical filter
/// and the median is the selectable nonlinear variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothKind {
    MovingAverage,
    Median,
}

/// Subtract the dark frame pixelwise, clamping at zero.
pub fn subtract_dark(raw: &SpectralCube, dark: &SpectralCube) -> Result<SpectralCube> {
    if raw.width() != dark.width() || raw.height() != dark.height() {
        return Err(Error::validation(format!(
            "raw {}x{} and dark {}x{} dimensions differ",
            raw.width(),
            raw.height(),
            dark.width(),
            dark.height()
        )));
    }
    if raw.bit_depth() != dark.bit_depth() {
        return Err(Error::validation("raw and dark bit depths differ"));
    }
    let bands = raw
        .bands()
        .iter()
        .zip(dark.bands())
        .map(|(r, d)| {
            let values = r
                .values()
                .iter()
                .zip(d.values())
                .map(|(&s, &k)| s.saturating_sub(k))
                .collect();
            BandImage::new(r.width(), r.height(), r.bit_depth(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralCube::new(
        raw.sample_id(),
        raw.label(),
        raw.band_specs().to_vec(),
        bands,
    )
}

/// Moving-average smoothing of every band (the canonical filter).
pub fn smooth(cube: &SpectralCube, window: usize) -> Result<SpectralCube> {
    smooth_with(cube, window, SmoothKind::MovingAverage)
}

/// Smoothing with an explicit filter choice.
pub fn smooth_with(cube: &SpectralCube, window: usize, kind: SmoothKind) -> Result<SpectralCube> {
    if window == 0 {
        return Err(Error::validation("window must be positive"));
    }
    if window > cube.width() || window > cube.height() {
        return Err(Error::validation(format!(
            "window {window} larger than {}x{} image",
            cube.width(),
            cube.height()
        )));
    }
    let bands = cube
        .bands()
        .iter()
        .map(|band| match kind {
            SmoothKind::MovingAverage => box_filter(band, window),
            SmoothKind::Median => median_filter(band, window),
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralCube::new(
        cube.sample_id(),
        cube.label(),
        cube.band_specs().to_vec(),
        bands,
    )
}

/// Window offset range for side `n`: `-(n/2) ..= n-1-(n/2)`.
fn window_offsets(window: usize) -> (isize, isize) {
    let lo = (window / 2) as isize;
    let hi = window as isize - 1 - lo;
    (-lo, hi)
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Box filter via separable row/column integer sums; with replicated
/// edges this equals the naive windowed mean of the edge-padded image.
fn box_filter(band: &BandImage, window: usize) -> Result<BandImage> {
    let (w, h) = (band.width(), band.height());
    let (lo, hi) = window_offsets(window);
    // Row pass: sum over the horizontal window with clamped columns.
    let mut row_sums = vec![0u64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0u64;
            for dx in lo..=hi {
                acc += band.get(clamp_index(x as isize + dx, w), y) as u64;
            }
            row_sums[y * w + x] = acc;
        }
    }
    // Column pass over the row sums with clamped rows.
    let count = (window * window) as f64;
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0u64;
            for dy in lo..=hi {
                acc += row_sums[clamp_index(y as isize + dy, h) * w + x];
            }
            values.push((acc as f64 / count).round() as u16);
        }
    }
    BandImage::new(w, h, band.bit_depth(), values)
}

fn median_filter(band: &BandImage, window: usize) -> Result<BandImage> {
    let (w, h) = (band.width(), band.height());
    let (lo, hi) = window_offsets(window);
    let mut values = Vec::with_capacity(w * h);
    let mut neighborhood = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            neighborhood.clear();
            for dy in lo..=hi {
                for dx in lo..=hi {
                    neighborhood.push(band.get(
                        clamp_index(x as isize + dx, w),
                        clamp_index(y as isize + dy, h),
                    ));
                }
            }
            neighborhood.sort_unstable();
            let n = neighborhood.len();
            let med = if n % 2 == 1 {
                neighborhood[n / 2]
            } else {
                // Even window: round the midpoint of the two central values.
                let a = neighborhood[n / 2 - 1] as f64;
                let b = neighborhood[n / 2] as f64;
                ((a + b) / 2.0).round() as u16
            };
            values.push(med);
        }
    }
    BandImage::new(w, h, band.bit_depth(), values)
}

/// Extract the ROI as a block of pixel spectra: `side²` rows in
/// row-major ROI order, one column per band.
pub fn extract_roi(cube: &SpectralCube, roi: &Roi) -> Result<DMatrix<f64>> {
    roi.check_bounds(cube.width(), cube.height())?;
    let rows = roi.side * roi.side;
    let mut out = DMatrix::zeros(rows, BAND_COUNT);
    for ry in 0..roi.side {
        for rx in 0..roi.side {
            let spectrum = cube.spectrum_at(roi.x + rx, roi.y + ry);
            let r = ry * roi.side + rx;
            for (c, v) in spectrum.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
    }
    Ok(out)
}

/// Uniform-interval subsampling of an ROI block: keep pixels on a
/// `stride`-spaced grid in both ROI dimensions. `jitter_seed` shifts the
/// grid origin deterministically within the stride cell.
pub fn stride_subsample(
    block: &DMatrix<f64>,
    side: usize,
    stride: usize,
    jitter_seed: Option<u64>,
) -> Result<DMatrix<f64>> {
    if block.nrows() != side * side {
        return Err(Error::validation(format!(
            "block has {} rows, expected side²={}",
            block.nrows(),
            side * side
        )));
    }
    if stride == 0 || stride > side {
        return Err(Error::validation(format!(
            "stride {stride} outside 1..=side ({side})"
        )));
    }
    let (ox, oy) = match jitter_seed {
        Some(seed) => {
            let j = crate::cube::derive_seed(seed, 0x6a69_7474);
            (
                (j % stride as u64) as usize,
                ((j >> 16) % stride as u64) as usize,
            )
        }
        None => (0, 0),
    };
    let mut keep = Vec::new();
    let mut y = oy;
    while y < side {
        let mut x = ox;
        while x < side {
            keep.push(y * side + x);
            x += stride;
        }
        y += stride;
    }
    let mut out = DMatrix::zeros(keep.len(), block.ncols());
    for (r, &idx) in keep.iter().enumerate() {
        out.set_row(r, &block.row(idx));
    }
    Ok(out)
}

/// Rescale a block of raw intensities from the given bit depth to the
/// 8-bit range used by the original data-matrix convention.
pub fn rescale_to_8bit(block: &DMatrix<f64>, bit_depth: u8) -> DMatrix<f64> {
    let max = crate::cube::max_value(bit_depth) as f64;
    block.map(|v| v * 255.0 / max)
}

/// Per-band mean spectrum of a block.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSignature {
    pub mean: Vec<f64>,
    pub wavelengths_nm: Vec<f64>,
}

/// Column means of a pixel-spectra block, tagged with wavelengths.
pub fn mean_signature(block: &DMatrix<f64>, wavelengths_nm: &[f64]) -> Result<SpectralSignature> {
    if block.nrows() == 0 {
        return Err(Error::validation("mean signature of an empty block"));
    }
    if wavelengths_nm.len() != block.ncols() {
        return Err(Error::validation(format!(
            "{} wavelengths for {} columns",
            wavelengths_nm.len(),
            block.ncols()
        )));
    }
    let mean = block.row_mean().transpose().iter().copied().collect();
    Ok(SpectralSignature {
        mean,
        wavelengths_nm: wavelengths_nm.to_vec(),
    })
}

/// Labelled matrix of pixel spectra: one row per pixel, one label per
/// row. Columns are bands for raw data or discriminant components after
/// projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    labels: Vec<ClassLabel>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<ClassLabel>) -> Result<Self> {
        if labels.len() != values.nrows() {
            return Err(Error::validation(format!(
                "{} labels for {} rows",
                labels.len(),
                values.nrows()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::validation("data matrix needs at least one column"));
        }
        for label in &labels {
            label.validate()?;
        }
        Ok(DataMatrix { values, labels })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Distinct labels in first-appearance order.
    pub fn class_order(&self) -> Vec<ClassLabel> {
        let mut order: Vec<ClassLabel> = Vec::new();
        for label in &self.labels {
            if !order.contains(label) {
                order.push(*label);
            }
        }
        order
    }

    /// Row indices carrying the given label.
    pub fn class_rows(&self, label: ClassLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy of the rows carrying the given label.
    pub fn class_block(&self, label: ClassLabel) -> DMatrix<f64> {
        let rows = self.class_rows(label);
        let mut out = DMatrix::zeros(rows.len(), self.ncols());
        for (r, &idx) in rows.iter().enumerate() {
            out.set_row(r, &self.values.row(idx));
        }
        out
    }

    pub fn row_vector(&self, i: usize) -> DVector<f64> {
        self.values.row(i).transpose()
    }

    /// Serialize as CSV with header `band_1..band_n,label_kind,label_value`
    /// (`comp_i` column names after projection).
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        let prefix = if self.ncols() == BAND_COUNT {
            "band"
        } else {
            "comp"
        };
        let mut header: Vec<String> = (1..=self.ncols())
            .map(|i| format!("{prefix}_{i}"))
            .collect();
        header.push("label_kind".into());
        header.push("label_value".into());
        text.push_str(&header.join(","));
        text.push('\n');
        for (i, label) in self.labels.iter().enumerate() {
            let mut fields: Vec<String> =
                self.values.row(i).iter().map(|v| format!("{v}")).collect();
            let (kind, value) = match label {
                ClassLabel::AdulterationFraction(f) => ("adulteration_fraction", format!("{f}")),
                ClassLabel::HeatCycles(c) => ("heat_cycles", format!("{c}")),
            };
            fields.push(kind.into());
            fields.push(value);
            text.push_str(&fields.join(","));
            text.push('\n');
        }
        atomic_write(path, text.as_bytes())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::validation(format!("{path:?}: empty CSV")))?;
        let ncols = header
            .split(',')
            .filter(|c| c.starts_with("band_") || c.starts_with("comp_"))
            .count();
        if ncols == 0 {
            return Err(Error::validation(format!(
                "{path:?}: no value columns in header"
            )));
        }
        let mut rows: Vec<f64> = Vec::new();
        let mut labels = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != ncols + 2 {
                return Err(Error::validation(format!(
                    "{path:?} line {}: expected {} fields, got {}",
                    lineno + 2,
                    ncols + 2,
                    fields.len()
                )));
            }
            for f in &fields[..ncols] {
                rows.push(f.parse::<f64>().map_err(|_| {
                    Error::validation(format!("{path:?} line {}: bad number {f:?}", lineno + 2))
                })?);
            }
            let label = match fields[ncols] {
                "adulteration_fraction" => {
                    ClassLabel::AdulterationFraction(fields[ncols + 1].parse().map_err(|_| {
                        Error::validation(format!("{path:?} line {}: bad label", lineno + 2))
                    })?)
                }
                "heat_cycles" => {
                    ClassLabel::HeatCycles(fields[ncols + 1].parse().map_err(|_| {
                        Error::validation(format!("{path:?} line {}: bad label", lineno + 2))
                    })?)
                }
                other => {
                    return Err(Error::validation(format!(
                        "{path:?} line {}: unknown label kind {other:?}",
                        lineno + 2
                    )))
                }
            };
            labels.push(label);
        }
        let nrows = labels.len();
        DataMatrix::new(DMatrix::from_row_slice(nrows, ncols, &rows), labels)
    }
}

/// Stack labelled pixel-spectra blocks into one data matrix, preserving
/// block order.
pub fn build_data_matrix(blocks: &[(DMatrix<f64>, ClassLabel)]) -> Result<DataMatrix> {
    if blocks.is_empty() {
        return Err(Error::validation("no blocks"));
    }
    let ncols = blocks[0].0.ncols();
    let mut total_rows = 0;
    for (block, _) in blocks {
        if block.ncols() != ncols {
            return Err(Error::validation(format!(
                "column-count mismatch: {} vs {}",
                block.ncols(),
                ncols
            )));
        }
        total_rows += block.nrows();
    }
    let mut values = DMatrix::zeros(total_rows, ncols);
    let mut labels = Vec::with_capacity(total_rows);
    let mut at = 0;
    for (block, label) in blocks {
        values.rows_mut(at, block.nrows()).copy_from(block);
        labels.extend(std::iter::repeat_n(*label, block.nrows()));
        at += block.nrows();
    }
    DataMatrix::new(values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::{reference_band_specs, DEFAULT_BIT_DEPTH};

    fn cube_from(values: impl Fn(usize, usize, usize) -> u16, w: usize, h: usize) -> SpectralCube {
        let bands = (0..BAND_COUNT)
            .map(|b| {
                let vals = (0..h)
                    .flat_map(|y| (0..w).map(move |x| (x, y)))
                    .map(|(x, y)| values(b, x, y))
                    .collect();
                BandImage::new(w, h, DEFAULT_BIT_DEPTH, vals).unwrap()
            })
            .collect();
        SpectralCube::new("p", None, reference_band_specs().to_vec(), bands).unwrap()
    }

    fn flat(value: u16) -> SpectralCube {
        cube_from(|_, _, _| value, 10, 10)
    }

    #[test]
    fn dark_subtraction_matches_arithmetic_and_clamps() {
        let raw = flat(100);
        let dark = flat(10);
        let out = subtract_dark(&raw, &dark).unwrap();
        assert!(out
            .bands()
            .iter()
            .all(|b| b.values().iter().all(|&v| v == 90)));

        let raw = flat(5);
        let dark = flat(9);
        let out = subtract_dark(&raw, &dark).unwrap();
        assert!(out
            .bands()
            .iter()
            .all(|b| b.values().iter().all(|&v| v == 0)));

        let same = flat(77);
        let out = subtract_dark(&same, &same).unwrap();
        assert!(out
            .bands()
            .iter()
            .all(|b| b.values().iter().all(|&v| v == 0)));
    }

    #[test]
    fn dark_subtraction_by_zero_cube_is_identity() {
        let raw = cube_from(|b, x, y| ((b + x * 3 + y * 7) % 1024) as u16, 10, 10);
        let zero = flat(0);
        assert_eq!(subtract_dark(&raw, &zero).unwrap(), raw);
    }

    #[test]
    fn dark_subtraction_rejects_dimension_mismatch() {
        let raw = flat(10);
        let dark = cube_from(|_, _, _| 1, 9, 10);
        assert!(subtract_dark(&raw, &dark).is_err());
    }

    #[test]
    fn smoothing_leaves_constants_unchanged() {
        let cube = flat(123);
        for window in [1, 3, 4, 10] {
            assert_eq!(smooth(&cube, window).unwrap(), cube);
        }
    }

    #[test]
    fn smoothing_center_of_0_to_8_neighborhood_is_4() {
        // Band 0 carries values 0..8 in its central 3x3 block.
        let cube = cube_from(
            |b, x, y| {
                if b == 0 && (4..7).contains(&x) && (4..7).contains(&y) {
                    ((y - 4) * 3 + (x - 4)) as u16
                } else if b == 0 {
                    4
                } else {
                    9
                }
            },
            10,
            10,
        );
        let out = smooth(&cube, 3).unwrap();
        assert_eq!(out.band(0).get(5, 5), 4);
    }

    #[test]
    fn even_window_anchor_is_documented_split() {
        // 4-wide window covers offsets -2..=1: for an impulse at x=5 on
        // a 10x1-ish image, outputs at x=4..=7 see the impulse.
        let cube = cube_from(
            |b, x, y| if b == 0 && x == 5 && y == 5 { 16 } else { 0 },
            12,
            12,
        );
        let out = smooth(&cube, 4).unwrap();
        let hits: Vec<usize> = (0..12).filter(|&x| out.band(0).get(x, 5) > 0).collect();
        assert_eq!(hits, vec![4, 5, 6, 7]);
    }

    #[test]
    fn smooth_rejects_oversized_window() {
        assert!(smooth(&flat(1), 11).is_err());
        assert!(smooth(&flat(1), 0).is_err());
    }

    #[test]
    fn median_filter_removes_isolated_impulse() {
        let cube = cube_from(
            |b, x, y| if b == 0 && x == 5 && y == 5 { 1000 } else { 8 },
            10,
            10,
        );
        let out = smooth_with(&cube, 3, SmoothKind::Median).unwrap();
        assert_eq!(out.band(0).get(5, 5), 8);
    }

    #[test]
    fn roi_extraction_shapes_and_bounds() {
        let cube = cube_from(|b, x, y| (b * 10 + x + y) as u16, 40, 40);
        let roi = Roi::new(2, 3, 30);
        let block = extract_roi(&cube, &roi).unwrap();
        assert_eq!((block.nrows(), block.ncols()), (900, 9));
        // row-major ROI order: first row is pixel (2, 3)
        assert_eq!(block[(0, 0)], (2 + 3) as f64);
        assert_eq!(block[(0, 8)], (80 + 2 + 3) as f64);

        let single = extract_roi(&cube, &Roi::new(0, 0, 1)).unwrap();
        assert_eq!((single.nrows(), single.ncols()), (1, 9));
        assert_eq!(single[(0, 0)], 0.0);

        assert!(extract_roi(&cube, &Roi::new(20, 20, 30)).is_err());
    }

    #[test]
    fn stride_subsample_keeps_grid() {
        let cube = cube_from(|_, x, y| (x + y) as u16, 40, 40);
        let block = extract_roi(&cube, &Roi::new(0, 0, 30)).unwrap();
        let sub = stride_subsample(&block, 30, 3, None).unwrap();
        assert_eq!(sub.nrows(), 100);
        // first kept row is pixel (0,0), second is (3,0)
        assert_eq!(sub[(0, 0)], 0.0);
        assert_eq!(sub[(1, 0)], 3.0);
        let jittered = stride_subsample(&block, 30, 3, Some(9)).unwrap();
        assert_eq!(jittered.nrows(), 100);
    }

    #[test]
    fn mean_signature_matches_expectations() {
        let block = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, 2.0, 4.0, 6.0]);
        let sig = mean_signature(&block, &[400.0, 500.0, 600.0]).unwrap();
        assert_eq!(sig.mean, vec![1.0, 2.0, 3.0]);

        let same = DMatrix::from_row_slice(3, 2, &[5.0, 7.0, 5.0, 7.0, 5.0, 7.0]);
        assert_eq!(
            mean_signature(&same, &[1.0, 2.0]).unwrap().mean,
            vec![5.0, 7.0]
        );
    }

    #[test]
    fn mean_signature_matches_column_mean_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let rows = rng.random_range(2..40usize);
            let block = DMatrix::from_fn(rows, 9, |_, _| rng.random_range(0.0..1000.0));
            let sig = mean_signature(&block, &[0.0; 9]).unwrap();
            for c in 0..9 {
                let mut acc = 0.0;
                for r in 0..rows {
                    acc += block[(r, c)];
                }
                assert!((sig.mean[c] - acc / rows as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn build_data_matrix_stacks_and_labels() {
        let a = DMatrix::from_element(900, 9, 1.0);
        let b = DMatrix::from_element(900, 9, 2.0);
        let dm = build_data_matrix(&[
            (a, ClassLabel::AdulterationFraction(0.0)),
            (b, ClassLabel::AdulterationFraction(0.05)),
        ])
        .unwrap();
        assert_eq!((dm.nrows(), dm.ncols()), (1800, 9));
        assert_eq!(dm.class_order().len(), 2);
        assert_eq!(
            dm.class_rows(ClassLabel::AdulterationFraction(0.05)).len(),
            900
        );

        assert!(build_data_matrix(&[]).is_err());
        let err = build_data_matrix(&[
            (DMatrix::zeros(2, 9), ClassLabel::HeatCycles(0)),
            (DMatrix::zeros(2, 8), ClassLabel::HeatCycles(1)),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("column-count mismatch"));
    }

    #[test]
    fn paper_scale_shape_reproduced() {
        // 9 classes x 15 replicates x 900 pixels = 121500 rows.
        let blocks: Vec<_> = (0..9)
            .flat_map(|c| {
                (0..15).map(move |_| {
                    (
                        DMatrix::from_element(900, 9, c as f64),
                        ClassLabel::AdulterationFraction(0.05 * c as f64),
                    )
                })
            })
            .collect();
        let dm = build_data_matrix(&blocks).unwrap();
        assert_eq!((dm.nrows(), dm.ncols()), (121_500, 9));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let dm = build_data_matrix(&[
            (
                DMatrix::from_row_slice(
                    2,
                    9,
                    &[
                        1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.25, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0,
                        6.0, 7.0, 8.125,
                    ],
                ),
                ClassLabel::AdulterationFraction(0.05),
            ),
            (DMatrix::from_element(1, 9, 7.0), ClassLabel::HeatCycles(2)),
        ])
        .unwrap();
        dm.save_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("band_1,band_2"));
        assert_eq!(DataMatrix::load_csv(&path).unwrap(), dm);
    }

    #[test]
    fn rescale_matches_8bit_convention() {
        let block = DMatrix::from_element(1, 2, 1023.0);
        let scaled = rescale_to_8bit(&block, 10);
        assert!((scaled[(0, 0)] - 255.0).abs() < 1e-12);
    }
}
