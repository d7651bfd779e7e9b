//! Data model for 9-band transmittance cubes.
//!
//! A [`SpectralCube`] is one sample's stack of nine monochrome band
//! images plus the LED band metadata of the acquisition rig. Cubes are
//! immutable after construction and every constructor validates the
//! type invariants, so a cube in hand is always well formed.

mod generator;
mod io;

pub use generator::{derive_seed, simulate_capture, GeneratorParams};
pub use io::{atomic_write, load_cube, save_cube};

pub mod corpus;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of spectral bands in every cube.
pub const BAND_COUNT: usize = 9;

/// Default sensor bit depth.
pub const DEFAULT_BIT_DEPTH: u8 = 10;

/// Metadata for one LED band of the imaging rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    /// 1-based band index; a cube carries indices 1..=9 in order.
    pub index: u8,
    pub dominant_wavelength_nm: f64,
    pub band_low_nm: f64,
    pub band_high_nm: f64,
    pub half_power_bandwidth_nm: f64,
}

impl BandSpec {
    pub fn validate(&self) -> Result<()> {
        if self.index == 0 || self.index as usize > BAND_COUNT {
            return Err(Error::validation(format!(
                "band index {} outside 1..={BAND_COUNT}",
                self.index
            )));
        }
        if !(self.band_low_nm < self.dominant_wavelength_nm
            && self.dominant_wavelength_nm < self.band_high_nm)
        {
            return Err(Error::validation(format!(
                "band {}: require band_low < dominant < band_high, got {} / {} / {}",
                self.index, self.band_low_nm, self.dominant_wavelength_nm, self.band_high_nm
            )));
        }
        if self.half_power_bandwidth_nm <= 0.0 {
            return Err(Error::validation(format!(
                "band {}: half-power bandwidth must be positive",
                self.index
            )));
        }
        Ok(())
    }
}

/// The nine LED bands of the reference rig, 405 nm through 950 nm.
pub fn reference_band_specs() -> [BandSpec; BAND_COUNT] {
    const TABLE: [(u8, f64, f64, f64, f64); BAND_COUNT] = [
        (1, 405.0, 375.0, 425.0, 10.0),
        (2, 430.0, 385.0, 525.0, 50.0),
        (3, 505.0, 450.0, 550.0, 20.0),
        (4, 590.0, 520.0, 620.0, 10.0),
        (5, 660.0, 630.0, 685.0, 20.0),
        (6, 740.0, 690.0, 760.0, 20.0),
        (7, 850.0, 825.0, 875.0, 10.0),
        (8, 890.0, 865.0, 915.0, 10.0),
        (9, 950.0, 915.0, 1000.0, 20.0),
    ];
    TABLE.map(|(index, dominant, low, high, hpbw)| BandSpec {
        index,
        dominant_wavelength_nm: dominant,
        band_low_nm: low,
        band_high_nm: high,
        half_power_bandwidth_nm: hpbw,
    })
}

/// Ground-truth class of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ClassLabel {
    /// Palm-oil volume fraction in `[0, 1]`; `0` is pure coconut oil.
    AdulterationFraction(f64),
    /// Number of frying cycles the oil has undergone; `0` is unheated.
    HeatCycles(u32),
}

/// Highest reheat cycle count the pipelines cover.
pub const MAX_HEAT_CYCLES: u32 = 5;

impl ClassLabel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ClassLabel::AdulterationFraction(f) => {
                if !f.is_finite() || !(0.0..=1.0).contains(&f) {
                    return Err(Error::validation(format!(
                        "adulteration fraction {f} outside [0, 1]"
                    )));
                }
            }
            ClassLabel::HeatCycles(c) => {
                if c > MAX_HEAT_CYCLES {
                    return Err(Error::validation(format!(
                        "heat cycles {c} outside 0..={MAX_HEAT_CYCLES}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassLabel::AdulterationFraction(v) => write!(f, "adulteration:{v}"),
            ClassLabel::HeatCycles(c) => write!(f, "heat:{c}"),
        }
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::validation(format!("label {s:?}: expected kind:value")))?;
        let label = match kind {
            "adulteration" => ClassLabel::AdulterationFraction(
                value
                    .parse()
                    .map_err(|_| Error::validation(format!("label {s:?}: bad fraction")))?,
            ),
            "heat" => ClassLabel::HeatCycles(
                value
                    .parse()
                    .map_err(|_| Error::validation(format!("label {s:?}: bad cycle count")))?,
            ),
            other => {
                return Err(Error::validation(format!("unknown label kind {other:?}")));
            }
        };
        label.validate()?;
        Ok(label)
    }
}

/// One monochrome band image, row-major, integer intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct BandImage {
    width: usize,
    height: usize,
    bit_depth: u8,
    values: Vec<u16>,
}

impl BandImage {
    pub fn new(width: usize, height: usize, bit_depth: u8, values: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("band image dimensions must be positive"));
        }
        if bit_depth == 0 || bit_depth > 16 {
            return Err(Error::validation(format!(
                "bit depth {bit_depth} outside 1..=16"
            )));
        }
        if values.len() != width * height {
            return Err(Error::validation(format!(
                "band image has {} values, expected {}x{}={}",
                values.len(),
                width,
                height,
                width * height
            )));
        }
        let max = max_value(bit_depth);
        if let Some(v) = values.iter().find(|&&v| v > max) {
            return Err(Error::validation(format!(
                "pixel value {v} exceeds {bit_depth}-bit maximum {max}"
            )));
        }
        Ok(BandImage {
            width,
            height,
            bit_depth,
            values,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, bit_depth: u8, value: u16) -> Result<Self> {
        Self::new(width, height, bit_depth, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.values[y * self.width + x]
    }

    /// Largest representable intensity, `2^bit_depth - 1`.
    pub fn max_value(&self) -> u16 {
        max_value(self.bit_depth)
    }
}

pub(crate) fn max_value(bit_depth: u8) -> u16 {
    if bit_depth >= 16 {
        u16::MAX
    } else {
        (1u16 << bit_depth) - 1
    }
}

/// A full nine-band sample: band images plus band metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    sample_id: String,
    label: Option<ClassLabel>,
    band_specs: Vec<BandSpec>,
    bands: Vec<BandImage>,
}

impl SpectralCube {
    pub fn new(
        sample_id: impl Into<String>,
        label: Option<ClassLabel>,
        band_specs: Vec<BandSpec>,
        bands: Vec<BandImage>,
    ) -> Result<Self> {
        if bands.len() != BAND_COUNT {
            return Err(Error::validation(format!(
                "band count != {BAND_COUNT}: got {}",
                bands.len()
            )));
        }
        if band_specs.len() != BAND_COUNT {
            return Err(Error::validation(format!(
                "band spec count != {BAND_COUNT}: got {}",
                band_specs.len()
            )));
        }
        for (i, spec) in band_specs.iter().enumerate() {
            spec.validate()?;
            if spec.index as usize != i + 1 {
                return Err(Error::validation(format!(
                    "band specs must be ordered with contiguous indices 1..={BAND_COUNT}; \
                     position {} holds index {}",
                    i + 1,
                    spec.index
                )));
            }
        }
        let (w, h, depth) = (bands[0].width(), bands[0].height(), bands[0].bit_depth());
        for (i, band) in bands.iter().enumerate() {
            if band.width() != w || band.height() != h {
                return Err(Error::validation(format!(
                    "band {} is {}x{}, expected {}x{}",
                    i + 1,
                    band.width(),
                    band.height(),
                    w,
                    h
                )));
            }
            if band.bit_depth() != depth {
                return Err(Error::validation(format!(
                    "band {} has bit depth {}, expected {}",
                    i + 1,
                    band.bit_depth(),
                    depth
                )));
            }
        }
        if let Some(label) = &label {
            label.validate()?;
        }
        Ok(SpectralCube {
            sample_id: sample_id.into(),
            label,
            band_specs,
            bands,
        })
    }

    pub fn sample_id(&self) -> &str {
        &self.sample_id
    }

    pub fn label(&self) -> Option<ClassLabel> {
        self.label
    }

    pub fn band_specs(&self) -> &[BandSpec] {
        &self.band_specs
    }

    pub fn bands(&self) -> &[BandImage] {
        &self.bands
    }

    /// Band by 0-based position.
    pub fn band(&self, i: usize) -> &BandImage {
        &self.bands[i]
    }

    pub fn width(&self) -> usize {
        self.bands[0].width()
    }

    pub fn height(&self) -> usize {
        self.bands[0].height()
    }

    pub fn bit_depth(&self) -> u8 {
        self.bands[0].bit_depth()
    }

    /// Dominant wavelengths of the nine bands, in band order.
    pub fn wavelengths(&self) -> [f64; BAND_COUNT] {
        let mut out = [0.0; BAND_COUNT];
        for (o, s) in out.iter_mut().zip(&self.band_specs) {
            *o = s.dominant_wavelength_nm;
        }
        out
    }

    /// The 9-vector of intensities at one pixel.
    pub fn spectrum_at(&self, x: usize, y: usize) -> [f64; BAND_COUNT] {
        let mut out = [0.0; BAND_COUNT];
        for (o, band) in out.iter_mut().zip(&self.bands) {
            *o = band.get(x, y) as f64;
        }
        out
    }
}
