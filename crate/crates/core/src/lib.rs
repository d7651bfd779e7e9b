//! Transmittance multispectral analysis of edible-oil quality.
//!
//! The crate covers two desk-scale analysis pipelines over 9-band
//! transmittance cubes:
//!
//! - **Adulteration estimation**: Fisher discriminant reduction of pixel
//!   spectra, per-class Gaussian models, and a quadratic calibration of
//!   normalized Bhattacharyya distance against the palm-oil volume
//!   fraction ([`fda`], [`adulteration`]).
//! - **Reheat classification**: Gaussian-kernel affinity graphs over the
//!   reduced spectra, eigengap-optimized spectral clustering, and a
//!   distance-range classifier for qualitative reheat classes ([`reheat`]).
//!
//! [`cube`] holds the cube data model, its on-disk format, and a seedable
//! synthetic capture generator that stands in for the physical imaging
//! rig. [`preprocess`] provides dark-frame subtraction, windowed
//! smoothing, ROI extraction, and data-matrix assembly.

pub mod adulteration;
pub mod config;
pub mod cube;
pub mod error;
pub mod fda;
pub mod preprocess;
pub mod reheat;

pub use error::{Error, Result};
