//! Seedable synthetic capture generator.
//!
//! Emulates the transmittance rig at desk scale: a raw capture is the
//! dark-current offset plus the class base spectrum broadcast over all
//! pixels plus zero-mean per-pixel Gaussian noise, quantized and clipped
//! to the sensor range. The paired dark frame is the offset plus its own
//! noise. Identical `(class, params, seed)` always yields identical
//! output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    max_value, reference_band_specs, BandImage, ClassLabel, SpectralCube, BAND_COUNT,
    DEFAULT_BIT_DEPTH,
};
use crate::config::{parse_f64, parse_f64_list, Config};
use crate::error::{Error, Result};

/// Parameters of the synthetic rig.
///
/// Base spectra are free parameters supplied per class. Adulteration
/// spectra may be declared at a subset of fractions; fractions in
/// between are resolved by piecewise-linear interpolation, matching
/// volumetric mixing. Heat-cycle spectra must be declared per cycle.
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    /// Constant dark-current offset applied to every pixel of every band.
    pub dark_mean: f64,
    /// Noise standard deviation of dark frames.
    pub dark_sigma: f64,
    /// Per-band noise standard deviation of raw captures.
    pub noise_sigma: [f64; BAND_COUNT],
    adulteration_spectra: Vec<(f64, [f64; BAND_COUNT])>,
    heat_spectra: Vec<(u32, [f64; BAND_COUNT])>,
}

impl GeneratorParams {
    pub fn new(
        width: usize,
        height: usize,
        bit_depth: u8,
        dark_mean: f64,
        dark_sigma: f64,
        noise_sigma: [f64; BAND_COUNT],
        mut adulteration_spectra: Vec<(f64, [f64; BAND_COUNT])>,
        heat_spectra: Vec<(u32, [f64; BAND_COUNT])>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation("generator dimensions must be positive"));
        }
        if bit_depth == 0 || bit_depth > 16 {
            return Err(Error::validation("generator bit depth outside 1..=16"));
        }
        if dark_mean < 0.0 || dark_sigma < 0.0 {
            return Err(Error::validation("dark offset and sigma must be >= 0"));
        }
        if noise_sigma.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::validation("negative noise level"));
        }
        for (f, _) in &adulteration_spectra {
            ClassLabel::AdulterationFraction(*f).validate()?;
        }
        for (c, _) in &heat_spectra {
            ClassLabel::HeatCycles(*c).validate()?;
        }
        adulteration_spectra
            .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("validated finite fractions"));
        if adulteration_spectra.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::validation(
                "duplicate adulteration spectrum fraction",
            ));
        }
        let mut heat_spectra = heat_spectra;
        heat_spectra.sort_by_key(|(c, _)| *c);
        if heat_spectra.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::validation("duplicate heat spectrum cycle"));
        }
        Ok(GeneratorParams {
            width,
            height,
            bit_depth,
            dark_mean,
            dark_sigma,
            noise_sigma,
            adulteration_spectra,
            heat_spectra,
        })
    }

    /// Read rig parameters from a `key=value` config (see the shipped
    /// files under `configs/` for the full key list).
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let width = cfg.require_usize("width")?;
        let height = cfg.require_usize("height")?;
        let bit_depth = cfg
            .get_usize("bit_depth")?
            .unwrap_or(DEFAULT_BIT_DEPTH as usize);
        if bit_depth == 0 || bit_depth > 16 {
            return Err(Error::config("bit_depth outside 1..=16"));
        }
        let dark_mean = cfg.require_f64("dark_mean")?;
        let dark_sigma = cfg.require_f64("dark_sigma")?;
        let noise = cfg.require_f64_list("noise_sigma")?;
        let noise_sigma = spectrum_array("noise_sigma", &noise)?;

        let mut adulteration = Vec::new();
        for (frac, value) in cfg.entries_with_prefix("spectrum adulteration") {
            let f = parse_f64("spectrum adulteration", frac)?;
            let values = parse_f64_list("spectrum adulteration", value)?;
            adulteration.push((f, spectrum_array("spectrum adulteration", &values)?));
        }
        let mut heat = Vec::new();
        for (cycle, value) in cfg.entries_with_prefix("spectrum heat") {
            let c: u32 = cycle
                .parse()
                .map_err(|_| Error::config(format!("bad heat cycle {cycle:?}")))?;
            let values = parse_f64_list("spectrum heat", value)?;
            heat.push((c, spectrum_array("spectrum heat", &values)?));
        }
        if adulteration.is_empty() && heat.is_empty() {
            return Err(Error::config("config declares no class spectra"));
        }
        GeneratorParams::new(
            width,
            height,
            bit_depth as u8,
            dark_mean,
            dark_sigma,
            noise_sigma,
            adulteration,
            heat,
        )
    }

    /// Resolve the base spectrum of a class. Adulteration fractions
    /// interpolate linearly between the nearest declared fractions;
    /// heat cycles must match a declared cycle exactly.
    pub fn base_spectrum(&self, label: ClassLabel) -> Result<[f64; BAND_COUNT]> {
        label.validate()?;
        match label {
            ClassLabel::AdulterationFraction(f) => {
                let table = &self.adulteration_spectra;
                if table.is_empty() {
                    return Err(Error::validation("no adulteration spectra declared"));
                }
                let (lo, hi) = (table[0].0, table[table.len() - 1].0);
                if f < lo || f > hi {
                    return Err(Error::validation(format!(
                        "fraction {f} outside declared spectrum range [{lo}, {hi}]"
                    )));
                }
                let idx = table.partition_point(|(x, _)| *x <= f);
                if idx > 0 && table[idx - 1].0 == f {
                    return Ok(table[idx - 1].1);
                }
                let (x0, s0) = &table[idx - 1];
                let (x1, s1) = &table[idx];
                let t = (f - x0) / (x1 - x0);
                let mut out = [0.0; BAND_COUNT];
                for i in 0..BAND_COUNT {
                    out[i] = s0[i] + t * (s1[i] - s0[i]);
                }
                Ok(out)
            }
            ClassLabel::HeatCycles(c) => self
                .heat_spectra
                .iter()
                .find(|(x, _)| *x == c)
                .map(|(_, s)| *s)
                .ok_or_else(|| {
                    Error::validation(format!("no spectrum declared for heat cycle {c}"))
                }),
        }
    }
}

fn spectrum_array(key: &str, values: &[f64]) -> Result<[f64; BAND_COUNT]> {
    if values.len() != BAND_COUNT {
        return Err(Error::validation(format!(
            "{key}: base spectrum not length {BAND_COUNT} (got {})",
            values.len()
        )));
    }
    let mut out = [0.0; BAND_COUNT];
    out.copy_from_slice(values);
    Ok(out)
}

/// Deterministically derive an independent stream seed from a base seed
/// and a salt (splitmix64 finalizer over the combined words).
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulate one capture: returns `(raw, dark)` cubes for the class.
pub fn simulate_capture(
    label: ClassLabel,
    params: &GeneratorParams,
    seed: u64,
    sample_id: &str,
) -> Result<(SpectralCube, SpectralCube)> {
    let base = params.base_spectrum(label)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = max_value(params.bit_depth) as f64;
    let pixels = params.width * params.height;

    let mut raw_bands = Vec::with_capacity(BAND_COUNT);
    for (base_level, sigma) in base.iter().zip(&params.noise_sigma) {
        let mean = params.dark_mean + base_level;
        let values = noisy_plane(&mut rng, pixels, mean, *sigma, max)?;
        raw_bands.push(BandImage::new(
            params.width,
            params.height,
            params.bit_depth,
            values,
        )?);
    }
    let mut dark_bands = Vec::with_capacity(BAND_COUNT);
    for _ in 0..BAND_COUNT {
        let values = noisy_plane(&mut rng, pixels, params.dark_mean, params.dark_sigma, max)?;
        dark_bands.push(BandImage::new(
            params.width,
            params.height,
            params.bit_depth,
            values,
        )?);
    }

    let specs = reference_band_specs().to_vec();
    let raw = SpectralCube::new(sample_id, Some(label), specs.clone(), raw_bands)?;
    let dark = SpectralCube::new(format!("{sample_id}-dark"), Some(label), specs, dark_bands)?;
    Ok((raw, dark))
}

fn noisy_plane(
    rng: &mut ChaCha8Rng,
    pixels: usize,
    mean: f64,
    sigma: f64,
    max: f64,
) -> Result<Vec<u16>> {
    let mut out = Vec::with_capacity(pixels);
    if sigma == 0.0 {
        let v = quantize(mean, max);
        out.resize(pixels, v);
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::validation(format!("noise distribution: {e}")))?;
    for _ in 0..pixels {
        out.push(quantize(mean + normal.sample(rng), max));
    }
    Ok(out)
}

#[inline]
fn quantize(v: f64, max: f64) -> u16 {
    v.round().clamp(0.0, max) as u16
}
