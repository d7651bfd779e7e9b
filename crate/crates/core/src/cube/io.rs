//! On-disk cube format: a directory holding `manifest.json` and one
//! binary PGM (P5) file per band.
//!
//! PGM sample width follows the format rule: one byte when the declared
//! maxval fits in 8 bits, two big-endian bytes otherwise. With the
//! default 10-bit depth every band file is 16-bit big-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{max_value, BandImage, BandSpec, ClassLabel, SpectralCube, BAND_COUNT};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    sample_id: String,
    bit_depth: u8,
    label: Option<ClassLabel>,
    bands: Vec<ManifestBand>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestBand {
    file: String,
    #[serde(flatten)]
    spec: BandSpec,
}

/// Write `bytes` to `path` through a temporary sibling and a rename, so
/// a failed run never leaves a truncated file behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Serialize a cube into `dir`; overwrites any previous cube there.
pub fn save_cube(cube: &SpectralCube, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut bands = Vec::with_capacity(BAND_COUNT);
    for (spec, band) in cube.band_specs().iter().zip(cube.bands()) {
        let file = format!("band_{}.pgm", spec.index);
        write_pgm(&dir.join(&file), band)?;
        bands.push(ManifestBand { file, spec: *spec });
    }
    let manifest = Manifest {
        sample_id: cube.sample_id().to_string(),
        bit_depth: cube.bit_depth(),
        label: cube.label(),
        bands,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::validation(format!("manifest encode: {e}")))?;
    atomic_write(&dir.join(MANIFEST_NAME), json.as_bytes())
}

/// Load a cube from a directory written by [`save_cube`]; band order
/// follows the manifest.
pub fn load_cube(dir: impl AsRef<Path>) -> Result<SpectralCube> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("malformed manifest {manifest_path:?}: {e}")))?;
    if manifest.bands.len() != BAND_COUNT {
        return Err(Error::validation(format!(
            "band count != {BAND_COUNT}: manifest lists {}",
            manifest.bands.len()
        )));
    }
    let mut specs = Vec::with_capacity(BAND_COUNT);
    let mut bands = Vec::with_capacity(BAND_COUNT);
    for entry in &manifest.bands {
        let band = read_pgm(&dir.join(&entry.file), manifest.bit_depth)?;
        specs.push(entry.spec);
        bands.push(band);
    }
    SpectralCube::new(manifest.sample_id, manifest.label, specs, bands)
}

fn write_pgm(path: &Path, band: &BandImage) -> Result<()> {
    let maxval = band.max_value();
    let mut buf = Vec::with_capacity(32 + band.values().len() * 2);
    write!(buf, "P5\n{} {}\n{}\n", band.width(), band.height(), maxval)
        .expect("writing to Vec cannot fail");
    if maxval > 255 {
        for &v in band.values() {
            buf.write_u16::<BigEndian>(v).expect("vec write");
        }
    } else {
        buf.extend(band.values().iter().map(|&v| v as u8));
    }
    atomic_write(path, &buf)
}

fn read_pgm(path: &Path, bit_depth: u8) -> Result<BandImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cursor = 0usize;
    let magic = next_token(&bytes, &mut cursor)
        .ok_or_else(|| Error::validation(format!("{path:?}: truncated PGM header")))?;
    if magic != b"P5" {
        return Err(Error::validation(format!(
            "{path:?}: not a binary PGM (magic {:?})",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_header_int(&bytes, &mut cursor, path, "width")?;
    let height = parse_header_int(&bytes, &mut cursor, path, "height")?;
    let maxval = parse_header_int(&bytes, &mut cursor, path, "maxval")?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::validation(format!("{path:?}: bad maxval {maxval}")));
    }
    if maxval != max_value(bit_depth) as usize {
        return Err(Error::validation(format!(
            "{path:?}: maxval {maxval} does not match declared bit depth {bit_depth}"
        )));
    }
    // Header ends after exactly one whitespace byte following maxval.
    let data = &bytes[cursor..];
    let count = width * height;
    let mut values = Vec::with_capacity(count);
    if maxval > 255 {
        if data.len() != count * 2 {
            return Err(Error::validation(format!(
                "{path:?}: expected {} sample bytes, found {}",
                count * 2,
                data.len()
            )));
        }
        let mut rd = data;
        for _ in 0..count {
            values.push(rd.read_u16::<BigEndian>().expect("length checked"));
        }
    } else {
        if data.len() != count {
            return Err(Error::validation(format!(
                "{path:?}: expected {} sample bytes, found {}",
                count,
                data.len()
            )));
        }
        values.extend(data.iter().map(|&b| b as u16));
    }
    BandImage::new(width, height, bit_depth, values)
}

/// Next header token, skipping whitespace and `#` comment lines; leaves
/// the cursor one byte past the token's trailing delimiter.
fn next_token<'a>(bytes: &'a [u8], cursor: &mut usize) -> Option<&'a [u8]> {
    while *cursor < bytes.len() {
        match bytes[*cursor] {
            b' ' | b'\t' | b'\r' | b'\n' => *cursor += 1,
            b'#' => {
                while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                    *cursor += 1;
                }
            }
            _ => break,
        }
    }
    let start = *cursor;
    while *cursor < bytes.len() && !bytes[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if *cursor > start {
        let token = &bytes[start..*cursor];
        *cursor += 1; // single delimiter after the token
        Some(token)
    } else {
        None
    }
}

fn parse_header_int(bytes: &[u8], cursor: &mut usize, path: &Path, what: &str) -> Result<usize> {
    let token = next_token(bytes, cursor)
        .ok_or_else(|| Error::validation(format!("{path:?}: missing PGM {what}")))?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::validation(format!("{path:?}: bad PGM {what}")))
}
