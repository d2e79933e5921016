//! Lattice file formats.
//!
//! WLUT4D layout (all integers and floats little-endian):
//!
//! | bytes        | content                                             |
//! |--------------|-----------------------------------------------------|
//! | 7            | magic `"WLUT4D\0"`                                  |
//! | 2            | version (`u16`, currently 1)                         |
//! | 2            | `n` (`u16`)                                          |
//! | 1            | axis mode (`0` uniform, `1` explicit)                |
//! | 4·n·4        | explicit mode only: R, G, B, E axis coordinates (`f32`) |
//! | n⁴·3·4       | RGB values (`f32`), grid point `((s·n + z)·n + y)·n + x`, R fastest |
//!
//! A `.cube` reader/writer is provided for 3D tables so that lattices can be
//! exchanged with ordinary grading tools.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::axis::CoordinateAxis;
use super::{Lattice3D, Lattice4D};
use crate::error::{Error, Result};

pub const WLUT4D_MAGIC: &[u8; 7] = b"WLUT4D\0";
pub const WLUT4D_VERSION: u16 = 1;

const AXIS_UNIFORM: u8 = 0;
const AXIS_EXPLICIT: u8 = 1;

pub fn encode_wlut4d(lut: &Lattice4D) -> Result<Vec<u8>> {
    let n = u16::try_from(lut.n())
        .map_err(|_| Error::InvalidSize(format!("n={} does not fit the format", lut.n())))?;
    let explicit = lut.axes().iter().any(|a| !a.is_uniform());
    let mut out = Vec::with_capacity(12 + lut.values().len() * 4);
    out.extend_from_slice(WLUT4D_MAGIC);
    out.extend_from_slice(&WLUT4D_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    if explicit {
        out.push(AXIS_EXPLICIT);
        for axis in lut.axes() {
            for c in axis.coords() {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    } else {
        out.push(AXIS_UNIFORM);
    }
    for v in lut.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect()
}

pub fn decode_wlut4d(bytes: &[u8]) -> Result<Lattice4D> {
    if bytes.len() < 12 || &bytes[..7] != WLUT4D_MAGIC {
        return Err(Error::Format("not a WLUT4D file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[7], bytes[8]]);
    if version != WLUT4D_VERSION {
        return Err(Error::Format(format!("unsupported WLUT4D version {version}")));
    }
    let n = u16::from_le_bytes([bytes[9], bytes[10]]) as usize;
    if n < 2 {
        return Err(Error::Format(format!("invalid lattice size {n}")));
    }
    let mode = bytes[11];
    let mut pos = 12;
    let axes = match mode {
        AXIS_UNIFORM => Lattice4D::uniform_axes(n)?,
        AXIS_EXPLICIT => {
            let len = 4 * n * 4;
            let raw = bytes
                .get(pos..pos + len)
                .ok_or_else(|| Error::Format("truncated axis block".into()))?;
            pos += len;
            let coords = read_f32s(raw);
            let mut axes = Vec::with_capacity(4);
            for chunk in coords.chunks_exact(n) {
                axes.push(
                    CoordinateAxis::new(chunk.to_vec())
                        .map_err(|e| Error::Format(format!("bad axis: {e}")))?,
                );
            }
            axes.try_into().expect("four axes")
        }
        other => return Err(Error::Format(format!("unknown axis mode {other}"))),
    };
    let len = n.pow(4) * 3 * 4;
    let raw = &bytes[pos..];
    if raw.len() != len {
        return Err(Error::Format(format!(
            "expected {len} bytes of lattice values, found {}",
            raw.len()
        )));
    }
    Lattice4D::new(axes, read_f32s(raw)).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_wlut4d(lut: &Lattice4D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wlut4d(lut)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_wlut4d(path: impl AsRef<Path>) -> Result<Lattice4D> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wlut4d(&bytes)
}

/// Parses an Adobe/Resolve style `.cube` 3D table (uniform domain `[0, 1]`).
pub fn parse_cube(text: &str) -> Result<Lattice3D> {
    let mut size: Option<usize> = None;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap_or_default();
        match head {
            "LUT_3D_SIZE" => {
                let s = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Format(format!("line {}: bad LUT_3D_SIZE", lineno + 1)))?;
                size = Some(s);
            }
            "TITLE" | "DOMAIN_MIN" | "DOMAIN_MAX" | "LUT_1D_SIZE" | "LUT_3D_INPUT_RANGE" => {
                if head == "LUT_1D_SIZE" {
                    return Err(Error::Format("1D .cube tables are not supported".into()));
                }
            }
            _ => {
                let mut rgb = [0.0f32; 3];
                let mut it = line.split_whitespace();
                for v in rgb.iter_mut() {
                    *v = it
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Format(format!("line {}: bad value row", lineno + 1)))?;
                }
                values.extend_from_slice(&rgb);
            }
        }
    }
    let n = size.ok_or_else(|| Error::Format("missing LUT_3D_SIZE".into()))?;
    if values.len() != n.pow(3) * 3 {
        return Err(Error::Format(format!(
            "LUT_3D_SIZE {n} needs {} rows, found {}",
            n.pow(3),
            values.len() / 3
        )));
    }
    Lattice3D::uniform(n, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_cube(lut: &Lattice3D, title: &str, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "TITLE \"{title}\"")?;
    writeln!(out, "LUT_3D_SIZE {}", lut.n())?;
    for rgb in lut.values().chunks_exact(3) {
        writeln!(out, "{:.6} {:.6} {:.6}", rgb[0], rgb[1], rgb[2])?;
    }
    Ok(())
}

/// 3D slice of a 4D lattice at a fixed `E` grid index.
pub fn slice_at(lut: &Lattice4D, s: usize) -> Result<Lattice3D> {
    let n = lut.n();
    if s >= n {
        return Err(Error::InvalidArgument(format!("slice {s} out of range 0..{n}")));
    }
    let per = n.pow(3) * 3;
    let values = lut.values()[s * per..(s + 1) * per].to_vec();
    let axes = [
        lut.axes()[0].clone(),
        lut.axes()[1].clone(),
        lut.axes()[2].clone(),
    ];
    Lattice3D::new(axes, values)
}
