//! QPIF1 field container.
//!
//! Layout: the five magic bytes `QPIF1`, a little-endian `u32` header
//! length, a JSON header `{width, height, dtype, pixel_pitch_um, units}`,
//! then the row-major little-endian payload. `dtype` is `f32` for real
//! fields or `c64-interleaved` for complex ones (an `f32` real part
//! followed by an `f32` imaginary part per pixel).

use std::fs;
use std::path::Path;

use holocyte_core::{Complex64, ComplexField, Field, Grid, RealField};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"QPIF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dtype {
    F32,
    C64Interleaved,
}

impl Dtype {
    fn bytes_per_pixel(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::C64Interleaved => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub width: usize,
    pub height: usize,
    pub dtype: Dtype,
    pub pixel_pitch_um: f64,
    pub units: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Real(RealField),
    Complex(ComplexField),
}

fn encode_with(header: &Header, push: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let payload = header.width * header.height * header.dtype.bytes_per_pixel();
    let mut out = Vec::with_capacity(9 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    push(&mut out);
    out
}

pub fn encode_real(f: &RealField, units: &str) -> Vec<u8> {
    let header = Header {
        width: f.width(),
        height: f.height(),
        dtype: Dtype::F32,
        pixel_pitch_um: f.grid().pixel_pitch,
        units: units.to_string(),
    };
    encode_with(&header, |out| {
        for &v in f.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    })
}

pub fn encode_complex(f: &ComplexField, units: &str) -> Vec<u8> {
    let header = Header {
        width: f.width(),
        height: f.height(),
        dtype: Dtype::C64Interleaved,
        pixel_pitch_um: f.grid().pixel_pitch,
        units: units.to_string(),
    };
    encode_with(&header, |out| {
        for v in f.as_slice() {
            out.extend_from_slice(&(v.re as f32).to_le_bytes());
            out.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
    })
}

pub fn decode(bytes: &[u8]) -> std::result::Result<(Header, Payload), String> {
    if bytes.len() < 9 || &bytes[..5] != MAGIC {
        return Err("not a QPIF1 file".into());
    }
    let hlen = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let body = 9usize
        .checked_add(hlen)
        .filter(|&end| end <= bytes.len())
        .ok_or("truncated header")?;
    let header: Header =
        serde_json::from_slice(&bytes[9..body]).map_err(|e| format!("bad header: {e}"))?;
    let grid =
        Grid::new(header.width, header.height, header.pixel_pitch_um).map_err(|e| e.to_string())?;
    let data = &bytes[body..];
    if data.len() != grid.len() * header.dtype.bytes_per_pixel() {
        return Err(format!(
            "payload holds {} bytes, header implies {}",
            data.len(),
            grid.len() * header.dtype.bytes_per_pixel()
        ));
    }
    let floats = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);
    let payload = match header.dtype {
        Dtype::F32 => {
            Payload::Real(Field::from_vec(grid, floats.collect()).map_err(|e| e.to_string())?)
        }
        Dtype::C64Interleaved => {
            let v: Vec<f64> = floats.collect();
            let c = v
                .chunks_exact(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            Payload::Complex(Field::from_vec(grid, c).map_err(|e| e.to_string())?)
        }
    };
    Ok((header, payload))
}

pub fn write_real(path: &Path, f: &RealField, units: &str) -> Result<()> {
    fs::write(path, encode_real(f, units)).map_err(|e| Error::write(path, e))
}

pub fn write_complex(path: &Path, f: &ComplexField, units: &str) -> Result<()> {
    fs::write(path, encode_complex(f, units)).map_err(|e| Error::write(path, e))
}

pub fn read(path: &Path) -> Result<(Header, Payload)> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    decode(&bytes).map_err(|e| Error::read(path, e))
}

pub fn read_real(path: &Path) -> Result<RealField> {
    match read(path)?.1 {
        Payload::Real(f) => Ok(f),
        Payload::Complex(_) => Err(Error::read(path, "expected a real (f32) field")),
    }
}
