//! PNG input and output: 8-bit RGB brightfield images and 1-bit masks.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use holocyte_core::segment::BinaryMask;
use holocyte_core::{Grid, RgbImage};

use crate::error::{Error, Result};

fn encode(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    data: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::write(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| Error::write(path, e))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::write(path, e))?;
    writer.finish().map_err(|e| Error::write(path, e))
}

/// Decodes to 8 bits per sample; returns `(width, height, channels, data)`.
fn decode(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::read(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(|e| Error::read(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::read(path, e))?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    Ok((info.width as usize, info.height as usize, channels, buf))
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    let data: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    encode(
        path,
        img.width(),
        img.height(),
        png::ColorType::Rgb,
        png::BitDepth::Eight,
        &data,
    )
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let (w, h, ch, data) = decode(path)?;
    let pixels = match ch {
        1 | 2 => data.chunks_exact(ch).map(|p| [p[0]; 3]).collect(),
        3 | 4 => data.chunks_exact(ch).map(|p| [p[0], p[1], p[2]]).collect(),
        _ => return Err(Error::read(path, format!("{ch} channels"))),
    };
    RgbImage::new(w, h, pixels).map_err(|e| Error::read(path, e))
}

/// One bit per pixel, rows padded to whole bytes, foreground = 1.
pub fn write_mask(path: &Path, grid: Grid, bits: &[bool]) -> Result<()> {
    let stride = grid.width.div_ceil(8);
    let mut data = vec![0u8; stride * grid.height];
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        let (r, c) = (i / grid.width, i % grid.width);
        data[r * stride + c / 8] |= 0x80 >> (c % 8);
    }
    encode(
        path,
        grid.width,
        grid.height,
        png::ColorType::Grayscale,
        png::BitDepth::One,
        &data,
    )
}

/// Any nonzero sample is foreground. The pixel pitch is not stored in PNG
/// and is taken from `pitch`.
pub fn read_mask(path: &Path, pitch: f64) -> Result<BinaryMask> {
    let (w, h, ch, data) = decode(path)?;
    let bits = data.chunks_exact(ch).map(|p| p[0] != 0).collect();
    let grid = Grid::new(w, h, pitch).map_err(|e| Error::read(path, e))?;
    BinaryMask::new(grid, bits).map_err(|e| Error::read(path, e))
}
