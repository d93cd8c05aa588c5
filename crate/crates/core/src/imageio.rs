//! Thin PNG read/write layer over the `png` crate.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelFormat {
    Rgb8,
    Gray8,
    Gray16,
}

/// A decoded image with samples widened to `u16` (8-bit values stay in 0..=255).
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    pub bit_depth: u8,
    pub samples: Vec<u16>,
}

fn img_err(path: &Path, msg: impl ToString) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

pub fn write_png(path: &Path, width: u32, height: u32, format: PixelFormat, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width, height);
    let (color, depth) = match format {
        PixelFormat::Rgb8 => (png::ColorType::Rgb, png::BitDepth::Eight),
        PixelFormat::Gray8 => (png::ColorType::Grayscale, png::BitDepth::Eight),
        PixelFormat::Gray16 => (png::ColorType::Grayscale, png::BitDepth::Sixteen),
    };
    enc.set_color(color);
    enc.set_depth(depth);
    let mut writer = enc.write_header().map_err(|e| img_err(path, e))?;
    writer.write_image_data(data).map_err(|e| img_err(path, e))?;
    writer.finish().map_err(|e| img_err(path, e))
}

pub fn write_gray16(path: &Path, width: u32, height: u32, values: &[u16]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_png(path, width, height, PixelFormat::Gray16, &bytes)
}

pub fn read_png(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND);
    let mut reader = dec.read_info().map_err(|e| img_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| img_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| img_err(path, e))?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    let bit_depth = info.bit_depth as u8;
    let samples = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
        png::BitDepth::Eight => buf.iter().map(|&b| b as u16).collect(),
        other => return Err(img_err(path, format!("unsupported bit depth {other:?}"))),
    };
    Ok(Decoded {
        width: info.width,
        height: info.height,
        channels,
        bit_depth,
        samples,
    })
}

impl Decoded {
    /// RGB triples, dropping alpha and expanding gray.
    pub fn to_rgb8(&self) -> Vec<[u8; 3]> {
        let scale = |v: u16| {
            if self.bit_depth == 16 {
                (v >> 8) as u8
            } else {
                v as u8
            }
        };
        self.samples
            .chunks_exact(self.channels)
            .map(|px| match self.channels {
                1 | 2 => [scale(px[0]); 3],
                _ => [scale(px[0]), scale(px[1]), scale(px[2])],
            })
            .collect()
    }
}
