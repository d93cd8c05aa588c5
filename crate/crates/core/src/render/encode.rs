//! On-disk sample format: four PNGs and a JSON sidecar per stem.
//!
//! - `{stem}.rgb.png`: 8-bit RGB.
//! - `{stem}.seg.png`: 16-bit gray instance ids, 0 = background.
//! - `{stem}.depth.png`: 16-bit gray millimeters, clamped to 65535; 0 = no hit.
//! - `{stem}.normal.png`: 8-bit RGB, `round(n * 127.5 + 127.5)` per channel; black = no hit.
//! - `{stem}.json`: camera, visible instances, layout and encoding version.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Camera, InstanceInfo, RenderedSample};
use crate::error::{Error, Result};
use crate::imageio::{read_png, write_gray16, write_png, PixelFormat};
use crate::layout::LayoutRecord;

pub const ENCODING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub stem: String,
    pub encoding_version: u32,
    pub width: u32,
    pub height: u32,
    pub camera: Camera,
    pub instances: Vec<InstanceInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<LayoutRecord>,
}

#[derive(Debug, Clone)]
pub struct DecodedSample {
    pub meta: SampleMeta,
    pub rgb: Vec<[u8; 3]>,
    pub instance: Vec<u16>,
    /// Meters; `f32::INFINITY` where nothing was hit.
    pub depth: Vec<f32>,
    /// Unit vectors; zero where nothing was hit.
    pub normal: Vec<[f32; 3]>,
}

pub fn depth_to_mm(d: f32) -> u16 {
    if !d.is_finite() {
        return 0;
    }
    // A hit never encodes as the no-hit value.
    (d as f64 * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16
}

pub fn encode_normal(n: [f32; 3]) -> [u8; 3] {
    n.map(|c| (c as f64 * 127.5 + 127.5).round().clamp(0.0, 255.0) as u8)
}

pub fn decode_normal(c: [u8; 3]) -> [f32; 3] {
    let v = c.map(|x| (x as f64 - 127.5) / 127.5);
    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if len < 1e-9 {
        return [0.0; 3];
    }
    v.map(|x| (x / len) as f32)
}

pub fn sample_paths(dir: &Path, stem: &str) -> [PathBuf; 5] {
    ["rgb.png", "seg.png", "depth.png", "normal.png", "json"].map(|ext| dir.join(format!("{stem}.{ext}")))
}

/// Writes the sample's five files and returns their paths.
pub fn encode_sample(
    sample: &RenderedSample,
    dir: &Path,
    stem: &str,
    layout: Option<&LayoutRecord>,
) -> Result<[PathBuf; 5]> {
    let (w, h) = (sample.width(), sample.height());
    let paths = sample_paths(dir, stem);
    let rgb: Vec<u8> = sample.rgb.iter().flatten().copied().collect();
    write_png(&paths[0], w, h, PixelFormat::Rgb8, &rgb)?;
    write_gray16(&paths[1], w, h, &sample.instance)?;
    let depth: Vec<u16> = sample.depth.iter().map(|&d| depth_to_mm(d)).collect();
    write_gray16(&paths[2], w, h, &depth)?;
    let normal: Vec<u8> = sample
        .depth
        .iter()
        .zip(&sample.normal)
        .flat_map(|(d, n)| if d.is_finite() { encode_normal(*n) } else { [0, 0, 0] })
        .collect();
    write_png(&paths[3], w, h, PixelFormat::Rgb8, &normal)?;
    let meta = SampleMeta {
        stem: stem.to_string(),
        encoding_version: ENCODING_VERSION,
        width: w,
        height: h,
        camera: sample.camera,
        instances: sample.instances.clone(),
        layout: layout.cloned(),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&paths[4], e))?;
    std::fs::write(&paths[4], text + "\n").map_err(|e| Error::io(&paths[4], e))?;
    Ok(paths)
}

pub fn decode_sample(dir: &Path, stem: &str) -> Result<DecodedSample> {
    let paths = sample_paths(dir, stem);
    let text = std::fs::read_to_string(&paths[4]).map_err(|e| Error::io(&paths[4], e))?;
    let meta: SampleMeta = serde_json::from_str(&text).map_err(|e| Error::json(&paths[4], e))?;
    let n = (meta.width * meta.height) as usize;
    let load = |p: &Path, channels: usize, depth: u8| -> Result<Vec<u16>> {
        let img = read_png(p)?;
        if img.width != meta.width || img.height != meta.height || img.channels != channels || img.bit_depth != depth {
            return Err(Error::Image {
                path: p.to_path_buf(),
                msg: format!(
                    "expected {}x{} with {channels} channel(s) at {depth} bits, got {}x{} with {} at {}",
                    meta.width, meta.height, img.width, img.height, img.channels, img.bit_depth
                ),
            });
        }
        Ok(img.samples)
    };
    let rgb = load(&paths[0], 3, 8)?;
    let instance = load(&paths[1], 1, 16)?;
    let depth_mm = load(&paths[2], 1, 16)?;
    let normal = load(&paths[3], 3, 8)?;
    let rgb: Vec<[u8; 3]> = rgb.chunks_exact(3).map(|c| [c[0] as u8, c[1] as u8, c[2] as u8]).collect();
    let depth: Vec<f32> = depth_mm
        .iter()
        .map(|&d| if d == 0 { f32::INFINITY } else { d as f32 / 1000.0 })
        .collect();
    let normal: Vec<[f32; 3]> = normal
        .chunks_exact(3)
        .zip(&depth_mm)
        .map(|(c, &d)| if d == 0 { [0.0; 3] } else { decode_normal([c[0] as u8, c[1] as u8, c[2] as u8]) })
        .collect();
    debug_assert_eq!(rgb.len(), n);
    Ok(DecodedSample {
        meta,
        rgb,
        instance,
        depth,
        normal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodings() {
        assert_eq!(encode_normal([0.0, 0.0, -1.0]), [128, 128, 0]);
        assert_eq!(depth_to_mm(2.0), 2000);
        assert_eq!(depth_to_mm(f32::INFINITY), 0);
        assert_eq!(depth_to_mm(100.0), 65535);
        let n = decode_normal([128, 128, 0]);
        assert!((n[2] + 1.0).abs() < 1e-4);
    }
}
