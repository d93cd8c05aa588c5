//! COCO-style instance annotations derived from the segmentation maps.
//!
//! Masks default to uncompressed run-length encoding in COCO's column-major
//! order (runs alternate starting with background). The polygon option
//! emits one rectangle per horizontal pixel run, which is lossless on the
//! pixel grid.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{manifest_dir, DatasetManifest};
use crate::error::{Error, Result};
use crate::imageio::read_png;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFormat {
    #[default]
    Rle,
    Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    Rle(Rle),
    Polygons(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
    pub supercategory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub segmentation: Segmentation,
    pub area: u64,
    /// `[x, y, width, height]` in pixels.
    pub bbox: [u32; 4],
    pub iscrowd: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDataset {
    pub images: Vec<CocoImage>,
    pub categories: Vec<CocoCategory>,
    pub annotations: Vec<CocoAnnotation>,
}

/// Column-major run lengths of a row-major `width x height` mask.
pub fn rle_encode(mask: &[bool], width: u32, height: u32) -> Rle {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for x in 0..width {
        for y in 0..height {
            let v = mask[(y * width + x) as usize];
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    Rle {
        size: [height, width],
        counts,
    }
}

/// Row-major mask from [`rle_encode`] output.
pub fn rle_decode(rle: &Rle) -> Result<Vec<bool>> {
    let [h, w] = rle.size;
    let n = (h * w) as usize;
    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if total != n as u64 {
        return Err(Error::Validation(format!("RLE covers {total} pixels, image has {n}")));
    }
    let mut mask = vec![false; n];
    let mut k = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let on = i % 2 == 1;
        for _ in 0..c {
            if on {
                let (x, y) = (k as u32 / h, k as u32 % h);
                mask[(y * w + x) as usize] = true;
            }
            k += 1;
        }
    }
    Ok(mask)
}

/// One rectangle `[x0,y0, x1,y0, x1,y1, x0,y1]` per horizontal run.
pub fn run_polygons(mask: &[bool], width: u32, height: u32) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for y in 0..height {
        let row = &mask[(y * width) as usize..((y + 1) * width) as usize];
        let mut x = 0;
        while x < width as usize {
            if !row[x] {
                x += 1;
                continue;
            }
            let start = x;
            while x < width as usize && row[x] {
                x += 1;
            }
            let (x0, x1, y0, y1) = (start as f64, x as f64, y as f64, y as f64 + 1.0);
            out.push(vec![x0, y0, x1, y0, x1, y1, x0, y1]);
        }
    }
    out
}

/// Pixel extents `[x, y, w, h]` of a non-empty mask.
pub fn mask_bbox(mask: &[bool], width: u32) -> Option<[u32; 4]> {
    let mut b: Option<[u32; 4]> = None;
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (i as u32 % width, i as u32 / width);
        b = Some(match b {
            None => [x, y, x, y],
            Some([x0, y0, x1, y1]) => [x0.min(x), y0.min(y), x1.max(x), y1.max(y)],
        });
    }
    b.map(|[x0, y0, x1, y1]| [x0, y0, x1 - x0 + 1, y1 - y0 + 1])
}

/// Reads a sample's segmentation map as instance ids.
pub fn read_seg(path: &Path) -> Result<(u32, u32, Vec<u16>)> {
    let img = read_png(path)?;
    if img.channels != 1 || img.bit_depth != 16 {
        return Err(Error::Image {
            path: path.to_path_buf(),
            msg: format!(
                "corrupt segmentation map: expected 16-bit gray, got {} channel(s) at {} bits",
                img.channels, img.bit_depth
            ),
        });
    }
    Ok((img.width, img.height, img.samples))
}

/// Builds the annotation document for every sample of a manifest.
pub fn build_coco(manifest_path: &Path, format: MaskFormat) -> Result<CocoDataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_dir(manifest_path);
    let per_sample: Vec<(CocoImage, Vec<CocoAnnotation>)> = manifest
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let image_id = i as u64 + 1;
            let seg_path = base.join(&s.files[1]);
            let (w, h, ids) = read_seg(&seg_path)?;
            let known: BTreeMap<u16, &str> = s.instances.iter().map(|x| (x.instance, x.category.as_str())).collect();
            if let Some(bad) = ids.iter().find(|&&id| id != 0 && !known.contains_key(&id)) {
                return Err(Error::Image {
                    path: seg_path.clone(),
                    msg: format!("corrupt segmentation map: instance {bad} not in sample table"),
                });
            }
            let mut anns = Vec::new();
            for inst in &s.instances {
                let mask: Vec<bool> = ids.iter().map(|&v| v == inst.instance).collect();
                let Some(bbox) = mask_bbox(&mask, w) else { continue };
                let category_id = manifest
                    .category_id(&inst.category)
                    .ok_or_else(|| Error::UnknownCategory(inst.category.clone()))?;
                let segmentation = match format {
                    MaskFormat::Rle => Segmentation::Rle(rle_encode(&mask, w, h)),
                    MaskFormat::Polygon => Segmentation::Polygons(run_polygons(&mask, w, h)),
                };
                anns.push(CocoAnnotation {
                    id: 0,
                    image_id,
                    category_id,
                    segmentation,
                    area: mask.iter().filter(|&&m| m).count() as u64,
                    bbox,
                    iscrowd: 0,
                });
            }
            let image = CocoImage {
                id: image_id,
                file_name: s.files[0].clone(),
                width: w,
                height: h,
            };
            Ok((image, anns))
        })
        .collect::<Result<_>>()?;
    let mut images = Vec::with_capacity(per_sample.len());
    let mut annotations = Vec::new();
    for (img, anns) in per_sample {
        images.push(img);
        for mut a in anns {
            a.id = annotations.len() as u64 + 1;
            annotations.push(a);
        }
    }
    Ok(CocoDataset {
        images,
        categories: manifest
            .categories
            .iter()
            .map(|c| CocoCategory {
                id: c.id,
                name: c.name.clone(),
                supercategory: String::new(),
            })
            .collect(),
        annotations,
    })
}

pub fn cmd_export_coco(manifest_path: &Path, out: &Path, format: MaskFormat) -> Result<CocoDataset> {
    let coco = build_coco(manifest_path, format)?;
    let text = serde_json::to_string(&coco).map_err(|e| Error::json(out, e))?;
    std::fs::write(out, text + "\n").map_err(|e| Error::io(out, e))?;
    Ok(coco)
}

pub fn load_coco(path: &Path) -> Result<CocoDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Pixel count of an annotation's mask, decoded from its segmentation.
pub fn annotation_pixels(a: &CocoAnnotation) -> Result<u64> {
    match &a.segmentation {
        Segmentation::Rle(r) => Ok(rle_decode(r)?.iter().filter(|&&m| m).count() as u64),
        Segmentation::Polygons(ps) => Ok(ps
            .iter()
            .map(|p| ((p[2] - p[0]) * (p[5] - p[1])).round() as u64)
            .sum()),
    }
}
