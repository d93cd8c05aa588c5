//! Reports over a packaged dataset: integrity check, instance statistics,
//! loss evaluation, contact-sheet preview and annotator sensitivity.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coco::read_seg;
use super::{manifest_dir, DatasetManifest, LossConfig, Project};
use crate::error::{Error, Result};
use crate::geoloss::{
    geo_guided_loss, lsgan_losses, pmse_loss, reconstruction_loss_with, total_objective, ImageTensor, LossWeights,
    RecArity,
};
use crate::imageio::{read_png, write_png, PixelFormat};
use crate::layoutgen::sensitivity::{sensitivity_report, SensitivityReport};
use crate::layoutgen::simulate_annotators;
use crate::render::{decode_sample, instance_color, DecodedSample};

/// Visible instances per category, recounted from the segmentation maps.
pub fn recount(manifest: &DatasetManifest, base: &Path) -> Result<BTreeMap<String, u64>> {
    let per: Vec<Vec<String>> = manifest
        .samples
        .par_iter()
        .map(|s| {
            let path = base.join(&s.files[1]);
            let (_, _, ids) = read_seg(&path)?;
            let present: BTreeSet<u16> = ids.into_iter().filter(|&i| i != 0).collect();
            present
                .into_iter()
                .map(|id| {
                    s.instances
                        .iter()
                        .find(|x| x.instance == id)
                        .map(|x| x.category.clone())
                        .ok_or_else(|| Error::Image {
                            path: path.clone(),
                            msg: format!("corrupt segmentation map: instance {id} not in sample table"),
                        })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut counts = BTreeMap::new();
    for cat in per.into_iter().flatten() {
        *counts.entry(cat).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub missing_files: Vec<String>,
    /// `(category, manifest count, recount)` wherever they differ.
    pub count_mismatches: Vec<(String, u64, u64)>,
    pub errors: Vec<String>,
    pub complete: bool,
    pub ok: bool,
}

/// Checks that every referenced file exists and that the manifest's
/// instance counts match a recount of the segmentation maps.
pub fn validate_dataset(manifest_path: &Path) -> Result<ValidationReport> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_dir(manifest_path);
    let missing_files: Vec<String> = manifest
        .samples
        .iter()
        .flat_map(|s| s.files.iter())
        .filter(|f| !base.join(f).is_file())
        .cloned()
        .collect();
    let mut errors = Vec::new();
    let mut count_mismatches = Vec::new();
    if missing_files.is_empty() {
        match recount(&manifest, &base) {
            Ok(counts) => {
                let cats: BTreeSet<&String> = counts.keys().chain(manifest.instance_counts.keys()).collect();
                for c in cats {
                    let a = manifest.instance_counts.get(c).copied().unwrap_or(0);
                    let b = counts.get(c).copied().unwrap_or(0);
                    if a != b {
                        count_mismatches.push((c.clone(), a, b));
                    }
                }
            }
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !manifest.stats.balanced() {
        errors.push("generation stats do not add up".into());
    }
    let ok = missing_files.is_empty() && count_mismatches.is_empty() && errors.is_empty();
    Ok(ValidationReport {
        samples: manifest.samples.len(),
        missing_files,
        count_mismatches,
        errors,
        complete: manifest.complete,
        ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub samples: usize,
    pub instances: u64,
    pub per_category: BTreeMap<String, u64>,
    /// Mean over categories with at least one instance.
    pub average_per_category: f64,
    pub per_scene: BTreeMap<String, u64>,
    /// Modeled labeling time of the priors (seconds).
    pub annotation_cost_s: f64,
    /// Whether a recount of the segmentation maps matches, when checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recount_matches: Option<bool>,
}

pub fn average_per_category(counts: &BTreeMap<String, u64>) -> f64 {
    let nonzero: Vec<u64> = counts.values().copied().filter(|&c| c > 0).collect();
    if nonzero.is_empty() {
        0.0
    } else {
        nonzero.iter().sum::<u64>() as f64 / nonzero.len() as f64
    }
}

pub fn cmd_stats(manifest_path: &Path, verify: bool) -> Result<StatsReport> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let total: u64 = manifest.instance_counts.values().sum();
    let recount_matches = if verify {
        Some(recount(&manifest, &manifest_dir(manifest_path))? == nonzero(&manifest.instance_counts))
    } else {
        None
    };
    Ok(StatsReport {
        samples: manifest.samples.len(),
        instances: total,
        per_category: manifest.instance_counts.clone(),
        average_per_category: average_per_category(&manifest.instance_counts),
        per_scene: BTreeMap::from([(manifest.scene.clone(), total)]),
        annotation_cost_s: manifest.stats.annotation_cost_s,
        recount_matches,
    })
}

fn nonzero(m: &BTreeMap<String, u64>) -> BTreeMap<String, u64> {
    m.iter().filter(|(_, &v)| v > 0).map(|(k, v)| (k.clone(), *v)).collect()
}

/// 8-bit RGB to `[-1, 1]`.
pub fn rgb_tensor(rgb: &[[u8; 3]], width: u32, height: u32) -> Result<ImageTensor> {
    let data = rgb.iter().flatten().map(|&c| c as f64 / 127.5 - 1.0).collect();
    ImageTensor::new(height as usize, width as usize, 3, data)
}

/// Foreground indicator: 1 on instances, -1 on background.
pub fn seg_tensor(ids: &[u16], width: u32, height: u32) -> Result<ImageTensor> {
    let data = ids.iter().map(|&i| if i != 0 { 1.0 } else { -1.0 }).collect();
    ImageTensor::new(height as usize, width as usize, 1, data)
}

pub fn normal_tensor(n: &[[f32; 3]], width: u32, height: u32) -> Result<ImageTensor> {
    let data = n.iter().flatten().map(|&c| c as f64).collect();
    ImageTensor::new(height as usize, width as usize, 3, data)
}

/// Depth mapped from `[0, far]` to `[-1, 1]`; no-hit maps to 1.
pub fn depth_tensor(d: &[f32], far: f64, width: u32, height: u32) -> Result<ImageTensor> {
    let data = d
        .iter()
        .map(|&z| if z.is_finite() { (z as f64 / far).min(1.0) * 2.0 - 1.0 } else { 1.0 })
        .collect();
    ImageTensor::new(height as usize, width as usize, 1, data)
}

fn geometry_tensors(s: &DecodedSample) -> Result<[ImageTensor; 3]> {
    let (w, h) = (s.meta.width, s.meta.height);
    Ok([
        seg_tensor(&s.instance, w, h)?,
        normal_tensor(&s.normal, w, h)?,
        depth_tensor(&s.depth, s.meta.camera.far, w, h)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub gan: f64,
    pub pmse: f64,
    pub rec: f64,
    pub geo: f64,
    pub weights: LossWeights,
    pub rec_arity: RecArity,
    pub total: f64,
}

/// Optional network outputs for [`cmd_losses`].
#[derive(Debug, Clone, Copy, Default)]
pub struct LossExtras<'a> {
    /// Predicted (seg, normal, depth) maps as a sample file set `(dir, stem)`.
    pub predicted: Option<(&'a Path, &'a str)>,
    /// Discriminator scores on the candidate: a 16-bit gray PNG mapped to `[0, 1]`.
    pub fake_scores: Option<&'a Path>,
}

/// Scores a candidate image against a rendered sample. The candidate plays
/// the generated image: PMSE is taken against the rough render and, with
/// [`RecArity::WithRough`], it is also the rough-image reconstruction.
/// Geometry maps without predictions reconstruct as the ground truth.
pub fn cmd_losses(
    dir: &Path,
    stem: &str,
    candidate: &Path,
    config: &LossConfig,
    extras: LossExtras<'_>,
) -> Result<LossReport> {
    config.weights.validate()?;
    let gt = decode_sample(dir, stem)?;
    let (w, h) = (gt.meta.width, gt.meta.height);
    let cand = read_png(candidate)?;
    if (cand.width, cand.height) != (w, h) {
        return Err(Error::Shape(format!(
            "candidate is {}x{}, sample is {w}x{h}",
            cand.width, cand.height
        )));
    }
    let rough = rgb_tensor(&gt.rgb, w, h)?;
    let generated = rgb_tensor(&cand.to_rgb8(), w, h)?;
    let gt_geo = geometry_tensors(&gt)?;
    let pred_geo = match extras.predicted {
        Some((d, s)) => {
            let p = decode_sample(d, s)?;
            geometry_tensors(&p)?
        }
        None => gt_geo.clone(),
    };
    let pmse = pmse_loss(&rough, &generated)?;
    let rec = match config.rec_arity {
        RecArity::Geometric => reconstruction_loss_with(
            RecArity::Geometric,
            &[&pred_geo[0], &pred_geo[1], &pred_geo[2]],
            &[&gt_geo[0], &gt_geo[1], &gt_geo[2]],
        )?,
        RecArity::WithRough => reconstruction_loss_with(
            RecArity::WithRough,
            &[&generated, &pred_geo[0], &pred_geo[1], &pred_geo[2]],
            &[&rough, &gt_geo[0], &gt_geo[1], &gt_geo[2]],
        )?,
    };
    let geo = geo_guided_loss(
        [&pred_geo[0], &pred_geo[1], &pred_geo[2]],
        [&gt_geo[0], &gt_geo[1], &gt_geo[2]],
    )?;
    let gan = match extras.fake_scores {
        Some(p) => {
            let img = read_png(p)?;
            let scale = if img.bit_depth == 16 { 65535.0 } else { 255.0 };
            let scores = ImageTensor::new(
                img.height as usize,
                img.width as usize,
                img.channels,
                img.samples.iter().map(|&v| v as f64 / scale).collect(),
            )?;
            lsgan_losses(&scores, &scores)?.1
        }
        None => 0.0,
    };
    Ok(LossReport {
        gan,
        pmse,
        rec,
        geo,
        weights: config.weights,
        rec_arity: config.rec_arity,
        total: total_objective(gan, pmse, rec, geo, &config.weights),
    })
}

/// Contact sheet: one row per sample with rgb, instance, depth and normal tiles.
pub fn cmd_preview(manifest_path: &Path, out: &Path, max_samples: usize) -> Result<(u32, u32)> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_dir(manifest_path);
    let chosen: Vec<_> = manifest.samples.iter().take(max_samples.max(1)).collect();
    if chosen.is_empty() {
        return Err(Error::Empty("dataset has no samples"));
    }
    let decoded: Vec<DecodedSample> = chosen
        .par_iter()
        .map(|s| {
            let dir = base.join(Path::new(&s.files[0]).parent().unwrap_or(Path::new("")));
            decode_sample(&dir, &s.stem)
        })
        .collect::<Result<_>>()?;
    let tw = decoded.iter().map(|d| d.meta.width).max().unwrap_or(1);
    let th = decoded.iter().map(|d| d.meta.height).max().unwrap_or(1);
    let (width, height) = (tw * 4, th * decoded.len() as u32);
    let mut sheet = vec![0u8; (width * height * 3) as usize];
    for (row, d) in decoded.iter().enumerate() {
        let (w, h) = (d.meta.width, d.meta.height);
        let max_depth = d.depth.iter().filter(|z| z.is_finite()).fold(0.0f32, |a, &b| a.max(b)).max(1e-6);
        for y in 0..h {
            for x in 0..w {
                let k = (y * w + x) as usize;
                let seg = if d.instance[k] == 0 {
                    [0, 0, 0]
                } else {
                    instance_color(d.instance[k]).map(|c| (c * 255.0) as u8)
                };
                let depth = if d.depth[k].is_finite() {
                    let g = (255.0 * (1.0 - d.depth[k] / max_depth * 0.85)) as u8;
                    [g, g, g]
                } else {
                    [0, 0, 0]
                };
                let n = d.normal[k].map(|c| ((c * 0.5 + 0.5) * 255.0).round() as u8);
                let n = if d.depth[k].is_finite() { n } else { [0, 0, 0] };
                for (col, px) in [d.rgb[k], seg, depth, n].into_iter().enumerate() {
                    let sx = col as u32 * tw + x;
                    let sy = row as u32 * th + y;
                    let o = ((sy * width + sx) * 3) as usize;
                    sheet[o..o + 3].copy_from_slice(&px);
                }
            }
        }
    }
    write_png(out, width, height, PixelFormat::Rgb8, &sheet)?;
    Ok((width, height))
}

/// Simulates `n` annotators around the project's priors and measures how
/// far their generated distributions drift apart.
pub fn cmd_sensitivity(project: &Project, n: usize, noise: f64) -> Result<SensitivityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(project.config.generation.seed);
    let bases = simulate_annotators(&project.kb, n, noise, &mut rng)?;
    sensitivity_report(
        &bases,
        &project.scene,
        &project.pool,
        &project.gen_config(),
        &project.config.sensitivity,
    )
}

/// Combined divergence matrix as CSV.
pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
