mod common;

use std::collections::BTreeMap;
use std::path::Path;

use geoscene::dataset::coco::{build_coco, read_seg, MaskFormat, Segmentation};
use geoscene::dataset::report::{cmd_stats, recount, validate_dataset};
use geoscene::dataset::{cmd_generate, manifest_dir, DatasetManifest};
use geoscene::imageio::write_gray16;
use geoscene::layoutgen::generate_vec;
use geoscene::render::{decode_sample, encode_sample, rasterize, sample_camera};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Column-major COCO counts back to a row-major mask.
fn unrle(counts: &[u32], w: usize, h: usize) -> Vec<bool> {
    let mut col = Vec::with_capacity(w * h);
    for (k, &c) in counts.iter().enumerate() {
        col.extend(std::iter::repeat_n(k % 2 == 1, c as usize));
    }
    assert_eq!(col.len(), w * h);
    let mut out = vec![false; w * h];
    for x in 0..w {
        for y in 0..h {
            out[y * w + x] = col[x * h + y];
        }
    }
    out
}

/// Pixel centers covered by any of the polygons, each treated as a generic
/// simple polygon (even-odd crossing test).
fn unpoly(polys: &[Vec<f64>], w: usize, h: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    for p in polys {
        let pts: Vec<(f64, f64)> = p.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let (xmin, xmax) = pts.iter().fold((f64::MAX, f64::MIN), |a, q| (a.0.min(q.0), a.1.max(q.0)));
        let (ymin, ymax) = pts.iter().fold((f64::MAX, f64::MIN), |a, q| (a.0.min(q.1), a.1.max(q.1)));
        for y in ymin.floor().max(0.0) as usize..(ymax.ceil() as usize).min(h) {
            for x in xmin.floor().max(0.0) as usize..(xmax.ceil() as usize).min(w) {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut inside = false;
                for i in 0..pts.len() {
                    let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                    if (a.1 > py) != (b.1 > py) && px < a.0 + (py - a.1) / (b.1 - a.1) * (b.0 - a.0) {
                        inside = !inside;
                    }
                }
                if inside {
                    assert!(!out[y * w + x], "polygons overlap at ({x},{y})");
                    out[y * w + x] = true;
                }
            }
        }
    }
    out
}

fn generated(count: usize) -> (tempfile::TempDir, std::path::PathBuf) {
    let (dir, project) = common::demo_project();
    let out = dir.path().join("ds");
    let (m, _) = cmd_generate(&project, count, &out).unwrap();
    assert!(m.complete);
    (dir, out.join("manifest.json"))
}

fn seg_of(manifest: &Path, stem_files: &[String]) -> (usize, usize, Vec<u16>) {
    let (w, h, ids) = read_seg(&manifest_dir(manifest).join(&stem_files[1])).unwrap();
    (w as usize, h as usize, ids)
}

#[test]
fn coco_masks_and_boxes_match_pixel_scan() {
    let (_dir, path) = generated(5);
    let manifest = DatasetManifest::load(&path).unwrap();
    for format in [MaskFormat::Rle, MaskFormat::Polygon] {
        let coco = build_coco(&path, format).unwrap();
        assert_eq!(coco.images.len(), 5);
        let ids: Vec<u64> = coco.annotations.iter().map(|a| a.id).collect();
        assert_eq!(ids, (1..=coco.annotations.len() as u64).collect::<Vec<_>>());
        let mut per_cat: BTreeMap<u32, u64> = BTreeMap::new();
        for (img, s) in coco.images.iter().zip(&manifest.samples) {
            let (w, h, seg) = seg_of(&path, &s.files);
            assert_eq!((img.width as usize, img.height as usize), (w, h));
            let anns: Vec<_> = coco.annotations.iter().filter(|a| a.image_id == img.id).collect();
            let mut covered = vec![false; w * h];
            let mut seen = 0;
            for inst in &s.instances {
                let truth: Vec<bool> = seg.iter().map(|&v| v == inst.instance).collect();
                let n = truth.iter().filter(|&&t| t).count() as u64;
                let cat = manifest.category_id(&inst.category).unwrap();
                let matching: Vec<_> = anns
                    .iter()
                    .filter(|a| {
                        let m = match &a.segmentation {
                            Segmentation::Rle(r) => {
                                assert_eq!(r.size, [h as u32, w as u32]);
                                unrle(&r.counts, w, h)
                            }
                            Segmentation::Polygons(p) => unpoly(p, w, h),
                        };
                        m == truth
                    })
                    .collect();
                if n == 0 {
                    assert!(matching.is_empty());
                    continue;
                }
                assert_eq!(matching.len(), 1, "instance {} of {}", inst.instance, s.stem);
                let a = matching[0];
                seen += 1;
                assert_eq!(a.category_id, cat);
                assert_eq!(a.area, n);
                let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
                for y in 0..h {
                    for x in 0..w {
                        if truth[y * w + x] {
                            assert!(!covered[y * w + x]);
                            covered[y * w + x] = true;
                            x0 = x0.min(x);
                            y0 = y0.min(y);
                            x1 = x1.max(x);
                            y1 = y1.max(y);
                        }
                    }
                }
                assert_eq!(a.bbox, [x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32]);
                *per_cat.entry(cat).or_default() += 1;
            }
            assert_eq!(seen, anns.len());
            for (i, &c) in covered.iter().enumerate() {
                assert_eq!(c, seg[i] != 0);
            }
        }
        let expect: BTreeMap<u32, u64> = manifest
            .instance_counts
            .iter()
            .filter(|(_, &v)| v > 0)
            .map(|(k, &v)| (manifest.category_id(k).unwrap(), v))
            .collect();
        assert_eq!(per_cat, expect);
    }
}

#[test]
fn recount_matches_manifest() {
    let (_dir, path) = generated(4);
    let manifest = DatasetManifest::load(&path).unwrap();
    let counts = recount(&manifest, &manifest_dir(&path)).unwrap();
    let mut scan: BTreeMap<String, u64> = BTreeMap::new();
    for s in &manifest.samples {
        let (_, _, seg) = seg_of(&path, &s.files);
        for inst in &s.instances {
            if seg.contains(&inst.instance) {
                *scan.entry(inst.category.clone()).or_default() += 1;
            }
        }
    }
    assert_eq!(counts, scan);
    let nonzero: BTreeMap<String, u64> =
        manifest.instance_counts.iter().filter(|(_, &v)| v > 0).map(|(k, &v)| (k.clone(), v)).collect();
    assert_eq!(counts, nonzero);
    assert!(validate_dataset(&path).unwrap().ok);
    let stats = cmd_stats(&path, true).unwrap();
    assert_eq!(stats.recount_matches, Some(true));
    assert_eq!(stats.instances, scan.values().sum::<u64>());
}

#[test]
fn background_only_sample_has_no_annotations() {
    let (_dir, path) = generated(2);
    let manifest = DatasetManifest::load(&path).unwrap();
    let s = &manifest.samples[1];
    let (w, h, _) = seg_of(&path, &s.files);
    write_gray16(&manifest_dir(&path).join(&s.files[1]), w as u32, h as u32, &vec![0; w * h]).unwrap();
    let coco = build_coco(&path, MaskFormat::Rle).unwrap();
    assert_eq!(coco.images.len(), 2);
    assert!(coco.annotations.iter().all(|a| a.image_id == 1));
    assert!(!coco.annotations.is_empty());
    // The manifest still claims the erased instances.
    assert!(!validate_dataset(&path).unwrap().ok);
}

#[test]
fn empty_dataset_reports_zeros() {
    let (_dir, path) = generated(0);
    let stats = cmd_stats(&path, true).unwrap();
    assert_eq!(stats.samples, 0);
    assert_eq!(stats.instances, 0);
    assert_eq!(stats.average_per_category, 0.0);
    assert_eq!(stats.recount_matches, Some(true));
    let coco = build_coco(&path, MaskFormat::Rle).unwrap();
    assert!(coco.images.is_empty() && coco.annotations.is_empty());
    assert!(!coco.categories.is_empty());
}

#[test]
fn encode_decode_round_trip() {
    let (dir, project) = common::demo_project();
    let (layouts, _) = generate_vec(&project.kb, &project.scene, &project.pool, &project.gen_config(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0;
    for (k, g) in layouts.iter().enumerate() {
        let camera = sample_camera(&project.scene, &mut rng, &project.config.camera).unwrap();
        let s = rasterize(&g.layout, &camera).unwrap();
        let stem = format!("rt{k}");
        encode_sample(&s, dir.path(), &stem, None).unwrap();
        let d = decode_sample(dir.path(), &stem).unwrap();
        assert_eq!(d.meta.camera, camera);
        assert_eq!(d.meta.instances, s.instances);
        assert_eq!(d.rgb, s.rgb);
        assert_eq!(d.instance, s.instance);
        for i in 0..s.depth.len() {
            if !s.depth[i].is_finite() {
                assert!(d.depth[i].is_infinite());
                assert_eq!(d.normal[i], [0.0; 3]);
                continue;
            }
            hits += 1;
            assert!(s.depth[i] < 65.0);
            assert!((d.depth[i] - s.depth[i]).abs() <= 0.5e-3 + 1e-6, "depth {} vs {}", d.depth[i], s.depth[i]);
            let (a, b) = (s.normal[i], d.normal[i]);
            let cos = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) as f64;
            let na = ((a[0] * a[0] + a[1] * a[1] + a[2] * a[2]) as f64).sqrt();
            let nb = ((b[0] * b[0] + b[1] * b[1] + b[2] * b[2]) as f64).sqrt();
            let angle = (cos / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle <= 0.5, "normal off by {angle} deg");
        }
    }
    assert!(hits > 1000);
}
