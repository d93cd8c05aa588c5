//! How much do annotator disagreements move the generated distribution?
//!
//! Each knowledge base generates a batch of layouts; batches are summarized
//! by three histograms (category co-occurrence, keypose selection, pairwise
//! distance) and compared with the Jensen-Shannon divergence in bits.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{candidate_rng, generate_vec, GenConfig, ModelPool};
use crate::assets::SceneBackground;
use crate::error::{Error, Result};
use crate::knowledge::KnowledgeBase;
use crate::layout::Layout;
use crate::reasoning::nearest_rank;

pub const FEATURES: [&str; 3] = ["co_occurrence", "keypose", "distance"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    /// Layouts generated per base.
    pub batch: usize,
    /// Distance histogram bins over `[0, scene_scale]`.
    pub distance_bins: usize,
    /// Bootstrap resample pairs for the noise floor.
    pub bootstrap: usize,
    /// Percentile of the bootstrap divergences reported as the floor.
    pub floor_percentile: f64,
    /// Give base `i` the seed `seed + i` instead of sharing one seed.
    pub distinct_seeds: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            batch: 500,
            distance_bins: 20,
            bootstrap: 200,
            floor_percentile: 95.0,
            distinct_seeds: false,
        }
    }
}

/// Feature counts contributed by one layout, keyed per family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayoutFeatures {
    pub families: [BTreeMap<String, f64>; 3],
}

pub fn layout_features(layout: &Layout, distance_bins: usize) -> LayoutFeatures {
    let mut f = LayoutFeatures::default();
    let ps = &layout.placements;
    let scale = layout.scene.scene_scale;
    let bins = distance_bins.max(1);
    for (i, a) in ps.iter().enumerate() {
        let kp = format!("{}#{}", a.category(), a.keypose.map_or(-1, |k| k as i64));
        *f.families[1].entry(kp).or_default() += 1.0;
        for b in &ps[i + 1..] {
            let (x, y) = if a.category() <= b.category() {
                (a.category(), b.category())
            } else {
                (b.category(), a.category())
            };
            *f.families[0].entry(format!("{x}|{y}")).or_default() += 1.0;
            let d = (a.location - b.location).norm();
            let bin = ((d / scale * bins as f64) as usize).min(bins - 1);
            *f.families[2].entry(format!("{bin:03}")).or_default() += 1.0;
        }
    }
    f
}

/// Normalized histogram of a family over a multiset of layouts.
pub fn histogram<'a>(
    layouts: impl IntoIterator<Item = &'a LayoutFeatures>,
    family: usize,
) -> BTreeMap<String, f64> {
    let mut h: BTreeMap<String, f64> = BTreeMap::new();
    for l in layouts {
        for (k, v) in &l.families[family] {
            *h.entry(k.clone()).or_default() += v;
        }
    }
    let total: f64 = h.values().sum();
    if total > 0.0 {
        h.values_mut().for_each(|v| *v /= total);
    }
    h
}

/// Jensen-Shannon divergence in bits; 0 when both are empty.
pub fn jsd(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>) -> f64 {
    let mut d = 0.0;
    let keys = p.keys().chain(q.keys().filter(|k| !p.contains_key(*k)));
    for k in keys {
        let a = p.get(k).copied().unwrap_or(0.0);
        let b = q.get(k).copied().unwrap_or(0.0);
        let m = 0.5 * (a + b);
        if a > 0.0 {
            d += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            d += 0.5 * b * (b / m).log2();
        }
    }
    d.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub bases: usize,
    pub batch: usize,
    /// Per feature family, an n x n divergence matrix.
    pub divergence: BTreeMap<String, Vec<Vec<f64>>>,
    /// Mean of the family matrices.
    pub combined: Vec<Vec<f64>>,
    /// Bootstrap sampling-noise floor per family, from the first base.
    pub noise_floor: BTreeMap<String, f64>,
    pub combined_noise_floor: f64,
}

impl SensitivityReport {
    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.combined.len();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.combined[i][j]);
                }
            }
        }
        m
    }
}

/// Features of `batch` generated layouts per base.
pub fn batch_features(
    bases: &[KnowledgeBase],
    scene: &Arc<SceneBackground>,
    pool: &ModelPool,
    config: &GenConfig,
    sens: &SensitivityConfig,
) -> Result<Vec<Vec<LayoutFeatures>>> {
    bases
        .iter()
        .enumerate()
        .map(|(i, kb)| {
            let mut cfg = config.clone();
            if sens.distinct_seeds {
                cfg.seed = config.seed.wrapping_add(i as u64);
            }
            let (layouts, _) = generate_vec(kb, scene, pool, &cfg, sens.batch)?;
            Ok(layouts
                .iter()
                .map(|g| layout_features(&g.layout, sens.distance_bins))
                .collect())
        })
        .collect()
}

/// Bootstrap floor: divergence between two resamples (with replacement)
/// of one batch, at `percentile`, per family and for the family mean.
pub fn bootstrap_floor<R: Rng + ?Sized>(
    batch: &[LayoutFeatures],
    resamples: usize,
    percentile: f64,
    rng: &mut R,
) -> ([f64; 3], f64) {
    let n = batch.len();
    let mut per: [Vec<f64>; 3] = Default::default();
    let mut combined = Vec::with_capacity(resamples);
    if n == 0 || resamples == 0 {
        return ([0.0; 3], 0.0);
    }
    for _ in 0..resamples {
        let a: Vec<&LayoutFeatures> = (0..n).map(|_| &batch[rng.random_range(0..n)]).collect();
        let b: Vec<&LayoutFeatures> = (0..n).map(|_| &batch[rng.random_range(0..n)]).collect();
        let mut sum = 0.0;
        for (f, v) in per.iter_mut().enumerate() {
            let d = jsd(&histogram(a.iter().copied(), f), &histogram(b.iter().copied(), f));
            v.push(d);
            sum += d;
        }
        combined.push(sum / 3.0);
    }
    let pick = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        nearest_rank(&v, percentile)
    };
    let [p0, p1, p2] = per;
    ([pick(p0), pick(p1), pick(p2)], pick(combined))
}

pub fn sensitivity_report(
    bases: &[KnowledgeBase],
    scene: &Arc<SceneBackground>,
    pool: &ModelPool,
    config: &GenConfig,
    sens: &SensitivityConfig,
) -> Result<SensitivityReport> {
    if bases.is_empty() {
        return Err(Error::Validation("sensitivity needs at least one knowledge base".into()));
    }
    if sens.batch == 0 {
        return Err(Error::Validation("sensitivity batch must be >= 1".into()));
    }
    let feats = batch_features(bases, scene, pool, config, sens)?;
    let n = bases.len();
    let hists: Vec<[BTreeMap<String, f64>; 3]> = feats
        .iter()
        .map(|b| [histogram(b, 0), histogram(b, 1), histogram(b, 2)])
        .collect();
    let mut divergence = BTreeMap::new();
    let mut combined = vec![vec![0.0; n]; n];
    for (f, name) in FEATURES.iter().enumerate() {
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let d = jsd(&hists[i][f], &hists[j][f]);
                m[i][j] = d;
                m[j][i] = d;
                combined[i][j] += d / 3.0;
                combined[j][i] += d / 3.0;
            }
        }
        divergence.insert(name.to_string(), m);
    }
    let mut rng = candidate_rng(config.seed, u64::MAX);
    let (floor, combined_floor) = bootstrap_floor(&feats[0], sens.bootstrap, sens.floor_percentile, &mut rng);
    Ok(SensitivityReport {
        bases: n,
        batch: sens.batch,
        divergence,
        combined,
        noise_floor: FEATURES.iter().map(|s| s.to_string()).zip(floor).collect(),
        combined_noise_floor: combined_floor,
    })
}
