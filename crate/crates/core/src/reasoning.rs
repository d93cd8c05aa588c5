//! Commonsense likelihood of a layout.
//!
//! Every unordered pair of placements contributes a pose factor, a location
//! factor and a co-occurrence factor; the layout score is the sum of their
//! logs. A zero factor is clamped to [`ZERO_CLAMP`] so the sum stays finite
//! while still forcing rejection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{KnowledgeBase, ReasoningConfig};
use crate::layout::{Layout, Placement};

pub const ZERO_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFactors {
    pub i: usize,
    pub j: usize,
    pub k_p: f64,
    pub k_l: f64,
    pub k_r: f64,
}

impl PairFactors {
    pub fn log_sum(&self) -> f64 {
        clamped_ln(self.k_p) + clamped_ln(self.k_l) + clamped_ln(self.k_r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    pub pairs: Vec<PairFactors>,
    pub log_k: f64,
    pub accepted: bool,
}

impl LikelihoodReport {
    /// `log_k` divided by the pair count (at least 1).
    pub fn normalized(&self) -> f64 {
        self.log_k / self.pairs.len().max(1) as f64
    }
}

pub fn clamped_ln(x: f64) -> f64 {
    x.max(ZERO_CLAMP).ln()
}

fn pose_density(p: &Placement, kb: &KnowledgeBase) -> Result<f64> {
    kb.pose_density(p.category(), &p.pose)
}

fn location_density(p: &Placement, layout: &Layout, kb: &KnowledgeBase) -> Result<f64> {
    kb.location_density(p.category(), &p.location, p.surface.as_deref(), &layout.scene)
}

/// `K_p = D_p[p1|c1] * D_p[p2|c2]`.
pub fn pair_pose_likelihood(a: &Placement, b: &Placement, kb: &KnowledgeBase) -> Result<f64> {
    Ok(pose_density(a, kb)? * pose_density(b, kb)?)
}

/// `K_l = D_l[l1|c1] * D_l[l2|c2]`.
pub fn pair_location_likelihood(
    a: &Placement,
    b: &Placement,
    layout: &Layout,
    kb: &KnowledgeBase,
) -> Result<f64> {
    Ok(location_density(a, layout, kb)? * location_density(b, layout, kb)?)
}

/// Co-occurrence factor from category pair and center distance: a Gaussian
/// of the offset from the suggested distance when the pair's occurrence
/// probability exceeds `gamma`, otherwise 1.
pub fn relation_factor(
    kb: &KnowledgeBase,
    config: &ReasoningConfig,
    cat_a: &str,
    cat_b: &str,
    distance: f64,
) -> Result<f64> {
    for c in [cat_a, cat_b] {
        if !kb.has_category(c) {
            return Err(Error::UnknownCategory(c.to_string()));
        }
    }
    match kb.relations.get(cat_a, cat_b) {
        Some(rel) if rel.occ_prob > config.gamma => {
            let off = distance - rel.sugg_dist;
            Ok((-(off * off) / (2.0 * config.sigma * config.sigma)).exp())
        }
        _ => Ok(1.0),
    }
}

pub fn pair_relation_likelihood(
    a: &Placement,
    b: &Placement,
    kb: &KnowledgeBase,
    config: &ReasoningConfig,
) -> Result<f64> {
    let d = (a.location - b.location).norm();
    relation_factor(kb, config, a.category(), b.category(), d)
}

/// Scores every unordered placement pair. `accepted` is left false; see
/// [`commonsense_accept`].
pub fn layout_likelihood(
    layout: &Layout,
    kb: &KnowledgeBase,
    config: &ReasoningConfig,
) -> Result<LikelihoodReport> {
    let ps = &layout.placements;
    let pose: Vec<f64> = ps.iter().map(|p| pose_density(p, kb)).collect::<Result<_>>()?;
    let loc: Vec<f64> = ps
        .iter()
        .map(|p| location_density(p, layout, kb))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::with_capacity(ps.len() * ps.len().saturating_sub(1) / 2);
    let mut log_k = 0.0;
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            let f = PairFactors {
                i,
                j,
                k_p: pose[i] * pose[j],
                k_l: loc[i] * loc[j],
                k_r: pair_relation_likelihood(&ps[i], &ps[j], kb, config)?,
            };
            log_k += f.log_sum();
            pairs.push(f);
        }
    }
    Ok(LikelihoodReport {
        pairs,
        log_k,
        accepted: false,
    })
}

/// Accepts when the per-pair normalized log-likelihood reaches `threshold`.
pub fn commonsense_accept(report: &LikelihoodReport, threshold: f64) -> bool {
    report.normalized() >= threshold
}

/// Nearest-rank percentile (0..=100) of normalized log-likelihoods.
pub fn calibrate_threshold(pilot: &[LikelihoodReport], percentile: f64) -> Result<f64> {
    if pilot.is_empty() {
        return Err(Error::Empty("calibration pilot batch"));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::Validation(format!("percentile {percentile} outside [0,100]")));
    }
    let mut values: Vec<f64> = pilot.iter().map(LikelihoodReport::normalized).collect();
    values.sort_by(f64::total_cmp);
    Ok(nearest_rank(&values, percentile))
}

/// Nearest-rank percentile of sorted values.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}
