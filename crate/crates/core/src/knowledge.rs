//! Annotated priors: per-category keyposes and location anchors, pairwise
//! co-occurrence relations, and the reasoning constants.
//!
//! Densities interpolate the annotations with a max of Gaussian kernels, so
//! an annotated keypose or anchor keeps exactly its annotated probability.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assets::SceneBackground;
use crate::error::{Error, Result};
use crate::geometry::polygon;

pub const DEFAULT_POSE_BANDWIDTH: f64 = 0.3;
pub const DEFAULT_LOCATION_BANDWIDTH_FRACTION: f64 = 0.05;
pub const DEFAULT_SIGMA: f64 = 0.1;
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Unnormalized Gaussian kernel `exp(-d^2 / (2 bw^2))`; a zero bandwidth
/// degenerates to an indicator of `d == 0`.
pub fn gaussian_kernel(d: f64, bandwidth: f64) -> f64 {
    if bandwidth <= 0.0 {
        return if d == 0.0 { 1.0 } else { 0.0 };
    }
    (-(d * d) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Geodesic angle between two rotations, in `[0, pi]`.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let d = a.quaternion() * b.quaternion().conjugate();
    2.0 * d.imag().norm().atan2(d.w.abs())
}

/// Geodesic angle after discounting any rotation about world +Z applied on
/// the left, i.e. `min over yaw of angle(yaw * b, a)`.
pub fn tilt_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let d = a.quaternion() * b.quaternion().conjugate();
    let (w, x, y, z) = (d.w, d.i, d.j, d.k);
    2.0 * (x * x + y * y).sqrt().atan2((w * w + z * z).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypose {
    pub rotation: UnitQuaternion<f64>,
    pub prob: f64,
    /// Yaw about gravity is unconstrained.
    pub yaw_free: bool,
}

impl Keypose {
    pub fn angle_to(&self, q: &UnitQuaternion<f64>) -> f64 {
        if self.yaw_free {
            tilt_angle(q, &self.rotation)
        } else {
            geodesic_angle(q, &self.rotation)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub point: Point3<f64>,
    pub surface: String,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub occ_prob: f64,
    pub sugg_dist: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosePrior {
    pub keyposes: BTreeMap<String, Vec<Keypose>>,
    /// Radians.
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationPrior {
    pub anchors: BTreeMap<String, Vec<Anchor>>,
    /// Meters; `None` means a fraction of the scene scale.
    pub bandwidth: Option<f64>,
}

impl LocationPrior {
    pub fn bandwidth_for(&self, scene: &SceneBackground) -> f64 {
        self.bandwidth
            .unwrap_or(DEFAULT_LOCATION_BANDWIDTH_FRACTION * scene.scene_scale)
    }
}

/// Symmetric pair prior keyed by the sorted category pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationshipPrior {
    pub pairs: BTreeMap<(String, String), Relation>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl RelationshipPrior {
    pub fn insert(&mut self, a: &str, b: &str, rel: Relation) {
        self.pairs.insert(pair_key(a, b), rel);
    }

    pub fn get(&self, a: &str, b: &str) -> Option<&Relation> {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        // BTreeMap<(String, String)> cannot be probed with borrowed tuples.
        self.pairs
            .range((x.to_string(), y.to_string())..)
            .next()
            .filter(|((p, q), _)| p == x && q == y)
            .map(|(_, r)| r)
    }

    /// Absent pairs behave as `occ_prob = 0`.
    pub fn occ_prob(&self, a: &str, b: &str) -> f64 {
        self.get(a, b).map_or(0.0, |r| r.occ_prob)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KThreshold {
    Fixed(f64),
    Calibrate,
}

impl Serialize for KThreshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KThreshold::Fixed(v) => s.serialize_f64(*v),
            KThreshold::Calibrate => s.serialize_str("calibrate"),
        }
    }
}

impl<'de> Deserialize<'de> for KThreshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(KThreshold::Fixed(v)),
            Raw::Text(t) if t == "calibrate" => Ok(KThreshold::Calibrate),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "k_threshold must be a number or \"calibrate\", got {t:?}"
            ))),
        }
    }
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_threshold() -> KThreshold {
    KThreshold::Calibrate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReasoningConfig {
    /// Meters.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Per-pair normalized log-likelihood threshold.
    #[serde(default = "default_threshold")]
    pub k_threshold: KThreshold,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ReasoningConfig {
    fn default() -> Self {
        ReasoningConfig {
            sigma: DEFAULT_SIGMA,
            gamma: DEFAULT_GAMMA,
            k_threshold: KThreshold::Calibrate,
            seed: 0,
        }
    }
}

impl ReasoningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Validation(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!("gamma must be in [0,1], got {}", self.gamma)));
        }
        if let KThreshold::Fixed(t) = self.k_threshold {
            if !t.is_finite() {
                return Err(Error::Validation("k_threshold must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub pose: PosePrior,
    pub location: LocationPrior,
    pub relations: RelationshipPrior,
    pub config: ReasoningConfig,
    /// Annotated model count per category (cost accounting).
    pub models: BTreeMap<String, usize>,
}

// ---- file schema ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyposeRecord {
    /// `[w, x, y, z]`.
    pub quat: [f64; 4],
    pub prob: f64,
    #[serde(default = "yes")]
    pub yaw_free: bool,
}

fn yes() -> bool {
    true
}
fn one_model() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub xyz: [f64; 3],
    pub surface: String,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryRecord {
    #[serde(default = "one_model")]
    pub models: usize,
    pub keyposes: Vec<KeyposeRecord>,
    #[serde(default)]
    pub anchors: Vec<AnchorRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairRecord {
    pub a: String,
    pub b: String,
    pub occ_prob: f64,
    pub sugg_dist_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnowledgeFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_bandwidth_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_bandwidth_m: Option<f64>,
    pub categories: BTreeMap<String, CategoryRecord>,
    #[serde(default)]
    pub pairs: Vec<PairRecord>,
    #[serde(default)]
    pub config: ReasoningConfig,
}

fn check_prob(what: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!("{what}: probability {p} outside [0,1]")));
    }
    Ok(())
}

impl TryFrom<KnowledgeFile> for KnowledgeBase {
    type Error = Error;

    fn try_from(file: KnowledgeFile) -> Result<KnowledgeBase> {
        let bandwidth = file.pose_bandwidth_rad.unwrap_or(DEFAULT_POSE_BANDWIDTH);
        if !(bandwidth.is_finite() && bandwidth >= 0.0) {
            return Err(Error::Validation("pose bandwidth must be >= 0".into()));
        }
        if let Some(b) = file.location_bandwidth_m {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Validation("location bandwidth must be >= 0".into()));
            }
        }
        file.config.validate()?;
        let mut keyposes = BTreeMap::new();
        let mut anchors = BTreeMap::new();
        let mut models = BTreeMap::new();
        for (name, rec) in file.categories {
            if rec.keyposes.is_empty() {
                return Err(Error::Validation(format!("category {name:?} has no keyposes")));
            }
            let mut kps = Vec::with_capacity(rec.keyposes.len());
            for k in rec.keyposes {
                check_prob(&format!("keypose of {name:?}"), k.prob)?;
                let q = Quaternion::new(k.quat[0], k.quat[1], k.quat[2], k.quat[3]);
                if !(q.norm().is_finite() && q.norm() > 1e-9) {
                    return Err(Error::Validation(format!("keypose of {name:?} has zero quaternion")));
                }
                kps.push(Keypose {
                    rotation: UnitQuaternion::from_quaternion(q),
                    prob: k.prob,
                    yaw_free: k.yaw_free,
                });
            }
            let mut ans = Vec::with_capacity(rec.anchors.len());
            for a in rec.anchors {
                check_prob(&format!("anchor of {name:?}"), a.prob)?;
                if !a.xyz.iter().all(|c| c.is_finite()) {
                    return Err(Error::Validation(format!("anchor of {name:?} is not finite")));
                }
                ans.push(Anchor {
                    point: Point3::new(a.xyz[0], a.xyz[1], a.xyz[2]),
                    surface: a.surface,
                    prob: a.prob,
                });
            }
            keyposes.insert(name.clone(), kps);
            anchors.insert(name.clone(), ans);
            models.insert(name, rec.models);
        }
        let mut relations = RelationshipPrior::default();
        for p in file.pairs {
            for c in [&p.a, &p.b] {
                if !keyposes.contains_key(c) {
                    return Err(Error::UnknownCategory(c.clone()));
                }
            }
            check_prob(&format!("pair ({:?}, {:?})", p.a, p.b), p.occ_prob)?;
            if !(p.sugg_dist_m.is_finite() && p.sugg_dist_m >= 0.0) {
                return Err(Error::Validation(format!(
                    "pair ({:?}, {:?}): negative distance {}",
                    p.a, p.b, p.sugg_dist_m
                )));
            }
            relations.insert(
                &p.a,
                &p.b,
                Relation {
                    occ_prob: p.occ_prob,
                    sugg_dist: p.sugg_dist_m,
                },
            );
        }
        Ok(KnowledgeBase {
            pose: PosePrior { keyposes, bandwidth },
            location: LocationPrior {
                anchors,
                bandwidth: file.location_bandwidth_m,
            },
            relations,
            config: file.config,
            models,
        })
    }
}

impl KnowledgeBase {
    pub fn load(path: &Path) -> Result<KnowledgeBase> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: KnowledgeFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        KnowledgeBase::try_from(file)
    }

    pub fn to_file(&self) -> KnowledgeFile {
        let categories = self
            .pose
            .keyposes
            .iter()
            .map(|(name, kps)| {
                let rec = CategoryRecord {
                    models: self.models.get(name).copied().unwrap_or(1),
                    keyposes: kps
                        .iter()
                        .map(|k| {
                            let q = k.rotation.quaternion();
                            KeyposeRecord {
                                quat: [q.w, q.i, q.j, q.k],
                                prob: k.prob,
                                yaw_free: k.yaw_free,
                            }
                        })
                        .collect(),
                    anchors: self.location.anchors[name]
                        .iter()
                        .map(|a| AnchorRecord {
                            xyz: [a.point.x, a.point.y, a.point.z],
                            surface: a.surface.clone(),
                            prob: a.prob,
                        })
                        .collect(),
                };
                (name.clone(), rec)
            })
            .collect();
        let pairs = self
            .relations
            .pairs
            .iter()
            .map(|((a, b), r)| PairRecord {
                a: a.clone(),
                b: b.clone(),
                occ_prob: r.occ_prob,
                sugg_dist_m: r.sugg_dist,
            })
            .collect();
        KnowledgeFile {
            pose_bandwidth_rad: Some(self.pose.bandwidth),
            location_bandwidth_m: self.location.bandwidth,
            categories,
            pairs,
            config: self.config,
        }
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.pose.keyposes.keys().map(String::as_str)
    }

    pub fn has_category(&self, category: &str) -> bool {
        self.pose.keyposes.contains_key(category)
    }

    fn keyposes(&self, category: &str) -> Result<&[Keypose]> {
        self.pose
            .keyposes
            .get(category)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }

    fn anchors(&self, category: &str) -> Result<&[Anchor]> {
        self.location
            .anchors
            .get(category)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCategory(category.to_string()))
    }

    /// Whether any anchor of `category` lies on a surface of `scene`.
    pub fn has_anchors_in(&self, category: &str, scene: &SceneBackground) -> bool {
        self.location
            .anchors
            .get(category)
            .is_some_and(|a| a.iter().any(|a| scene.surface(&a.surface).is_some()))
    }

    pub fn annotated_models(&self) -> usize {
        self.models.values().sum()
    }

    pub fn annotated_pairs(&self) -> usize {
        self.relations.pairs.len()
    }

    /// Checks every anchor against the scene's support surfaces.
    pub fn validate_against(&self, scene: &SceneBackground) -> Result<()> {
        let tol = 1e-3 * scene.scene_scale;
        for (cat, anchors) in &self.location.anchors {
            for a in anchors {
                let s = scene.surface(&a.surface).ok_or_else(|| {
                    Error::Validation(format!(
                        "anchor of {cat:?} references unknown surface {:?}",
                        a.surface
                    ))
                })?;
                let height = s.height_of(&a.point).abs();
                let inside = polygon::signed_distance(&s.polygon_2d, s.to_plane(&a.point));
                if height > tol || inside < -tol {
                    return Err(Error::Validation(format!(
                        "anchor of {cat:?} is off surface {:?} (height {height:.3e}, outside by {:.3e})",
                        a.surface,
                        (-inside).max(0.0)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Interpolated pose density `D_p[pose | category]`.
    pub fn pose_density(&self, category: &str, pose: &UnitQuaternion<f64>) -> Result<f64> {
        let bw = self.pose.bandwidth;
        Ok(self
            .keyposes(category)?
            .iter()
            .map(|k| k.prob * gaussian_kernel(k.angle_to(pose), bw))
            .fold(0.0, f64::max))
    }

    /// Interpolated location density `D_l[point | category]`, using only the
    /// anchors on `surface` (or the surface beneath `point` when `None`).
    /// Distances are measured in the surface plane.
    pub fn location_density(
        &self,
        category: &str,
        point: &Point3<f64>,
        surface: Option<&str>,
        scene: &SceneBackground,
    ) -> Result<f64> {
        let anchors = self.anchors(category)?;
        let surf = match surface {
            Some(name) => scene.surface(name),
            None => scene.surface_below(point),
        };
        let Some(surf) = surf else { return Ok(0.0) };
        let bw = self.location.bandwidth_for(scene);
        Ok(anchors
            .iter()
            .filter(|a| a.surface == surf.name)
            .map(|a| {
                let d = point - a.point;
                let in_plane = d - surf.normal * surf.normal.dot(&d);
                a.prob * gaussian_kernel(in_plane.norm(), bw)
            })
            .fold(0.0, f64::max))
    }

    pub fn max_pose_prob(&self, category: &str) -> Result<f64> {
        Ok(self.keyposes(category)?.iter().map(|k| k.prob).fold(0.0, f64::max))
    }

    pub fn max_location_prob(&self, category: &str) -> Result<f64> {
        Ok(self.anchors(category)?.iter().map(|a| a.prob).fold(0.0, f64::max))
    }

    /// Samples a pose and reports which keypose it was drawn around.
    pub fn sample_pose_indexed<R: Rng + ?Sized>(
        &self,
        category: &str,
        rng: &mut R,
    ) -> Result<(UnitQuaternion<f64>, usize)> {
        let kps = self.keyposes(category)?;
        let idx = pick_weighted(kps.iter().map(|k| k.prob), rng);
        let k = &kps[idx];
        let bw = self.pose.bandwidth;
        let mut q = k.rotation;
        if bw > 0.0 {
            let w = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            ) * bw;
            q = UnitQuaternion::from_scaled_axis(w) * q;
        }
        if k.yaw_free {
            let yaw = rng.random_range(0.0..std::f64::consts::TAU);
            q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * q;
        }
        Ok((UnitQuaternion::new_normalize(*q.quaternion()), idx))
    }

    pub fn sample_pose<R: Rng + ?Sized>(&self, category: &str, rng: &mut R) -> Result<UnitQuaternion<f64>> {
        self.sample_pose_indexed(category, rng).map(|(q, _)| q)
    }

    /// Samples a point on a support surface: anchor by probability, then an
    /// in-plane Gaussian offset clamped to the surface polygon.
    pub fn sample_location<R: Rng + ?Sized>(
        &self,
        category: &str,
        scene: &SceneBackground,
        rng: &mut R,
    ) -> Result<(Point3<f64>, String)> {
        let anchors = self.anchors(category)?;
        let usable: Vec<&Anchor> = anchors
            .iter()
            .filter(|a| scene.surface(&a.surface).is_some())
            .collect();
        if usable.is_empty() {
            return Err(Error::NoAnchors(category.to_string()));
        }
        let a = usable[pick_weighted(usable.iter().map(|a| a.prob), rng)];
        let surf = scene.surface(&a.surface).expect("filtered above");
        let bw = self.location.bandwidth_for(scene);
        let mut q = surf.to_plane(&a.point);
        if bw > 0.0 {
            q[0] += bw * rng.sample::<f64, _>(StandardNormal);
            q[1] += bw * rng.sample::<f64, _>(StandardNormal);
        }
        let q = polygon::clamp(&surf.polygon_2d, q);
        Ok((surf.from_plane(q), surf.name.clone()))
    }
}

/// Index drawn proportionally to `weights`; uniform when all weights are zero.
fn pick_weighted<R: Rng + ?Sized>(weights: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let w: Vec<f64> = weights.collect();
    match WeightedIndex::new(&w) {
        Ok(dist) => dist.sample(rng),
        Err(_) => rng.random_range(0..w.len()),
    }
}

pub fn load_knowledge(path: &Path) -> Result<KnowledgeBase> {
    KnowledgeBase::load(path)
}
