//! Layout generation: sample candidates from the priors, keep those that
//! pass the physics gate and then the commonsense gate.
//!
//! Candidate `i` draws from its own ChaCha stream, so candidates can be
//! evaluated in parallel while the accepted stream stays identical to a
//! sequential run.

pub mod sensitivity;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assets::{ObjectModel, SceneBackground};
use crate::error::{Error, Result};
use crate::knowledge::{KThreshold, KnowledgeBase, ReasoningConfig};
use crate::layout::{Layout, LayoutRecord, Placement};
use crate::physics::{physics_accept, ContactReport, PhysicsConfig};
use crate::reasoning::{calibrate_threshold, commonsense_accept, layout_likelihood, LikelihoodReport};

/// Modeled labeling time per object model and per annotated pair.
pub const SECONDS_PER_ANNOTATION: f64 = 10.0;

/// Keeps the pilot batch on different random streams from generation.
const PILOT_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

fn default_min() -> usize {
    1
}
fn default_max() -> usize {
    5
}
fn default_budget() -> u64 {
    100_000
}
fn default_percentile() -> f64 {
    20.0
}
fn default_pilot() -> usize {
    200
}
fn default_lift() -> f64 {
    5e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(default = "default_min")]
    pub min_objects: usize,
    #[serde(default = "default_max")]
    pub max_objects: usize,
    /// Categories to draw from; empty means every category that has both
    /// models and anchors in the scene.
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default = "default_budget")]
    pub attempts_budget: u64,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the knowledge base's reasoning config.
    #[serde(default)]
    pub reasoning: Option<ReasoningConfig>,
    #[serde(default = "default_percentile")]
    pub calibration_percentile: f64,
    /// Physics-accepted pilot layouts scored to calibrate the threshold.
    #[serde(default = "default_pilot")]
    pub calibration_pilot: usize,
    /// Height above the support surface at which candidates are released (m).
    #[serde(default = "default_lift")]
    pub drop_lift: f64,
    #[serde(default)]
    pub physics: PhysicsConfig,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            min_objects: default_min(),
            max_objects: default_max(),
            categories: Vec::new(),
            attempts_budget: default_budget(),
            seed: 0,
            reasoning: None,
            calibration_percentile: default_percentile(),
            calibration_pilot: default_pilot(),
            drop_lift: default_lift(),
            physics: PhysicsConfig::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_objects < 1 {
            return Err(Error::Validation("min_objects must be >= 1".into()));
        }
        if self.max_objects < self.min_objects {
            return Err(Error::Validation(format!(
                "max_objects {} < min_objects {}",
                self.max_objects, self.min_objects
            )));
        }
        if self.attempts_budget < 1 {
            return Err(Error::Validation("attempts_budget must be >= 1".into()));
        }
        if !(0.0..=100.0).contains(&self.calibration_percentile) {
            return Err(Error::Validation("calibration_percentile must be in [0,100]".into()));
        }
        if !(self.drop_lift.is_finite() && self.drop_lift >= 0.0) {
            return Err(Error::Validation("drop_lift must be >= 0".into()));
        }
        if let Some(r) = &self.reasoning {
            r.validate()?;
        }
        Ok(())
    }

    pub fn reasoning_for(&self, kb: &KnowledgeBase) -> ReasoningConfig {
        self.reasoning.unwrap_or(kb.config)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub tried: u64,
    pub physics_rejections: u64,
    pub commonsense_rejections: u64,
    pub accepted: u64,
    pub annotation_cost_s: f64,
}

impl GenStats {
    pub fn balanced(&self) -> bool {
        self.tried == self.physics_rejections + self.commonsense_rejections + self.accepted
    }
}

/// Object models grouped by category.
#[derive(Debug, Clone, Default)]
pub struct ModelPool {
    by_category: BTreeMap<String, Vec<Arc<ObjectModel>>>,
}

impl ModelPool {
    pub fn new(models: impl IntoIterator<Item = Arc<ObjectModel>>) -> ModelPool {
        let mut by_category: BTreeMap<String, Vec<Arc<ObjectModel>>> = BTreeMap::new();
        for m in models {
            by_category.entry(m.category.clone()).or_default().push(m);
        }
        ModelPool { by_category }
    }

    pub fn models(&self, category: &str) -> &[Arc<ObjectModel>] {
        self.by_category.get(category).map_or(&[], Vec::as_slice)
    }

    pub fn by_id(&self) -> BTreeMap<String, Arc<ObjectModel>> {
        self.by_category
            .values()
            .flatten()
            .map(|m| (m.id.clone(), m.clone()))
            .collect()
    }

    pub fn model_count(&self) -> usize {
        self.by_category.values().map(Vec::len).sum()
    }
}

/// Categories a generator may draw from, checked against priors, models and scene.
pub fn resolve_categories(
    kb: &KnowledgeBase,
    scene: &SceneBackground,
    pool: &ModelPool,
    config: &GenConfig,
) -> Result<Vec<String>> {
    if config.categories.is_empty() {
        let cats: Vec<String> = kb
            .categories()
            .filter(|c| !pool.models(c).is_empty() && kb.has_anchors_in(c, scene))
            .map(str::to_string)
            .collect();
        if cats.is_empty() {
            return Err(Error::Validation(format!(
                "no category has both models and anchors in scene {:?}",
                scene.name
            )));
        }
        return Ok(cats);
    }
    for c in &config.categories {
        if !kb.has_category(c) {
            return Err(Error::UnknownCategory(c.clone()));
        }
        if pool.models(c).is_empty() {
            return Err(Error::Validation(format!("no object model for category {c:?}")));
        }
        if !kb.has_anchors_in(c, scene) {
            return Err(Error::NoAnchors(c.clone()));
        }
    }
    Ok(config.categories.clone())
}

/// RNG for candidate `index` under `seed`.
pub fn candidate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws one unvetted layout: a uniform object count, categories with
/// replacement, then a pose and a support location per object. Each object
/// is released with its lowest point `drop_lift` above the sampled point.
pub fn sample_candidate<R: Rng + ?Sized>(
    kb: &KnowledgeBase,
    scene: &Arc<SceneBackground>,
    pool: &ModelPool,
    categories: &[String],
    config: &GenConfig,
    rng: &mut R,
) -> Result<Layout> {
    if categories.is_empty() {
        return Err(Error::Empty("category list"));
    }
    let n = rng.random_range(config.min_objects..=config.max_objects);
    let mut placements = Vec::with_capacity(n);
    for k in 0..n {
        let category = &categories[rng.random_range(0..categories.len())];
        let models = pool.models(category);
        if models.is_empty() {
            return Err(Error::Validation(format!("no object model for category {category:?}")));
        }
        let model = models[rng.random_range(0..models.len())].clone();
        let (pose, keypose) = kb.sample_pose_indexed(category, rng)?;
        let (point, surface) = kb.sample_location(category, scene, rng)?;
        let rot = pose * model.canonical_rotation();
        let bottom = model
            .convex_hull
            .vertices
            .iter()
            .map(|v| (rot * v).z)
            .fold(f64::INFINITY, f64::min);
        let location = Point3::from(point.coords + Vector3::z() * (config.drop_lift - bottom));
        let mut p = Placement::new(format!("obj{k}"), model, pose, location);
        p.surface = Some(surface);
        p.keypose = Some(keypose);
        placements.push(p);
    }
    Layout::new(scene.clone(), placements)
}

/// One accepted layout with the reports of both gates.
#[derive(Debug, Clone)]
pub struct Generated {
    /// Draw sequence number of the candidate.
    pub index: u64,
    pub layout: Layout,
    pub likelihood: LikelihoodReport,
    pub contacts: ContactReport,
}

/// JSON-lines record of a [`Generated`] layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub index: u64,
    pub layout: LayoutRecord,
    pub likelihood: LikelihoodReport,
    pub contacts: ContactReport,
}

impl Generated {
    pub fn to_record(&self) -> GeneratedRecord {
        GeneratedRecord {
            index: self.index,
            layout: self.layout.to_record(),
            likelihood: self.likelihood.clone(),
            contacts: self.contacts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub stats: GenStats,
    pub threshold: f64,
    pub calibrated: bool,
    pub requested: usize,
    pub exhausted: bool,
}

impl GenSummary {
    /// Turns an exhausted budget into [`Error::BudgetExhausted`].
    pub fn into_result(self) -> Result<GenSummary> {
        if self.exhausted {
            Err(Error::BudgetExhausted {
                tried: self.stats.tried,
                accepted: self.stats.accepted as usize,
                requested: self.requested,
            })
        } else {
            Ok(self)
        }
    }
}

enum Outcome {
    PhysicsReject,
    Scored(Layout, ContactReport, LikelihoodReport),
}

struct Generator<'a> {
    kb: &'a KnowledgeBase,
    scene: &'a Arc<SceneBackground>,
    pool: &'a ModelPool,
    categories: Vec<String>,
    config: &'a GenConfig,
    reasoning: ReasoningConfig,
}

impl Generator<'_> {
    fn evaluate(&self, seed: u64, index: u64) -> Result<Outcome> {
        let mut rng = candidate_rng(seed, index);
        let candidate = sample_candidate(self.kb, self.scene, self.pool, &self.categories, self.config, &mut rng)?;
        let (ok, settled, contacts) = physics_accept(&candidate, &self.config.physics);
        if !ok {
            return Ok(Outcome::PhysicsReject);
        }
        let report = layout_likelihood(&settled, self.kb, &self.reasoning)?;
        Ok(Outcome::Scored(settled, contacts, report))
    }

    /// Evaluates candidates `start..` in parallel chunks and feeds them to
    /// `visit` in index order until it returns false or `limit` is reached.
    fn run(
        &self,
        seed: u64,
        limit: u64,
        mut visit: impl FnMut(u64, Outcome) -> Result<bool>,
    ) -> Result<u64> {
        let chunk = (rayon::current_num_threads() as u64 * 16).max(16);
        let mut next = 0u64;
        while next < limit {
            let end = (next + chunk).min(limit);
            let outcomes: Vec<Result<Outcome>> = (next..end)
                .into_par_iter()
                .map(|i| self.evaluate(seed, i))
                .collect();
            for (i, outcome) in (next..end).zip(outcomes) {
                if !visit(i, outcome?)? {
                    return Ok(i + 1);
                }
            }
            next = end;
        }
        Ok(next)
    }

    fn calibrate(&self) -> Result<f64> {
        let want = self.config.calibration_pilot.max(1);
        let mut pilot = Vec::with_capacity(want);
        self.run(self.config.seed ^ PILOT_SEED_SALT, self.config.attempts_budget, |_, o| {
            if let Outcome::Scored(_, _, r) = o {
                pilot.push(r);
            }
            Ok(pilot.len() < want)
        })?;
        calibrate_threshold(&pilot, self.config.calibration_percentile)
    }
}

/// Generates up to `count` layouts that pass both gates, handing each to
/// `sink` in draw order. Stops early when the attempts budget runs out;
/// the summary then has `exhausted` set.
pub fn generate(
    kb: &KnowledgeBase,
    scene: &Arc<SceneBackground>,
    pool: &ModelPool,
    config: &GenConfig,
    count: usize,
    mut sink: impl FnMut(Generated) -> Result<()>,
) -> Result<GenSummary> {
    config.validate()?;
    let reasoning = config.reasoning_for(kb);
    reasoning.validate()?;
    let gen = Generator {
        kb,
        scene,
        pool,
        categories: resolve_categories(kb, scene, pool, config)?,
        config,
        reasoning,
    };
    let (threshold, calibrated) = match reasoning.k_threshold {
        KThreshold::Fixed(t) => (t, false),
        KThreshold::Calibrate => (gen.calibrate()?, true),
    };
    let mut stats = GenStats {
        annotation_cost_s: annotation_cost(kb),
        ..GenStats::default()
    };
    if count > 0 {
        stats.tried = gen.run(config.seed, config.attempts_budget, |index, outcome| {
            match outcome {
                Outcome::PhysicsReject => stats.physics_rejections += 1,
                Outcome::Scored(layout, contacts, mut likelihood) => {
                    if commonsense_accept(&likelihood, threshold) {
                        likelihood.accepted = true;
                        stats.accepted += 1;
                        sink(Generated {
                            index,
                            layout,
                            likelihood,
                            contacts,
                        })?;
                    } else {
                        stats.commonsense_rejections += 1;
                    }
                }
            }
            Ok((stats.accepted as usize) < count)
        })?;
    }
    Ok(GenSummary {
        stats,
        threshold,
        calibrated,
        requested: count,
        exhausted: (stats.accepted as usize) < count,
    })
}

/// Collects [`generate`] output; an exhausted budget is an error.
pub fn generate_vec(
    kb: &KnowledgeBase,
    scene: &Arc<SceneBackground>,
    pool: &ModelPool,
    config: &GenConfig,
    count: usize,
) -> Result<(Vec<Generated>, GenSummary)> {
    let mut out = Vec::with_capacity(count);
    let summary = generate(kb, scene, pool, config, count, |g| {
        out.push(g);
        Ok(())
    })?
    .into_result()?;
    Ok((out, summary))
}

/// Modeled labeling time: a fixed cost per annotated object model and per
/// annotated object pair.
pub fn annotation_cost(kb: &KnowledgeBase) -> f64 {
    annotation_cost_for(kb.annotated_models(), kb.annotated_pairs())
}

pub fn annotation_cost_for(models: usize, pairs: usize) -> f64 {
    SECONDS_PER_ANNOTATION * (models + pairs) as f64
}

/// `n` perturbed copies of `kb`, one per simulated annotator. Every prior
/// probability and suggested distance is scaled by its own factor drawn
/// uniformly from `[1 - noise, 1 + noise]`; probabilities are clamped to
/// `[0, 1]`.
pub fn simulate_annotators<R: Rng + ?Sized>(
    kb: &KnowledgeBase,
    n: usize,
    noise: f64,
    rng: &mut R,
) -> Result<Vec<KnowledgeBase>> {
    if n < 1 {
        return Err(Error::Validation("annotator count must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&noise) {
        return Err(Error::Validation(format!("noise must be in [0,1), got {noise}")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut factor = || rng.random_range(1.0 - noise..=1.0 + noise);
        let mut copy = kb.clone();
        for k in copy.pose.keyposes.values_mut().flatten() {
            k.prob = (k.prob * factor()).clamp(0.0, 1.0);
        }
        for a in copy.location.anchors.values_mut().flatten() {
            a.prob = (a.prob * factor()).clamp(0.0, 1.0);
        }
        for r in copy.relations.pairs.values_mut() {
            r.occ_prob = (r.occ_prob * factor()).clamp(0.0, 1.0);
            r.sugg_dist = (r.sugg_dist * factor()).max(0.0);
        }
        out.push(copy);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::knowledge::KnowledgeFile;
    use crate::physics::{penetration_check, stability_check};
    use crate::reasoning::layout_likelihood;

    fn demo() -> (KnowledgeBase, Arc<SceneBackground>, ModelPool) {
        let file: KnowledgeFile = serde_json::from_value(fixtures::demo_knowledge_json()).unwrap();
        (
            KnowledgeBase::try_from(file).unwrap(),
            fixtures::table_scene(),
            ModelPool::new(fixtures::demo_models()),
        )
    }

    #[test]
    fn degenerate_priors_give_deterministic_placement() {
        let file: KnowledgeFile = serde_json::from_str(
            r#"{"pose_bandwidth_rad": 0, "location_bandwidth_m": 0,
                "categories": {"box": {"keyposes": [{"quat": [1,0,0,0], "prob": 1, "yaw_free": false}],
                                       "anchors": [{"xyz": [0.1, 0.2, 0.75], "surface": "table", "prob": 1}]}}}"#,
        )
        .unwrap();
        let kb = KnowledgeBase::try_from(file).unwrap();
        let pool = ModelPool::new([fixtures::cube_model("b", "box", 0.05)]);
        let cfg = GenConfig { min_objects: 1, max_objects: 1, drop_lift: 0.0, ..Default::default() };
        let scene = fixtures::table_scene();
        let cats = resolve_categories(&kb, &scene, &pool, &cfg).unwrap();
        for seed in 0..5 {
            let l = sample_candidate(&kb, &scene, &pool, &cats, &cfg, &mut candidate_rng(seed, 0)).unwrap();
            assert_eq!(l.len(), 1);
            let loc = l.placements[0].location;
            assert!((loc - Point3::new(0.1, 0.2, 0.8)).norm() < 1e-12, "{loc}");
        }
    }

    #[test]
    fn object_count_is_uniform() {
        let (kb, scene, pool) = demo();
        let cfg = GenConfig { min_objects: 3, max_objects: 7, ..Default::default() };
        let cats = resolve_categories(&kb, &scene, &pool, &cfg).unwrap();
        let mut counts = [0usize; 8];
        let draws = 10_000;
        for i in 0..draws {
            let l = sample_candidate(&kb, &scene, &pool, &cats, &cfg, &mut candidate_rng(3, i)).unwrap();
            counts[l.len()] += 1;
        }
        for c in &counts[3..=7] {
            assert!((*c as f64 / draws as f64 - 0.2).abs() < 0.02, "{counts:?}");
        }
        assert_eq!(counts[..3].iter().sum::<usize>(), 0);
    }

    #[test]
    fn generation_is_deterministic_and_gated() {
        let (kb, scene, pool) = demo();
        let cfg = GenConfig { max_objects: 4, seed: 11, calibration_pilot: 50, attempts_budget: 5000, ..Default::default() };
        let (a, sa) = generate_vec(&kb, &scene, &pool, &cfg, 10).unwrap();
        let (b, sb) = generate_vec(&kb, &scene, &pool, &cfg, 10).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(sa, sb);
        assert!(sa.stats.balanced());
        assert_eq!(sa.stats.accepted, 10);
        let ja: Vec<String> = a.iter().map(|g| serde_json::to_string(&g.to_record()).unwrap()).collect();
        let jb: Vec<String> = b.iter().map(|g| serde_json::to_string(&g.to_record()).unwrap()).collect();
        assert_eq!(ja, jb);
        let reasoning = cfg.reasoning_for(&kb);
        for g in &a {
            let pen = penetration_check(&g.layout, &cfg.physics);
            assert!(pen.max_penetration <= 1e-3 * scene.scene_scale);
            assert!(stability_check(&g.layout, &cfg.physics).iter().all(|s| s.stable));
            let r = layout_likelihood(&g.layout, &kb, &reasoning).unwrap();
            assert!(commonsense_accept(&r, sa.threshold));
        }
    }

    #[test]
    fn zero_budget_is_rejected() {
        let (kb, scene, pool) = demo();
        let cfg = GenConfig { attempts_budget: 0, ..Default::default() };
        let mut n = 0;
        assert!(generate(&kb, &scene, &pool, &cfg, 3, |_| {
            n += 1;
            Ok(())
        })
        .is_err());
        assert_eq!(n, 0);
    }

    #[test]
    fn tiny_budget_reports_exhaustion() {
        let (kb, scene, pool) = demo();
        let cfg = GenConfig {
            attempts_budget: 3,
            reasoning: Some(ReasoningConfig { k_threshold: KThreshold::Fixed(0.0), ..kb.config }),
            ..Default::default()
        };
        let s = generate(&kb, &scene, &pool, &cfg, 100, |_| Ok(())).unwrap();
        assert!(s.exhausted);
        assert_eq!(s.stats.tried, 3);
        assert!(matches!(s.into_result(), Err(Error::BudgetExhausted { tried: 3, .. })));
    }

    #[test]
    fn annotation_cost_model() {
        assert_eq!(annotation_cost_for(30, 0), 300.0);
        assert_eq!(annotation_cost_for(0, 0), 0.0);
        assert_eq!(annotation_cost_for(100, 20), 1200.0);
    }

    #[test]
    fn annotators_stay_in_range() {
        let (kb, _, _) = demo();
        let same = simulate_annotators(&kb, 3, 0.0, &mut candidate_rng(0, 0)).unwrap();
        assert!(same.iter().all(|k| *k == kb));
        let noisy = simulate_annotators(&kb, 20, 0.2, &mut candidate_rng(0, 0)).unwrap();
        assert_eq!(noisy.len(), 20);
        for k in &noisy {
            for (c, kps) in &k.pose.keyposes {
                for (a, b) in kps.iter().zip(&kb.pose.keyposes[c]) {
                    assert!(a.prob <= 1.0);
                    assert!(a.prob >= b.prob * 0.8 - 1e-12 && a.prob <= (b.prob * 1.2).min(1.0) + 1e-12);
                }
            }
        }
        assert!(simulate_annotators(&kb, 0, 0.1, &mut candidate_rng(0, 0)).is_err());
        assert!(simulate_annotators(&kb, 2, 1.0, &mut candidate_rng(0, 0)).is_err());
    }
}
