//! Dataset packaging: project configuration, the generate/render/encode
//! driver, manifests, COCO export and dataset reports.

pub mod coco;
pub mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assets::{AssetIndex, SceneBackground};
use crate::error::{Error, Result};
use crate::geoloss::{LossWeights, RecArity};
use crate::knowledge::{KThreshold, KnowledgeBase, ReasoningConfig};
use crate::layout::LayoutRecord;
use crate::layoutgen::sensitivity::SensitivityConfig;
use crate::layoutgen::{candidate_rng, generate, GenConfig, GenStats, GenSummary, Generated, ModelPool};
use crate::render::{encode_sample, rasterize, sample_camera, Camera, CameraProfile, InstanceInfo};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LAYOUTS_FILE: &str = "layouts.jsonl";
pub const SAMPLES_DIR: &str = "samples";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub weights: LossWeights,
    /// The candidate image stands in for the rough-image reconstruction, so
    /// the report includes it by default.
    pub rec_arity: RecArity,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            weights: LossWeights::default(),
            rec_arity: RecArity::WithRough,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    /// Asset index, relative to the first config file.
    pub assets: PathBuf,
    /// Knowledge base, relative to the first config file.
    pub knowledge: PathBuf,
    /// Scene profile; the first scene in the index when absent.
    pub scene: Option<String>,
    pub generation: GenConfig,
    /// Replaces the threshold of the effective reasoning config.
    pub k_threshold: Option<KThreshold>,
    pub camera: CameraProfile,
    /// Seed of the camera streams; the generation seed when absent.
    pub render_seed: Option<u64>,
    pub losses: LossConfig,
    pub sensitivity: SensitivityConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            assets: PathBuf::from("assets.json"),
            knowledge: PathBuf::from("knowledge.json"),
            scene: None,
            generation: GenConfig::default(),
            k_threshold: None,
            camera: CameraProfile::default(),
            render_seed: None,
            losses: LossConfig::default(),
            sensitivity: SensitivityConfig {
                distinct_seeds: true,
                ..SensitivityConfig::default()
            },
        }
    }
}

/// Command-line values that win over every config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scene: Option<String>,
    pub seed: Option<u64>,
    pub k_threshold: Option<KThreshold>,
    pub calibration_percentile: Option<f64>,
}

/// Recursively merges `top` into `base`; objects merge key by key, anything
/// else is replaced.
pub fn merge_json(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_json(path: &Path, what: &'static str) -> Result<Value> {
    if !path.exists() {
        return Err(Error::NotFound {
            what,
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Layers config files (later files win), then flag overrides. Returns the
/// typed config, the directory relative paths resolve against, and the
/// effective config as JSON.
pub fn load_config(paths: &[PathBuf], overrides: &Overrides) -> Result<(ProjectConfig, PathBuf, Value)> {
    let first = paths.first().ok_or(Error::Empty("config file list"))?;
    let base_dir = first.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut merged = Value::Object(Default::default());
    for p in paths {
        merge_json(&mut merged, read_json(p, "config file")?);
    }
    let mut flags = serde_json::json!({});
    if let Some(s) = &overrides.scene {
        flags["scene"] = Value::from(s.clone());
    }
    if let Some(s) = overrides.seed {
        flags["generation"]["seed"] = Value::from(s);
    }
    if let Some(p) = overrides.calibration_percentile {
        flags["generation"]["calibration_percentile"] = Value::from(p);
    }
    if let Some(k) = overrides.k_threshold {
        flags["k_threshold"] = serde_json::to_value(k).expect("threshold serializes");
    }
    merge_json(&mut merged, flags);
    let config: ProjectConfig =
        serde_json::from_value(merged).map_err(|e| Error::json(first, e))?;
    config.generation.validate()?;
    config.camera.validate()?;
    config.losses.weights.validate()?;
    let effective = serde_json::to_value(&config).expect("config serializes");
    Ok((config, base_dir, effective))
}

/// Everything a pipeline command needs, loaded and cross-checked.
#[derive(Debug, Clone)]
pub struct Project {
    pub config: ProjectConfig,
    pub effective: Value,
    pub base_dir: PathBuf,
    pub index: AssetIndex,
    pub scene: Arc<SceneBackground>,
    pub pool: ModelPool,
    pub kb: KnowledgeBase,
}

impl Project {
    pub fn open(paths: &[PathBuf], overrides: &Overrides) -> Result<Project> {
        let (config, base_dir, effective) = load_config(paths, overrides)?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let assets = resolve(&config.assets);
        if !assets.exists() {
            return Err(Error::NotFound {
                what: "asset index",
                path: assets,
            });
        }
        let knowledge = resolve(&config.knowledge);
        if !knowledge.exists() {
            return Err(Error::NotFound {
                what: "knowledge base",
                path: knowledge,
            });
        }
        let index = AssetIndex::load(&assets)?;
        let scene_name = match &config.scene {
            Some(s) => s.clone(),
            None => index
                .scenes
                .first()
                .map(|s| s.name.clone())
                .ok_or_else(|| Error::Validation("asset index has no scenes".into()))?,
        };
        let scene = Arc::new(index.load_scene(&scene_name)?);
        let pool = ModelPool::new(index.load_objects()?.into_iter().map(Arc::new));
        let kb = KnowledgeBase::load(&knowledge)?;
        kb.validate_against(&scene)?;
        Ok(Project {
            config,
            effective,
            base_dir,
            index,
            scene,
            pool,
            kb,
        })
    }

    /// Generation config with the threshold override applied.
    pub fn gen_config(&self) -> GenConfig {
        let mut g = self.config.generation.clone();
        if let Some(k) = self.config.k_threshold {
            let base: ReasoningConfig = g.reasoning.unwrap_or(self.kb.config);
            g.reasoning = Some(ReasoningConfig { k_threshold: k, ..base });
        }
        g
    }

    pub fn render_seed(&self) -> u64 {
        self.config.render_seed.unwrap_or(self.config.generation.seed)
    }

    /// Category table: every category with a model, ids from 1 in name order.
    pub fn category_table(&self) -> Vec<CategoryEntry> {
        let mut names: Vec<String> = self.index.categories().into_iter().collect();
        names.sort();
        names
            .into_iter()
            .enumerate()
            .map(|(i, name)| CategoryEntry { id: i as u32 + 1, name })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub stem: String,
    /// rgb, seg, depth, normal and JSON sidecar, relative to the manifest.
    pub files: Vec<String>,
    /// Draw sequence number of the accepted candidate.
    pub draw_index: u64,
    /// Seed of the camera stream (used with `draw_index`).
    pub render_seed: u64,
    pub camera: Camera,
    pub layout: LayoutRecord,
    pub instances: Vec<InstanceInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub scene: String,
    /// False when generation stopped short of the requested count.
    pub complete: bool,
    pub requested: usize,
    /// Effective configuration after layering and overrides.
    pub config: Value,
    pub threshold: f64,
    pub stats: GenStats,
    pub categories: Vec<CategoryEntry>,
    /// Visible instances per category over all segmentation maps.
    pub instance_counts: BTreeMap<String, u64>,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let v = read_json(path, "manifest")?;
        serde_json::from_value(v).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn category_id(&self, name: &str) -> Option<u32> {
        self.categories.iter().find(|c| c.name == name).map(|c| c.id)
    }
}

/// Directory holding a manifest (its files resolve against it).
pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn count_instances(samples: &[SampleEntry]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for s in samples {
        for i in &s.instances {
            *counts.entry(i.category.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Renders and encodes accepted layouts as samples `first..`, in parallel.
pub fn render_samples(
    project: &Project,
    generated: &[Generated],
    out: &Path,
    first: usize,
) -> Result<Vec<SampleEntry>> {
    let samples_dir = out.join(SAMPLES_DIR);
    std::fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;
    let seed = project.render_seed();
    generated
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let stem = format!("{:06}", first + i);
            let mut rng = candidate_rng(seed, g.index);
            let camera = sample_camera(&project.scene, &mut rng, &project.config.camera)?;
            let sample = rasterize(&g.layout, &camera)?;
            let record = g.layout.to_record();
            let paths = encode_sample(&sample, &samples_dir, &stem, Some(&record))?;
            let files = paths
                .iter()
                .map(|p| {
                    let name = p.file_name().expect("file name").to_string_lossy();
                    format!("{SAMPLES_DIR}/{name}")
                })
                .collect();
            Ok(SampleEntry {
                stem,
                files,
                draw_index: g.index,
                render_seed: seed,
                camera,
                layout: record,
                instances: sample.instances,
            })
        })
        .collect()
}

/// Generates `count` layouts, renders one sample per layout into
/// `out/samples`, and writes `out/layouts.jsonl` and `out/manifest.json`.
/// When the attempts budget runs out the partial manifest is still
/// written, with `complete = false`.
pub fn cmd_generate(project: &Project, count: usize, out: &Path) -> Result<(DatasetManifest, GenSummary)> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut accepted = Vec::with_capacity(count);
    let summary = generate(&project.kb, &project.scene, &project.pool, &project.gen_config(), count, |g| {
        accepted.push(g);
        Ok(())
    })?;
    let samples = render_samples(project, &accepted, out, 0)?;

    let layouts_path = out.join(LAYOUTS_FILE);
    let mut w = std::io::BufWriter::new(
        std::fs::File::create(&layouts_path).map_err(|e| Error::io(&layouts_path, e))?,
    );
    for g in &accepted {
        let line = serde_json::to_string(&g.to_record()).map_err(|e| Error::json(&layouts_path, e))?;
        writeln!(w, "{line}").map_err(|e| Error::io(&layouts_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&layouts_path, e))?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        scene: project.scene.name.clone(),
        complete: !summary.exhausted,
        requested: count,
        config: project.effective.clone(),
        threshold: summary.threshold,
        stats: summary.stats,
        categories: project.category_table(),
        instance_counts: count_instances(&samples),
        samples,
    };
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok((manifest, summary))
}
