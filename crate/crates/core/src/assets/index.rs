//! JSON asset index driving batch import.
//!
//! ```json
//! {
//!   "objects": [{"id": "mug_01", "category": "mug", "path": "mug.obj", "up": [0, 0, 1], "scale": 1.0}],
//!   "scenes": [{"name": "shelf", "path": "shelf.obj", "scale": 1.0,
//!               "surfaces": [{"name": "board0", "polygon": [[0, 0, 0.4], [1, 0, 0.4], [1, 0.3, 0.4], [0, 0.3, 0.4]]}]}]
//! }
//! ```
//! Relative paths resolve against the index file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_object_with, load_scene_with, ObjectModel, SceneBackground, SurfaceSpec};
use crate::error::{Error, Result};

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObjectEntry {
    pub id: String,
    pub category: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<[f64; 3]>,
    /// Model units to meters.
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SceneEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<[f64; 3]>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_scale: Option<f64>,
    #[serde(default)]
    pub surfaces: Vec<SurfaceSpec>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct AssetIndex {
    #[serde(default)]
    pub objects: Vec<ObjectEntry>,
    #[serde(default)]
    pub scenes: Vec<SceneEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn vec3(a: Option<[f64; 3]>) -> Option<Vector3<f64>> {
    a.map(|v| Vector3::new(v[0], v[1], v[2]))
}

impl AssetIndex {
    pub fn load(path: &Path) -> Result<AssetIndex> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut index: AssetIndex = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        index.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut ids = BTreeSet::new();
        for o in &index.objects {
            if !ids.insert(o.id.as_str()) {
                return Err(Error::Validation(format!("duplicate object id {:?}", o.id)));
            }
        }
        Ok(index)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads every object in parallel, preserving index order.
    pub fn load_objects(&self) -> Result<Vec<ObjectModel>> {
        self.objects
            .par_iter()
            .map(|o| {
                load_object_with(&self.resolve(&o.path), &o.id, &o.category, vec3(o.up), o.scale)
            })
            .collect()
    }

    pub fn load_scene(&self, name: &str) -> Result<SceneBackground> {
        let entry = self
            .scenes
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Validation(format!("scene {name:?} not in asset index")))?;
        load_scene_with(
            &self.resolve(&entry.path),
            &entry.name,
            &entry.surfaces,
            vec3(entry.up),
            entry.scale,
            entry.scene_scale,
        )
    }

    pub fn categories(&self) -> BTreeSet<String> {
        self.objects.iter().map(|o| o.category.clone()).collect()
    }
}
