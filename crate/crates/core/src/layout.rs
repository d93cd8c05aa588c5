//! Placements and layouts shared by reasoning, physics, generation and rendering.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::assets::{ObjectModel, SceneBackground};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Placement {
    /// Instance name, unique within a layout.
    pub id: String,
    pub object: Arc<ObjectModel>,
    /// Rotation of the canonical (up = +Z) object frame into the world.
    pub pose: UnitQuaternion<f64>,
    /// World position of the model-frame origin (meters).
    pub location: Point3<f64>,
    /// Support surface the location was drawn on, if any.
    pub surface: Option<String>,
    /// Keypose the pose was sampled around, if sampled.
    pub keypose: Option<usize>,
}

impl Placement {
    pub fn new(
        id: impl Into<String>,
        object: Arc<ObjectModel>,
        pose: UnitQuaternion<f64>,
        location: Point3<f64>,
    ) -> Placement {
        Placement {
            id: id.into(),
            object,
            pose,
            location,
            surface: None,
            keypose: None,
        }
    }

    pub fn category(&self) -> &str {
        &self.object.category
    }

    /// Model frame to world.
    pub fn transform(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::from(self.location.coords),
            self.pose * self.object.canonical_rotation(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pose.quaternion().norm();
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("placement {:?}: pose norm {n}", self.id)));
        }
        if !self.location.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::Validation(format!("placement {:?}: non-finite location", self.id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub scene: Arc<SceneBackground>,
    pub placements: Vec<Placement>,
}

impl Layout {
    pub fn new(scene: Arc<SceneBackground>, placements: Vec<Placement>) -> Result<Layout> {
        let layout = Layout { scene, placements };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for p in &self.placements {
            p.validate()?;
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Validation(format!("duplicate placement id {:?}", p.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn to_record(&self) -> LayoutRecord {
        LayoutRecord {
            scene: self.scene.name.clone(),
            placements: self
                .placements
                .iter()
                .map(|p| {
                    let q = p.pose.quaternion();
                    PlacementRecord {
                        id: p.id.clone(),
                        model: p.object.id.clone(),
                        category: p.object.category.clone(),
                        pose: [q.w, q.i, q.j, q.k],
                        location: [p.location.x, p.location.y, p.location.z],
                        surface: p.surface.clone(),
                        keypose: p.keypose,
                    }
                })
                .collect(),
        }
    }

    /// Rebuilds a layout from its record, resolving models by id.
    pub fn from_record(
        record: &LayoutRecord,
        scene: Arc<SceneBackground>,
        models: &BTreeMap<String, Arc<ObjectModel>>,
    ) -> Result<Layout> {
        let placements = record
            .placements
            .iter()
            .map(|r| {
                let object = models
                    .get(&r.model)
                    .cloned()
                    .ok_or_else(|| Error::Validation(format!("unknown model {:?}", r.model)))?;
                let q = Quaternion::new(r.pose[0], r.pose[1], r.pose[2], r.pose[3]);
                Ok(Placement {
                    id: r.id.clone(),
                    object,
                    pose: UnitQuaternion::new_unchecked(q),
                    location: Point3::from(r.location),
                    surface: r.surface.clone(),
                    keypose: r.keypose,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Layout::new(scene, placements)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub id: String,
    pub model: String,
    pub category: String,
    /// `[w, x, y, z]`.
    pub pose: [f64; 4],
    pub location: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypose: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRecord {
    pub scene: String,
    pub placements: Vec<PlacementRecord>,
}
