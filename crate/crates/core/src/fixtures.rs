//! Procedural assets: boxes, prisms, a floor and a table scene, plus a
//! complete demo project (meshes, asset index, priors, pipeline config).

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use serde_json::json;

use crate::assets::{obj, ObjectModel, SceneBackground, SurfaceSpec, TriMesh};
use crate::error::{Error, Result};

pub fn box_mesh(half: Vector3<f64>) -> TriMesh {
    TriMesh::cuboid(half)
}

/// Upright n-gon prism centered at the origin with flat-shaded faces.
pub fn prism_mesh(sides: usize, radius: f64, half_height: f64) -> TriMesh {
    let ring: Vec<(f64, f64)> = (0..sides)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / sides as f64;
            (radius * a.cos(), radius * a.sin())
        })
        .collect();
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut faces = Vec::new();
    for (z, n) in [(half_height, Vector3::z()), (-half_height, -Vector3::z())] {
        let base = vertices.len();
        for &(x, y) in &ring {
            vertices.push(Point3::new(x, y, z));
            normals.push(n);
        }
        for k in 1..sides - 1 {
            if z > 0.0 {
                faces.push([base, base + k, base + k + 1]);
            } else {
                faces.push([base, base + k + 1, base + k]);
            }
        }
    }
    for k in 0..sides {
        let (x0, y0) = ring[k];
        let (x1, y1) = ring[(k + 1) % sides];
        let n = Vector3::new(x0 + x1, y0 + y1, 0.0).normalize();
        let base = vertices.len();
        for p in [
            Point3::new(x0, y0, -half_height),
            Point3::new(x1, y1, -half_height),
            Point3::new(x1, y1, half_height),
            Point3::new(x0, y0, half_height),
        ] {
            vertices.push(p);
            normals.push(n);
        }
        faces.push([base, base + 1, base + 2]);
        faces.push([base, base + 2, base + 3]);
    }
    TriMesh {
        vertices,
        faces,
        normals,
        uvs: None,
        texture: None,
        albedo: None,
    }
}

pub fn box_model(id: &str, category: &str, half: Vector3<f64>) -> Arc<ObjectModel> {
    Arc::new(ObjectModel::new(id, category, box_mesh(half), None).expect("box mesh is valid"))
}

pub fn cube_model(id: &str, category: &str, half: f64) -> Arc<ObjectModel> {
    box_model(id, category, Vector3::repeat(half))
}

fn quad(name: &str, x0: f64, y0: f64, x1: f64, y1: f64, z: f64) -> SurfaceSpec {
    SurfaceSpec {
        name: name.into(),
        polygon: vec![[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]],
        normal: None,
    }
}

fn append(mesh: &mut TriMesh, other: TriMesh, offset: Vector3<f64>) {
    let base = mesh.vertices.len();
    mesh.vertices.extend(other.vertices.iter().map(|p| p + offset));
    mesh.normals.extend(other.normals);
    mesh.faces
        .extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
}

fn floor_quad(half: f64) -> TriMesh {
    TriMesh {
        vertices: vec![
            Point3::new(-half, -half, 0.0),
            Point3::new(half, -half, 0.0),
            Point3::new(half, half, 0.0),
            Point3::new(-half, half, 0.0),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
        normals: vec![Vector3::z(); 4],
        uvs: None,
        texture: None,
        albedo: None,
    }
}

/// Square floor `[-half, half]^2` at z = 0 with one support surface "floor".
pub fn floor_scene(half: f64) -> Arc<SceneBackground> {
    Arc::new(
        SceneBackground::new(
            "floor",
            floor_quad(half),
            &[quad("floor", -half, -half, half, half, 0.0)],
            None,
        )
        .expect("floor scene is valid"),
    )
}

pub const TABLE_HEIGHT: f64 = 0.75;
pub const TABLE_HALF: [f64; 2] = [0.6, 0.4];

/// Table scene mesh: a 4 m floor and a 1.2 x 0.8 m table with a 4 cm top
/// on four legs.
pub fn table_scene_mesh() -> TriMesh {
    let mut mesh = floor_quad(2.0);
    let top = TriMesh::cuboid(Vector3::new(TABLE_HALF[0], TABLE_HALF[1], 0.02));
    append(&mut mesh, top, Vector3::new(0.0, 0.0, TABLE_HEIGHT - 0.02));
    let leg_half = (TABLE_HEIGHT - 0.04) / 2.0;
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        let leg = TriMesh::cuboid(Vector3::new(0.025, 0.025, leg_half));
        let at = Vector3::new(
            sx * (TABLE_HALF[0] - 0.05),
            sy * (TABLE_HALF[1] - 0.05),
            leg_half,
        );
        append(&mut mesh, leg, at);
    }
    mesh
}

pub fn table_scene_surfaces() -> Vec<SurfaceSpec> {
    vec![
        quad("floor", -2.0, -2.0, 2.0, 2.0, 0.0),
        quad(
            "table",
            -TABLE_HALF[0],
            -TABLE_HALF[1],
            TABLE_HALF[0],
            TABLE_HALF[1],
            TABLE_HEIGHT,
        ),
    ]
}

pub fn table_scene() -> Arc<SceneBackground> {
    Arc::new(
        SceneBackground::new("table", table_scene_mesh(), &table_scene_surfaces(), None)
            .expect("table scene is valid"),
    )
}

/// Demo object catalog: (id, category, mesh).
pub fn demo_objects() -> Vec<(&'static str, &'static str, TriMesh)> {
    vec![
        ("mug_01", "mug", prism_mesh(8, 0.04, 0.05)),
        ("laptop_01", "laptop", box_mesh(Vector3::new(0.16, 0.11, 0.01))),
        ("mouse_01", "mouse", box_mesh(Vector3::new(0.03, 0.05, 0.0175))),
        ("book_01", "book", box_mesh(Vector3::new(0.075, 0.11, 0.02))),
        ("bottle_01", "bottle", prism_mesh(6, 0.035, 0.12)),
        ("crate_01", "crate", box_mesh(Vector3::new(0.2, 0.15, 0.15))),
    ]
}

pub fn demo_models() -> Vec<Arc<ObjectModel>> {
    demo_objects()
        .into_iter()
        .map(|(id, cat, mesh)| Arc::new(ObjectModel::new(id, cat, mesh, None).expect("valid")))
        .collect()
}

/// Priors for the demo table scene.
pub fn demo_knowledge_json() -> serde_json::Value {
    let upright = json!({"quat": [1, 0, 0, 0], "prob": 0.9});
    let table = |x: f64, y: f64, p: f64| json!({"xyz": [x, y, TABLE_HEIGHT], "surface": "table", "prob": p});
    let floor = |x: f64, y: f64, p: f64| json!({"xyz": [x, y, 0.0], "surface": "floor", "prob": p});
    // Bottle lying on its side: 90 degrees about x.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    json!({
        "pose_bandwidth_rad": 0.01,
        "location_bandwidth_m": 0.12,
        "categories": {
            "mug": {"keyposes": [upright], "anchors": [table(0.3, 0.15, 0.9), table(-0.3, 0.2, 0.6)]},
            "laptop": {"keyposes": [upright], "anchors": [table(0.0, -0.1, 0.9)]},
            "mouse": {"keyposes": [upright], "anchors": [table(0.25, -0.15, 0.8)]},
            "book": {"keyposes": [upright, {"quat": [1, 0, 0, 0], "prob": 0.3, "yaw_free": false}],
                     "anchors": [table(-0.35, -0.1, 0.7), floor(1.0, 1.0, 0.2)]},
            "bottle": {"keyposes": [{"quat": [1, 0, 0, 0], "prob": 0.8}, {"quat": [s, s, 0, 0], "prob": 0.2}],
                       "anchors": [table(-0.2, 0.25, 0.8), floor(-1.0, 0.8, 0.3)]},
            "crate": {"keyposes": [upright], "anchors": [floor(1.2, -0.8, 0.9), floor(-1.1, -1.0, 0.7)]}
        },
        "pairs": [
            {"a": "laptop", "b": "mouse", "occ_prob": 0.9, "sugg_dist_m": 0.25},
            {"a": "laptop", "b": "mug", "occ_prob": 0.6, "sugg_dist_m": 0.35},
            {"a": "book", "b": "mug", "occ_prob": 0.3, "sugg_dist_m": 0.3}
        ],
        "config": {"sigma": 0.1, "gamma": 0.5, "k_threshold": "calibrate", "seed": 7}
    })
}

/// Writes the demo project (meshes, `assets.json`, `knowledge.json`,
/// `config.json`) into `dir`.
pub fn write_demo_project(dir: &Path) -> Result<()> {
    let mesh_dir = dir.join("meshes");
    std::fs::create_dir_all(&mesh_dir).map_err(|e| Error::io(&mesh_dir, e))?;
    let mut objects = Vec::new();
    for (id, cat, mesh) in demo_objects() {
        obj::write_obj(&mesh, &mesh_dir.join(format!("{id}.obj")))?;
        objects.push(json!({"id": id, "category": cat, "path": format!("meshes/{id}.obj")}));
    }
    obj::write_obj(&table_scene_mesh(), &mesh_dir.join("table_scene.obj"))?;
    let index = json!({
        "objects": objects,
        "scenes": [{"name": "table", "path": "meshes/table_scene.obj", "surfaces": table_scene_surfaces()}]
    });
    let config = json!({
        "assets": "assets.json",
        "knowledge": "knowledge.json",
        "scene": "table",
        "generation": {"min_objects": 2, "max_objects": 5, "attempts_budget": 200000, "seed": 7,
                       "calibration_percentile": 20.0, "calibration_pilot": 200},
        "camera": {"radius": [1.6, 2.2], "elevation_deg": [30.0, 55.0], "azimuth_deg": [0.0, 360.0],
                   "look_at": [0.0, 0.0, 0.75], "look_at_jitter": 0.1, "fov_deg": 50.0,
                   "width": 256, "height": 256, "near": 0.05, "far": 20.0}
    });
    for (name, value) in [
        ("assets.json", index),
        ("knowledge.json", demo_knowledge_json()),
        ("config.json", config),
    ] {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(&value).expect("json");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
