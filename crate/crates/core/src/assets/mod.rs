//! Object and scene assets: validated triangle meshes with cached hulls,
//! bounding boxes and support surfaces.

pub mod index;
pub mod obj;

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, polygon, ConvexHull, Polytope};

pub use index::{AssetIndex, ObjectEntry, SceneEntry};

/// Uniform density used for mass properties (kg/m^3).
pub const DEFAULT_DENSITY: f64 = 500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Texture {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[u8; 3]>,
}

impl Texture {
    pub fn load_png(path: &Path) -> Result<Texture> {
        let img = crate::imageio::read_png(path)?;
        Ok(Texture {
            width: img.width,
            height: img.height,
            data: img.to_rgb8(),
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().flatten().copied().collect();
        crate::imageio::write_png(
            path,
            self.width,
            self.height,
            crate::imageio::PixelFormat::Rgb8,
            &bytes,
        )
    }

    /// Nearest-texel lookup with wrap-around; `v = 0` is the bottom row.
    pub fn sample(&self, uv: [f64; 2]) -> [u8; 3] {
        let u = uv[0].rem_euclid(1.0);
        let v = 1.0 - uv[1].rem_euclid(1.0);
        let x = ((u * self.width as f64) as u32).min(self.width - 1);
        let y = ((v * self.height as f64) as u32).min(self.height - 1);
        self.data[(y * self.width + x) as usize]
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub normals: Vec<Vector3<f64>>,
    pub uvs: Option<Vec<[f64; 2]>>,
    pub texture: Option<Arc<Texture>>,
    pub albedo: Option<[f32; 3]>,
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.faces == other.faces
            && self.normals == other.normals
            && self.uvs == other.uvs
    }
}

/// Per-vertex normals from area-weighted face normals. Vertices with no
/// non-degenerate incident face get +Z.
pub fn area_weighted_normals(
    vertices: &[Point3<f64>],
    faces: impl Iterator<Item = [usize; 3]>,
) -> Vec<Vector3<f64>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for f in faces {
        // The unnormalized cross product carries twice the triangle area.
        let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
        for &i in &f {
            acc[i] += n;
        }
    }
    acc.into_iter()
        .map(|n| n.try_normalize(0.0).unwrap_or_else(Vector3::z))
        .collect()
}

impl TriMesh {
    /// Builds a mesh, computing normals when none are supplied.
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<TriMesh> {
        if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
            return Err(Error::Mesh(format!(
                "face index out of range: {bad} with {} vertices",
                vertices.len()
            )));
        }
        let normals = area_weighted_normals(&vertices, faces.iter().copied());
        let mesh = TriMesh {
            vertices,
            faces,
            normals,
            uvs: None,
            texture: None,
            albedo: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::Mesh("degenerate mesh with zero faces".into()));
        }
        let n = self.vertices.len();
        if let Some(bad) = self.faces.iter().flatten().find(|&&i| i >= n) {
            return Err(Error::Mesh(format!(
                "face index out of range: {bad} with {n} vertices"
            )));
        }
        if self
            .vertices
            .iter()
            .any(|v| !v.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::Mesh("non-finite vertex coordinate".into()));
        }
        if self.normals.len() != n {
            return Err(Error::Mesh("normal count differs from vertex count".into()));
        }
        if self.normals.iter().any(|m| (m.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::Mesh("stored normal is not unit length".into()));
        }
        if let Some(uvs) = &self.uvs {
            if uvs.len() != n {
                return Err(Error::Mesh("uv count differs from vertex count".into()));
            }
        }
        Ok(())
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn scaled(mut self, s: f64) -> TriMesh {
        for v in &mut self.vertices {
            v.coords *= s;
        }
        self
    }

    pub fn rotated(mut self, r: &UnitQuaternion<f64>) -> TriMesh {
        for v in &mut self.vertices {
            *v = r * *v;
        }
        for n in &mut self.normals {
            *n = r * *n;
        }
        self
    }

    /// Axis-aligned box mesh with flat per-face normals (24 vertices).
    pub fn cuboid(half: Vector3<f64>) -> TriMesh {
        let mut vertices = Vec::with_capacity(24);
        let mut normals = Vec::with_capacity(24);
        let mut faces = Vec::with_capacity(12);
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let n = Vector3::ith(axis, sign);
                let (u, v) = geometry::plane_basis(&n);
                let base = vertices.len();
                for (a, b) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                    let dir = n + u * a + v * b;
                    vertices.push(Point3::from(dir.component_mul(&half)));
                    normals.push(n);
                }
                faces.push([base, base + 1, base + 2]);
                faces.push([base, base + 2, base + 3]);
            }
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

    /// Distance from `p` to the closest mesh triangle.
    pub fn distance_to(&self, p: &Point3<f64>) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let q = closest_point_on_triangle(
                    p,
                    &self.vertices[f[0]],
                    &self.vertices[f[1]],
                    &self.vertices[f[2]],
                );
                (p - q).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Point3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points(points: &[Point3<f64>]) -> Aabb {
        let mut min = Point3::from(Vector3::repeat(f64::INFINITY));
        let mut max = Point3::from(Vector3::repeat(f64::NEG_INFINITY));
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Aabb { min, max }
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn overlaps(&self, other: &Aabb, slack: f64) -> bool {
        (0..3).all(|i| {
            self.min[i] <= other.max[i] + slack && other.min[i] <= self.max[i] + slack
        })
    }
}

/// A scanned object ready for placement.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    pub id: String,
    pub category: String,
    pub mesh: Arc<TriMesh>,
    /// Gravity-opposed axis in the model frame.
    pub canonical_up: Vector3<f64>,
    pub convex_hull: ConvexHull,
    pub aabb: Aabb,
    pub mass: f64,
    /// Center of mass in the model frame (uniform density over the hull).
    pub center_of_mass: Point3<f64>,
    polytope: Polytope,
}

impl ObjectModel {
    pub fn new(
        id: impl Into<String>,
        category: impl Into<String>,
        mesh: TriMesh,
        canonical_up: Option<Vector3<f64>>,
    ) -> Result<ObjectModel> {
        mesh.validate()?;
        let up = canonical_up.unwrap_or_else(Vector3::z);
        let up = up
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Mesh("canonical_up must be non-zero".into()))?;
        let convex_hull = compute_hull(&mesh)?;
        let aabb = mesh.aabb();
        let polytope = Polytope::from_hull(&convex_hull);
        Ok(ObjectModel {
            id: id.into(),
            category: category.into(),
            mass: convex_hull.volume() * DEFAULT_DENSITY,
            center_of_mass: convex_hull.centroid(),
            mesh: Arc::new(mesh),
            canonical_up: up,
            convex_hull,
            aabb,
            polytope,
        })
    }

    /// Rotation taking the model frame to the canonical frame (up -> +Z).
    /// Poses are expressed in the canonical frame.
    pub fn canonical_rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::rotation_between(&self.canonical_up, &Vector3::z()).unwrap_or_else(|| {
            // Anti-parallel: flip about X.
            UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
        })
    }

    /// Hull polytope in the model frame.
    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }
}

/// Builds the convex hull of a mesh's vertex set. Coplanar meshes come back
/// with `planar == true`.
pub fn compute_hull(mesh: &TriMesh) -> Result<ConvexHull> {
    if mesh.vertices.len() < 3 {
        return Err(Error::Mesh("hull needs at least 3 vertices".into()));
    }
    geometry::convex_hull(&mesh.vertices)
}

pub fn load_object(path: &Path, id: &str, category: &str) -> Result<ObjectModel> {
    load_object_with(path, id, category, None, 1.0)
}

pub fn load_object_with(
    path: &Path,
    id: &str,
    category: &str,
    up: Option<Vector3<f64>>,
    scale: f64,
) -> Result<ObjectModel> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Validation(format!("scale must be positive, got {scale}")));
    }
    let mesh = obj::read_obj(path)?.scaled(scale);
    ObjectModel::new(id, category, mesh, up)
}

/// Declared support surface before validation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SurfaceSpec {
    pub name: String,
    pub polygon: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 3]>,
}

#[derive(Debug, Clone)]
pub struct SupportSurface {
    pub name: String,
    pub polygon: Vec<Point3<f64>>,
    pub normal: Vector3<f64>,
    /// In-plane frame: origin, u, v with `u x v = normal`.
    pub origin: Point3<f64>,
    pub u: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Polygon in (u, v) coordinates, counter-clockwise.
    pub polygon_2d: Vec<[f64; 2]>,
}

impl SupportSurface {
    pub fn to_plane(&self, p: &Point3<f64>) -> [f64; 2] {
        let d = p - self.origin;
        [d.dot(&self.u), d.dot(&self.v)]
    }

    pub fn from_plane(&self, q: [f64; 2]) -> Point3<f64> {
        self.origin + self.u * q[0] + self.v * q[1]
    }

    pub fn height_of(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&(p - self.origin))
    }

    pub fn contains_projection(&self, p: &Point3<f64>) -> bool {
        polygon::contains(&self.polygon_2d, self.to_plane(p))
    }
}

#[derive(Debug, Clone)]
pub struct SceneBackground {
    pub name: String,
    pub mesh: Arc<TriMesh>,
    pub support_surfaces: Vec<SupportSurface>,
    /// Characteristic length in meters.
    pub scene_scale: f64,
    pub aabb: Aabb,
}

const MAX_SUPPORT_TILT_DEG: f64 = 45.0;

impl SceneBackground {
    pub fn new(
        name: impl Into<String>,
        mesh: TriMesh,
        surfaces: &[SurfaceSpec],
        scene_scale: Option<f64>,
    ) -> Result<SceneBackground> {
        mesh.validate()?;
        let aabb = mesh.aabb();
        let scene_scale = scene_scale.unwrap_or_else(|| aabb.extents().amax());
        if !(scene_scale.is_finite() && scene_scale > 0.0) {
            return Err(Error::Scene("scene_scale must be positive".into()));
        }
        let mut support_surfaces = Vec::with_capacity(surfaces.len());
        for spec in surfaces {
            let s = build_surface(spec, &mesh, scene_scale)?;
            if support_surfaces
                .iter()
                .any(|o: &SupportSurface| o.name == s.name)
            {
                return Err(Error::Scene(format!("duplicate surface name {:?}", s.name)));
            }
            support_surfaces.push(s);
        }
        Ok(SceneBackground {
            name: name.into(),
            mesh: Arc::new(mesh),
            support_surfaces,
            scene_scale,
            aabb,
        })
    }

    pub fn surface(&self, name: &str) -> Option<&SupportSurface> {
        self.support_surfaces.iter().find(|s| s.name == name)
    }

    /// Highest support surface whose polygon lies under `p` (not above it).
    pub fn surface_below(&self, p: &Point3<f64>) -> Option<&SupportSurface> {
        let tol = 1e-6 * self.scene_scale;
        self.support_surfaces
            .iter()
            .filter(|s| s.contains_projection(p) && s.height_of(p) >= -tol)
            .min_by(|a, b| a.height_of(p).total_cmp(&b.height_of(p)))
    }

    /// Collision slabs under each support surface, `thickness` deep.
    pub fn support_slabs(&self, thickness: f64) -> Vec<Polytope> {
        self.support_surfaces
            .iter()
            .map(|s| Polytope::prism(&s.polygon, s.normal, thickness))
            .collect()
    }
}

fn build_surface(spec: &SurfaceSpec, mesh: &TriMesh, scene_scale: f64) -> Result<SupportSurface> {
    let name = &spec.name;
    if spec.polygon.len() < 3 {
        return Err(Error::Scene(format!("surface {name:?} needs at least 3 points")));
    }
    let pts: Vec<Point3<f64>> = spec
        .polygon
        .iter()
        .map(|p| Point3::new(p[0], p[1], p[2]))
        .collect();
    if pts.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
        return Err(Error::Scene(format!("surface {name:?} has non-finite points")));
    }
    let newell = geometry::newell_normal(&pts);
    let mut normal = match spec.normal {
        Some(n) => Vector3::new(n[0], n[1], n[2]),
        None => newell,
    }
    .try_normalize(1e-12)
    .ok_or_else(|| Error::Scene(format!("surface {name:?} has zero area")))?;
    if normal.z < (MAX_SUPPORT_TILT_DEG.to_radians()).cos() {
        return Err(Error::Scene(format!(
            "surface {name:?}: support normal opposes gravity (normal {:.3?})",
            normal.as_slice()
        )));
    }
    let centroid = Point3::from(pts.iter().map(|p| p.coords).sum::<Vector3<f64>>() / pts.len() as f64);
    let plane_n = newell.try_normalize(1e-12).unwrap_or(normal);
    let off_plane = pts
        .iter()
        .map(|p| plane_n.dot(&(p - centroid)).abs())
        .fold(0.0, f64::max);
    if off_plane > 1e-4 * scene_scale {
        return Err(Error::Scene(format!(
            "surface {name:?} is non-planar: {off_plane:.3e} m off its plane"
        )));
    }
    if spec.normal.is_some() {
        normal = if plane_n.dot(&normal) >= 0.0 { plane_n } else { -plane_n };
        if normal.z < (MAX_SUPPORT_TILT_DEG.to_radians()).cos() {
            return Err(Error::Scene(format!(
                "surface {name:?}: support normal opposes gravity"
            )));
        }
    } else {
        normal = plane_n;
    }
    let tol = 1e-3 * scene_scale;
    for p in &pts {
        let d = mesh.distance_to(p);
        if d > tol {
            return Err(Error::Scene(format!(
                "surface {name:?} off-mesh: vertex {:?} is {d:.3e} m from the scene mesh",
                p.coords.as_slice()
            )));
        }
    }
    let (u, v) = geometry::plane_basis(&normal);
    let to2 = |p: &Point3<f64>| {
        let d = p - centroid;
        [d.dot(&u), d.dot(&v)]
    };
    let mut polygon_2d: Vec<[f64; 2]> = pts.iter().map(to2).collect();
    let mut polygon = pts.clone();
    if polygon::signed_area(&polygon_2d) < 0.0 {
        polygon_2d.reverse();
        polygon.reverse();
    }
    if !polygon::is_convex(&polygon_2d) {
        return Err(Error::Scene(format!("surface {name:?} must be convex")));
    }
    // Snap the polygon onto its plane.
    let polygon = polygon
        .iter()
        .map(|p| p - normal * normal.dot(&(p - centroid)))
        .collect();
    Ok(SupportSurface {
        name: name.clone(),
        polygon,
        normal,
        origin: centroid,
        u,
        v,
        polygon_2d,
    })
}

pub fn load_scene(path: &Path, surfaces: &[SurfaceSpec]) -> Result<SceneBackground> {
    load_scene_with(path, "scene", surfaces, None, 1.0, None)
}

pub fn load_scene_with(
    path: &Path,
    name: &str,
    surfaces: &[SurfaceSpec],
    up: Option<Vector3<f64>>,
    scale: f64,
    scene_scale: Option<f64>,
) -> Result<SceneBackground> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Validation(format!("scale must be positive, got {scale}")));
    }
    let mut mesh = obj::read_obj(path)?.scaled(scale);
    let mut specs = surfaces.to_vec();
    if let Some(up) = up {
        let up = up
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Scene("up axis must be non-zero".into()))?;
        if let Some(r) = UnitQuaternion::rotation_between(&up, &Vector3::z()) {
            mesh = mesh.rotated(&r);
            for s in &mut specs {
                for p in &mut s.polygon {
                    let q = r * Point3::new(p[0], p[1], p[2]);
                    *p = [q.x, q.y, q.z];
                }
                if let Some(n) = &mut s.normal {
                    let m = r * Vector3::new(n[0], n[1], n[2]);
                    *n = [m.x, m.y, m.z];
                }
            }
        }
    }
    // Surfaces are declared in file units.
    for s in &mut specs {
        for p in &mut s.polygon {
            for c in p.iter_mut() {
                *c *= scale;
            }
        }
    }
    SceneBackground::new(name, mesh, &specs, scene_scale)
}
