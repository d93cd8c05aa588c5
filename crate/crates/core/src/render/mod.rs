//! CPU rasterizer producing the rough RGB image and its ground truths:
//! instance ids, view-space depth and camera-space normals.
//!
//! Cameras follow the OpenCV convention (x right, y down, z forward);
//! pixel `(x, y)` samples at its center `(x + 0.5, y + 0.5)`.

mod encode;

pub use encode::{decode_sample, encode_sample, DecodedSample, SampleMeta, ENCODING_VERSION};

use std::sync::Arc;

use nalgebra::{Matrix3, Point3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assets::{SceneBackground, Texture, TriMesh};
use crate::error::{Error, Result};
use crate::layout::Layout;

pub const DEFAULT_RESOLUTION: u32 = 256;
const TILE: u32 = 32;
const AMBIENT: f64 = 0.35;
const SCENE_ALBEDO: [f32; 3] = [0.62, 0.6, 0.56];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
    /// Camera-to-world rotation.
    pub rotation: UnitQuaternion<f64>,
    /// Camera center in world coordinates.
    pub position: Point3<f64>,
}

impl Camera {
    /// Camera at `eye` looking at `target` with world +Z up and a
    /// horizontal field of view of `fov_deg`.
    pub fn look_at(
        eye: Point3<f64>,
        target: Point3<f64>,
        fov_deg: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Camera> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Validation("camera eye and target coincide".into()))?;
        let up = if z.cross(&Vector3::z()).norm() < 1e-6 { Vector3::y() } else { Vector3::z() };
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::Validation(format!("fov {fov_deg} outside (0, 180)")));
        }
        let f = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        let cam = Camera {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
            near,
            far,
            rotation: UnitQuaternion::from_rotation_matrix(&rot),
            position: eye,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Validation("focal lengths must be positive".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Validation(format!(
                "need 0 < near < far, got near {} far {}",
                self.near, self.far
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("image size must be positive".into()));
        }
        Ok(())
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.position))
    }

    pub fn dir_to_camera(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(v)
    }

    /// Pixel coordinates (continuous) of a camera-space point.
    pub fn project(&self, p: &Vector3<f64>) -> [f64; 2] {
        [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy]
    }

    /// Camera-space point at view depth `z` through the center of pixel `(x, y)`.
    pub fn unproject(&self, x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new((x + 0.5 - self.cx) / self.fx * z, (y + 0.5 - self.cy) / self.fy * z, z)
    }
}

/// Viewpoint region for [`sample_camera`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraProfile {
    /// Orbit radius range around the look-at point (m).
    pub radius: [f64; 2],
    pub elevation_deg: [f64; 2],
    pub azimuth_deg: [f64; 2],
    pub look_at: [f64; 3],
    /// Half-width of the uniform cube the look-at point is jittered in (m).
    pub look_at_jitter: f64,
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

impl Default for CameraProfile {
    fn default() -> Self {
        CameraProfile {
            radius: [1.6, 2.2],
            elevation_deg: [30.0, 55.0],
            azimuth_deg: [0.0, 360.0],
            look_at: [0.0, 0.0, 0.75],
            look_at_jitter: 0.1,
            fov_deg: 50.0,
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
            near: 0.05,
            far: 20.0,
        }
    }
}

impl CameraProfile {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2], name: &str| {
            if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
                Ok(())
            } else {
                Err(Error::Validation(format!("camera {name} range {r:?} is not ordered")))
            }
        };
        ordered(self.radius, "radius")?;
        ordered(self.elevation_deg, "elevation")?;
        ordered(self.azimuth_deg, "azimuth")?;
        if self.radius[0] <= 0.0 {
            return Err(Error::Validation("camera radius must be positive".into()));
        }
        if self.elevation_deg[0] < -90.0 || self.elevation_deg[1] > 90.0 {
            return Err(Error::Validation("camera elevation must be within [-90, 90]".into()));
        }
        if !(self.look_at_jitter >= 0.0) {
            return Err(Error::Validation("look_at_jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// Samples a camera uniformly in the profile's radius, elevation and
/// azimuth ranges around a jittered look-at point. The look-at point is
/// clamped into the scene bounds so the camera always faces the scene.
pub fn sample_camera<R: Rng + ?Sized>(
    scene: &SceneBackground,
    rng: &mut R,
    profile: &CameraProfile,
) -> Result<Camera> {
    profile.validate()?;
    let j = profile.look_at_jitter;
    let mut target = Point3::from(profile.look_at);
    for k in 0..3 {
        target[k] += rng.random_range(-j..=j);
        target[k] = target[k].clamp(scene.aabb.min[k], scene.aabb.max[k]);
    }
    let r = rng.random_range(profile.radius[0]..=profile.radius[1]);
    let el = rng
        .random_range(profile.elevation_deg[0]..=profile.elevation_deg[1])
        .to_radians();
    let az = rng
        .random_range(profile.azimuth_deg[0]..=profile.azimuth_deg[1])
        .to_radians();
    let eye = target + r * Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    Camera::look_at(eye, target, profile.fov_deg, profile.width, profile.height, profile.near, profile.far)
}

#[derive(Debug, Clone)]
pub enum Shade {
    Albedo([f32; 3]),
    Texture(Arc<Texture>),
}

/// World-space triangle with per-vertex normals and optional texture
/// coordinates.
#[derive(Debug, Clone)]
pub struct RasterTriangle {
    pub positions: [Point3<f64>; 3],
    pub normals: [Vector3<f64>; 3],
    pub uvs: [[f64; 2]; 3],
    pub instance: u16,
    pub shade: Shade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub instance: u16,
    pub placement: String,
    pub model: String,
    pub category: String,
}

#[derive(Debug, Clone)]
pub struct RenderedSample {
    pub camera: Camera,
    pub rgb: Vec<[u8; 3]>,
    /// 0 is background (scene or empty).
    pub instance: Vec<u16>,
    /// View-space depth in meters, `f32::INFINITY` where nothing was hit.
    pub depth: Vec<f32>,
    /// Unit camera-space normals facing the camera; zero where nothing was hit.
    pub normal: Vec<[f32; 3]>,
    /// Placements visible in the image, by instance id.
    pub instances: Vec<InstanceInfo>,
}

impl RenderedSample {
    pub fn width(&self) -> u32 {
        self.camera.width
    }

    pub fn height(&self) -> u32 {
        self.camera.height
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.camera.width + x) as usize
    }
}

/// Distinct, stable color per instance id.
pub fn instance_color(instance: u16) -> [f32; 3] {
    let h = (instance as f64 * 0.618_033_988_75).fract() * 6.0;
    let (s, v) = (0.55, 0.85);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

fn mesh_triangles(
    mesh: &TriMesh,
    to_world: impl Fn(&Point3<f64>) -> Point3<f64>,
    rotate: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    instance: u16,
    fallback: [f32; 3],
    out: &mut Vec<RasterTriangle>,
) {
    let shade = match (&mesh.texture, &mesh.uvs) {
        (Some(t), Some(_)) => Shade::Texture(t.clone()),
        _ => Shade::Albedo(mesh.albedo.unwrap_or(fallback)),
    };
    let world: Vec<Point3<f64>> = mesh.vertices.iter().map(&to_world).collect();
    let normals: Vec<Vector3<f64>> = mesh.normals.iter().map(&rotate).collect();
    for f in &mesh.faces {
        let uv = |i: usize| mesh.uvs.as_ref().map_or([0.0, 0.0], |u| u[i]);
        out.push(RasterTriangle {
            positions: [world[f[0]], world[f[1]], world[f[2]]],
            normals: [normals[f[0]], normals[f[1]], normals[f[2]]],
            uvs: [uv(f[0]), uv(f[1]), uv(f[2])],
            instance,
            shade: shade.clone(),
        });
    }
}

/// Scene background as instance 0, placement `i` as instance `i + 1`.
pub fn layout_triangles(layout: &Layout) -> Result<Vec<RasterTriangle>> {
    if layout.placements.len() >= u16::MAX as usize {
        return Err(Error::Validation(format!(
            "{} placements exceed the 16-bit instance range",
            layout.placements.len()
        )));
    }
    let mut tris = Vec::new();
    mesh_triangles(&layout.scene.mesh, |p| *p, |n| *n, 0, SCENE_ALBEDO, &mut tris);
    for (i, p) in layout.placements.iter().enumerate() {
        let id = i as u16 + 1;
        let t = p.transform();
        mesh_triangles(
            &p.object.mesh,
            |v| t * v,
            |n| t.rotation * n,
            id,
            instance_color(id),
            &mut tris,
        );
    }
    Ok(tris)
}

/// Renders a layout; the scene background is drawn but labeled 0.
pub fn rasterize(layout: &Layout, camera: &Camera) -> Result<RenderedSample> {
    let tris = layout_triangles(layout)?;
    let mut sample = rasterize_triangles(&tris, camera)?;
    let mut seen = vec![false; layout.placements.len() + 1];
    for &id in &sample.instance {
        seen[id as usize] = true;
    }
    sample.instances = layout
        .placements
        .iter()
        .enumerate()
        .filter(|(i, _)| seen[i + 1])
        .map(|(i, p)| InstanceInfo {
            instance: i as u16 + 1,
            placement: p.id.clone(),
            model: p.object.id.clone(),
            category: p.object.category.clone(),
        })
        .collect();
    Ok(sample)
}

#[derive(Clone, Copy)]
struct CamVert {
    p: Vector3<f64>,
    n: Vector3<f64>,
    uv: [f64; 2],
}

impl CamVert {
    fn lerp(&self, o: &CamVert, t: f64) -> CamVert {
        CamVert {
            p: self.p + (o.p - self.p) * t,
            n: self.n + (o.n - self.n) * t,
            uv: [
                self.uv[0] + (o.uv[0] - self.uv[0]) * t,
                self.uv[1] + (o.uv[1] - self.uv[1]) * t,
            ],
        }
    }
}

struct ScreenTri {
    s: [[f64; 2]; 3],
    v: [CamVert; 3],
    inv_area: f64,
    source: usize,
    bbox: [u32; 4],
}

/// Clips a polygon to `z >= near`.
fn clip_near(poly: &[CamVert], near: f64) -> Vec<CamVert> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let (ina, inb) = (a.p.z >= near, b.p.z >= near);
        if ina {
            out.push(*a);
        }
        if ina != inb {
            out.push(a.lerp(b, (near - a.p.z) / (b.p.z - a.p.z)));
        }
    }
    out
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn setup(tris: &[RasterTriangle], cam: &Camera) -> Vec<ScreenTri> {
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut out = Vec::new();
    for (idx, t) in tris.iter().enumerate() {
        let verts: Vec<CamVert> = (0..3)
            .map(|k| CamVert {
                p: cam.world_to_camera(&t.positions[k]),
                n: cam.dir_to_camera(&t.normals[k]),
                uv: t.uvs[k],
            })
            .collect();
        if verts.iter().all(|v| v.p.z < cam.near) || verts.iter().all(|v| v.p.z > cam.far) {
            continue;
        }
        let poly = clip_near(&verts, cam.near);
        for k in 1..poly.len().saturating_sub(1) {
            let v = [poly[0], poly[k], poly[k + 1]];
            let s = [cam.project(&v[0].p), cam.project(&v[1].p), cam.project(&v[2].p)];
            let area = edge(s[0], s[1], s[2]);
            if !(area.abs() > 1e-12) {
                continue;
            }
            let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
            let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
            let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            if max_x < 0.0 || max_y < 0.0 || min_x > w || min_y > h {
                continue;
            }
            // Pixels whose centers can fall inside.
            let x0 = (min_x - 0.5).ceil().max(0.0) as u32;
            let y0 = (min_y - 0.5).ceil().max(0.0) as u32;
            let x1 = ((max_x - 0.5).floor().min(w - 1.0)).max(-1.0);
            let y1 = ((max_y - 0.5).floor().min(h - 1.0)).max(-1.0);
            if x1 < x0 as f64 || y1 < y0 as f64 {
                continue;
            }
            out.push(ScreenTri {
                s,
                v,
                inv_area: 1.0 / area,
                source: idx,
                bbox: [x0, y0, x1 as u32, y1 as u32],
            });
        }
    }
    out
}

struct Tile {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
    rgb: Vec<[u8; 3]>,
    instance: Vec<u16>,
    depth: Vec<f32>,
    normal: Vec<[f32; 3]>,
}

fn shade_pixel(shade: &Shade, uv: [f64; 2], n: &Vector3<f64>, light: &Vector3<f64>) -> [u8; 3] {
    let base = match shade {
        Shade::Albedo(a) => [a[0] as f64, a[1] as f64, a[2] as f64],
        Shade::Texture(t) => {
            let c = t.sample(uv);
            [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]
        }
    };
    let k = AMBIENT + (1.0 - AMBIENT) * n.dot(light).max(0.0);
    base.map(|c| (c * k * 255.0).round().clamp(0.0, 255.0) as u8)
}

fn render_tile(
    x0: u32,
    y0: u32,
    cam: &Camera,
    screen: &[ScreenTri],
    bins: &[usize],
    tris: &[RasterTriangle],
    light: &Vector3<f64>,
) -> Tile {
    let w = TILE.min(cam.width - x0);
    let h = TILE.min(cam.height - y0);
    let n = (w * h) as usize;
    let mut zbuf = vec![f64::INFINITY; n];
    let mut hit: Vec<Option<(usize, [f64; 3])>> = vec![None; n];
    for &ti in bins {
        let t = &screen[ti];
        let xa = t.bbox[0].max(x0);
        let xb = t.bbox[2].min(x0 + w - 1);
        let ya = t.bbox[1].max(y0);
        let yb = t.bbox[3].min(y0 + h - 1);
        for y in ya..=yb {
            for x in xa..=xb {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let b0 = edge(t.s[1], t.s[2], p) * t.inv_area;
                let b1 = edge(t.s[2], t.s[0], p) * t.inv_area;
                let b2 = edge(t.s[0], t.s[1], p) * t.inv_area;
                if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                    continue;
                }
                let iz = b0 / t.v[0].p.z + b1 / t.v[1].p.z + b2 / t.v[2].p.z;
                let z = 1.0 / iz;
                if !(z >= cam.near && z <= cam.far) {
                    continue;
                }
                let k = ((y - y0) * w + (x - x0)) as usize;
                if z < zbuf[k] {
                    zbuf[k] = z;
                    let pc = [b0 / t.v[0].p.z * z, b1 / t.v[1].p.z * z, b2 / t.v[2].p.z * z];
                    hit[k] = Some((ti, pc));
                }
            }
        }
    }
    let mut tile = Tile {
        x0,
        y0,
        w,
        h,
        rgb: vec![[0, 0, 0]; n],
        instance: vec![0; n],
        depth: vec![f32::INFINITY; n],
        normal: vec![[0.0; 3]; n],
    };
    for (k, hit) in hit.iter().enumerate() {
        let Some((ti, b)) = hit else { continue };
        let t = &screen[*ti];
        let src = &tris[t.source];
        let mut nrm = t.v[0].n * b[0] + t.v[1].n * b[1] + t.v[2].n * b[2];
        if nrm.norm() < 1e-12 {
            // Degenerate vertex normals: fall back to the geometric normal.
            nrm = (t.v[1].p - t.v[0].p).cross(&(t.v[2].p - t.v[0].p));
        }
        let x = x0 + k as u32 % w;
        let y = y0 + k as u32 / w;
        let ray = cam.unproject(x as f64, y as f64, 1.0);
        let mut nrm = nrm.normalize();
        if nrm.dot(&ray) > 0.0 {
            nrm = -nrm;
        }
        let uv = [
            b[0] * t.v[0].uv[0] + b[1] * t.v[1].uv[0] + b[2] * t.v[2].uv[0],
            b[0] * t.v[0].uv[1] + b[1] * t.v[1].uv[1] + b[2] * t.v[2].uv[1],
        ];
        tile.rgb[k] = shade_pixel(&src.shade, uv, &nrm, light);
        tile.instance[k] = src.instance;
        tile.depth[k] = zbuf[k] as f32;
        tile.normal[k] = [nrm.x as f32, nrm.y as f32, nrm.z as f32];
    }
    tile
}

/// Z-buffered rasterization of world-space triangles, in parallel over
/// 32x32 tiles. Back faces are drawn; normals are flipped to face the camera.
pub fn rasterize_triangles(tris: &[RasterTriangle], camera: &Camera) -> Result<RenderedSample> {
    camera.validate()?;
    let screen = setup(tris, camera);
    let tiles_x = camera.width.div_ceil(TILE);
    let tiles_y = camera.height.div_ceil(TILE);
    let mut bins = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (i, t) in screen.iter().enumerate() {
        for ty in t.bbox[1] / TILE..=t.bbox[3] / TILE {
            for tx in t.bbox[0] / TILE..=t.bbox[2] / TILE {
                bins[(ty * tiles_x + tx) as usize].push(i);
            }
        }
    }
    let light = camera.dir_to_camera(&Vector3::new(0.3, 0.2, 1.0).normalize());
    let tiles: Vec<Tile> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|i| {
            let (tx, ty) = (i % tiles_x, i / tiles_x);
            render_tile(tx * TILE, ty * TILE, camera, &screen, &bins[i as usize], tris, &light)
        })
        .collect();
    let n = (camera.width * camera.height) as usize;
    let mut sample = RenderedSample {
        camera: *camera,
        rgb: vec![[0, 0, 0]; n],
        instance: vec![0; n],
        depth: vec![f32::INFINITY; n],
        normal: vec![[0.0; 3]; n],
        instances: Vec::new(),
    };
    for t in tiles {
        for row in 0..t.h {
            let src = (row * t.w) as usize..((row + 1) * t.w) as usize;
            let dst = ((t.y0 + row) * camera.width + t.x0) as usize;
            let dst = dst..dst + t.w as usize;
            sample.rgb[dst.clone()].copy_from_slice(&t.rgb[src.clone()]);
            sample.instance[dst.clone()].copy_from_slice(&t.instance[src.clone()]);
            sample.depth[dst.clone()].copy_from_slice(&t.depth[src.clone()]);
            sample.normal[dst].copy_from_slice(&t.normal[src]);
        }
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::layout::Placement;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Unit cube centered at (0, 0, 2.5) seen from the origin looking +x
    /// in world, so its front face is 2.0 m away.
    fn cube_scene() -> (Layout, Camera) {
        let scene = fixtures::floor_scene(5.0);
        let cube = Placement::new(
            "c",
            fixtures::cube_model("c", "box", 0.5),
            UnitQuaternion::identity(),
            Point3::new(2.5, 0.0, 1.5),
        );
        let layout = Layout::new(scene, vec![cube]).unwrap();
        let cam = Camera::look_at(
            Point3::new(0.0, 0.0, 1.5),
            Point3::new(1.0, 0.0, 1.5),
            60.0,
            64,
            64,
            0.1,
            50.0,
        )
        .unwrap();
        (layout, cam)
    }

    #[test]
    fn look_at_axes() {
        let (_, cam) = cube_scene();
        let fwd = cam.rotation * Vector3::z();
        let right = cam.rotation * Vector3::x();
        let down = cam.rotation * Vector3::y();
        assert!((fwd - Vector3::x()).norm() < 1e-12);
        assert!((right + Vector3::y()).norm() < 1e-12);
        assert!((down + Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn face_on_cube_depth_and_normal() {
        let (layout, cam) = cube_scene();
        let s = rasterize(&layout, &cam).unwrap();
        let k = s.index(32, 32);
        assert_eq!(s.instance[k], 1);
        assert!((s.depth[k] as f64 - 2.0).abs() < 1e-4);
        let n = s.normal[k];
        assert!((n[0].abs() + n[1].abs()) < 1e-6 && (n[2] + 1.0).abs() < 1e-6);
        assert_eq!(s.instances.len(), 1);
    }

    #[test]
    fn empty_frustum_is_background() {
        let (mut layout, _) = cube_scene();
        layout.placements.clear();
        // Looking straight up: nothing above the floor.
        let cam = Camera::look_at(Point3::new(0.0, 0.0, 1.0), Point3::new(0.0, 0.0, 2.0), 60.0, 32, 32, 0.1, 10.0)
            .unwrap();
        let s = rasterize(&layout, &cam).unwrap();
        assert!(s.instance.iter().all(|&i| i == 0));
        assert!(s.depth.iter().all(|d| d.is_infinite()));
        assert!(s.instances.is_empty());
    }

    #[test]
    fn rendering_is_deterministic() {
        let (layout, cam) = cube_scene();
        let a = rasterize(&layout, &cam).unwrap();
        let b = rasterize(&layout, &cam).unwrap();
        assert_eq!(a.rgb, b.rgb);
        assert_eq!(a.instance, b.instance);
        assert_eq!(
            a.depth.iter().map(|d| d.to_bits()).collect::<Vec<_>>(),
            b.depth.iter().map(|d| d.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn near_plane_clipping_keeps_depth_in_range() {
        // Camera just above the floor looking along it: floor triangles cross the near plane.
        let (layout, _) = cube_scene();
        let cam = Camera::look_at(Point3::new(-4.0, 0.0, 0.3), Point3::new(0.0, 0.0, 0.0), 70.0, 48, 48, 0.1, 50.0)
            .unwrap();
        let s = rasterize(&layout, &cam).unwrap();
        for (d, n) in s.depth.iter().zip(&s.normal) {
            if d.is_finite() {
                assert!(*d as f64 >= cam.near - 1e-6 && *d as f64 <= cam.far);
                let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                assert!((len - 1.0).abs() < 1e-3);
            }
        }
        assert!(s.depth.iter().any(|d| d.is_finite()));
    }

    #[test]
    fn camera_samples_respect_profile() {
        let scene = fixtures::table_scene();
        let p = CameraProfile::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let c = sample_camera(&scene, &mut rng, &p).unwrap();
            let fwd = c.rotation * Vector3::z();
            // Looks down into the scene.
            assert!(fwd.z < 0.0);
        }
        let fixed = CameraProfile {
            radius: [2.0, 2.0],
            elevation_deg: [40.0, 40.0],
            azimuth_deg: [10.0, 10.0],
            look_at_jitter: 0.0,
            ..p
        };
        let a = sample_camera(&scene, &mut ChaCha8Rng::seed_from_u64(1), &fixed).unwrap();
        let b = sample_camera(&scene, &mut ChaCha8Rng::seed_from_u64(2), &fixed).unwrap();
        assert_eq!(a, b);
    }
}
