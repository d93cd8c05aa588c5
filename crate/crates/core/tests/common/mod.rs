//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's own geometry, density or raster code.

#![allow(dead_code)]

use std::collections::BTreeMap;

use geoscene::dataset::{Overrides, Project};
use geoscene::layout::Layout;
use geoscene::render::Camera;
use nalgebra::{Point3, Vector3};
use serde_json::Value;

pub fn demo_project() -> (tempfile::TempDir, Project) {
    let dir = tempfile::tempdir().unwrap();
    geoscene::fixtures::write_demo_project(dir.path()).unwrap();
    let project = Project::open(&[dir.path().join("config.json")], &Overrides::default()).unwrap();
    (dir, project)
}

// ---- rotations as plain 3x3 arrays ----

pub type M3 = [[f64; 3]; 3];

pub fn quat_matrix(q: [f64; 4]) -> M3 {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = q.map(|c| c / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Rotation angle of `A B^T`.
pub fn rotation_angle(a: &M3, b: &M3) -> f64 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[j][k]).sum();
        }
    }
    let c = (m[0][0] + m[1][1] + m[2][2] - 1.0) / 2.0;
    let s = norm3([m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]]) / 2.0;
    s.atan2(c)
}

/// Angle between the world up axis expressed in each body frame.
pub fn up_angle(a: &M3, b: &M3) -> f64 {
    let (ua, ub) = (a[2], b[2]);
    norm3(cross3(ua, ub)).atan2(dot3(ua, ub))
}

// ---- brute-force likelihood from the raw prior document ----

pub struct PairOracle {
    pub k_p: f64,
    pub k_l: f64,
    pub k_r: f64,
}

/// Log-likelihood of a layout straight from the knowledge JSON. Surfaces are
/// assumed horizontal, so in-plane distance is the xy distance.
pub fn oracle_log_k(doc: &Value, layout: &Layout) -> (f64, Vec<PairOracle>) {
    let pose_bw = doc["pose_bandwidth_rad"].as_f64().unwrap_or(0.3);
    let loc_bw = doc["location_bandwidth_m"]
        .as_f64()
        .unwrap_or(0.05 * layout.scene.scene_scale);
    let sigma = doc["config"]["sigma"].as_f64().unwrap_or(0.1);
    let gamma = doc["config"]["gamma"].as_f64().unwrap_or(0.5);
    let kernel = |d: f64, bw: f64| (-(d * d) / (2.0 * bw * bw)).exp();
    let f = |v: &Value| v.as_f64().unwrap();

    let densities: Vec<(f64, f64)> = layout
        .placements
        .iter()
        .map(|p| {
            let cat = &doc["categories"][p.category()];
            let q = p.pose.quaternion();
            let r = quat_matrix([q.w, q.i, q.j, q.k]);
            let mut dp: f64 = 0.0;
            for k in cat["keyposes"].as_array().unwrap() {
                let kq = k["quat"].as_array().unwrap();
                let kr = quat_matrix([f(&kq[0]), f(&kq[1]), f(&kq[2]), f(&kq[3])]);
                let yaw_free = k["yaw_free"].as_bool().unwrap_or(true);
                let angle = if yaw_free { up_angle(&r, &kr) } else { rotation_angle(&r, &kr) };
                dp = dp.max(f(&k["prob"]) * kernel(angle, pose_bw));
            }
            let mut dl: f64 = 0.0;
            let surface = p.surface.as_deref().unwrap_or("");
            for a in cat["anchors"].as_array().into_iter().flatten() {
                if a["surface"].as_str() != Some(surface) {
                    continue;
                }
                let xyz = a["xyz"].as_array().unwrap();
                let d = (p.location.x - f(&xyz[0])).hypot(p.location.y - f(&xyz[1]));
                dl = dl.max(f(&a["prob"]) * kernel(d, loc_bw));
            }
            (dp, dl)
        })
        .collect();

    let mut relations = BTreeMap::new();
    for r in doc["pairs"].as_array().into_iter().flatten() {
        let (a, b) = (r["a"].as_str().unwrap(), r["b"].as_str().unwrap());
        let v = (f(&r["occ_prob"]), f(&r["sugg_dist_m"]));
        relations.insert((a.to_string(), b.to_string()), v);
        relations.insert((b.to_string(), a.to_string()), v);
    }

    let ln = |x: f64| x.max(1e-12).ln();
    let ps = &layout.placements;
    let mut total = 0.0;
    let mut pairs = Vec::new();
    for i in 0..ps.len() {
        for j in i + 1..ps.len() {
            let k_p = densities[i].0 * densities[j].0;
            let k_l = densities[i].1 * densities[j].1;
            let key = (ps[i].category().to_string(), ps[j].category().to_string());
            let k_r = match relations.get(&key) {
                Some(&(occ, sugg)) if occ > gamma => {
                    let d = (ps[i].location - ps[j].location).norm();
                    kernel(d - sugg, sigma)
                }
                _ => 1.0,
            };
            total += ln(k_p) + ln(k_l) + ln(k_r);
            pairs.push(PairOracle { k_p, k_l, k_r });
        }
    }
    (total, pairs)
}

// ---- convex bodies ----

/// Convex body as points plus the axes a separating test needs.
#[derive(Debug, Clone)]
pub struct Body {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub edges: Vec<Vector3<f64>>,
}

/// World-space hull of each placement, from the hull triangles.
pub fn placement_bodies(layout: &Layout) -> Vec<Body> {
    layout
        .placements
        .iter()
        .map(|p| {
            let t = p.transform();
            let hull = &p.object.convex_hull;
            let points: Vec<Point3<f64>> = hull.vertices.iter().map(|v| t * v).collect();
            let mut normals = Vec::new();
            let mut edges = Vec::new();
            for f in &hull.faces {
                let [a, b, c] = [points[f[0]], points[f[1]], points[f[2]]];
                if let Some(n) = (b - a).cross(&(c - a)).try_normalize(1e-15) {
                    normals.push(n);
                }
                for (u, v) in [(a, b), (b, c), (c, a)] {
                    if let Some(e) = (v - u).try_normalize(1e-15) {
                        edges.push(e);
                    }
                }
            }
            Body { points, normals, edges }
        })
        .collect()
}

/// Horizontal support polygon extruded downward by `thickness`.
pub fn slab_body(polygon: &[Point3<f64>], thickness: f64) -> Body {
    let mut points = polygon.to_vec();
    points.extend(polygon.iter().map(|p| p - Vector3::z() * thickness));
    let mut normals = vec![Vector3::z(), -Vector3::z()];
    let mut edges = vec![Vector3::z()];
    for i in 0..polygon.len() {
        let e = polygon[(i + 1) % polygon.len()] - polygon[i];
        if let Some(e) = e.try_normalize(1e-15) {
            normals.push(e.cross(&Vector3::z()));
            edges.push(e);
        }
    }
    Body { points, normals, edges }
}

fn extent(points: &[Point3<f64>], axis: &Vector3<f64>) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = axis.dot(&p.coords);
        (lo.min(v), hi.max(v))
    })
}

/// Exact separating-axis penetration depth; zero when separated.
pub fn sat_depth(a: &Body, b: &Body) -> f64 {
    let mut axes: Vec<Vector3<f64>> = a.normals.iter().chain(&b.normals).copied().collect();
    for ea in &a.edges {
        for eb in &b.edges {
            if let Some(n) = ea.cross(eb).try_normalize(1e-9) {
                axes.push(n);
            }
        }
    }
    let mut depth = f64::INFINITY;
    for axis in &axes {
        let (a0, a1) = extent(&a.points, axis);
        let (b0, b1) = extent(&b.points, axis);
        let overlap = (a1 - b0).min(b1 - a0);
        if overlap <= 0.0 {
            return 0.0;
        }
        depth = depth.min(overlap);
    }
    depth
}

// ---- planar polygons ----

pub type P2 = [f64; 2];

fn cross2(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
pub fn hull2(points: &[P2]) -> Vec<P2> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<P2> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross2(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross2(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Sutherland-Hodgman clip of `subject` by the convex counter-clockwise `clip`.
pub fn clip2(subject: &[P2], clip: &[P2]) -> Vec<P2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (cross2(a, b, p), cross2(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    out
}

/// Distance from `p` to a polygon's boundary, positive inside; for one or
/// two points, minus the distance to the point or segment.
pub fn inset2(poly: &[P2], p: P2) -> f64 {
    let seg = |a: P2, b: P2| {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let l2 = dx * dx + dy * dy;
        let t = if l2 > 0.0 {
            (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
    };
    match poly.len() {
        0 => f64::NEG_INFINITY,
        1 => -seg(poly[0], poly[0]),
        2 => -seg(poly[0], poly[1]),
        n => {
            let d = (0..n).map(|i| seg(poly[i], poly[(i + 1) % n])).fold(f64::INFINITY, f64::min);
            let inside = (0..n).all(|i| cross2(poly[i], poly[(i + 1) % n], p) >= 0.0);
            if inside {
                d
            } else {
                -d
            }
        }
    }
}

/// Support verdict for one object: contact patches under it and the inset
/// of its center of mass in their convex hull.
pub struct SupportOracle {
    pub supports: usize,
    pub inset: f64,
    pub degenerate: bool,
}

/// Resting contacts found by comparing the flat bottom of each body with the
/// flat tops of the support slabs and of the other bodies.
pub fn support_oracle(layout: &Layout, tol: f64) -> Vec<SupportOracle> {
    let bodies = placement_bodies(layout);
    let xy = |p: &Point3<f64>| [p.x, p.y];
    let cap = |b: &Body, top: bool| -> (f64, Vec<P2>) {
        let z = if top {
            b.points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max)
        } else {
            b.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min)
        };
        let pts: Vec<P2> = b.points.iter().filter(|p| (p.z - z).abs() <= tol).map(xy).collect();
        (z, hull2(&pts))
    };
    let mut tops: Vec<(f64, Vec<P2>)> = layout
        .scene
        .support_surfaces
        .iter()
        .map(|s| (s.polygon[0].z, hull2(&s.polygon.iter().map(xy).collect::<Vec<_>>())))
        .collect();
    let n_surfaces = tops.len();
    tops.extend(bodies.iter().map(|b| cap(b, true)));
    bodies
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let (z, bottom) = cap(b, false);
            let mut patch = Vec::new();
            let mut supports = 0;
            for (k, (tz, top)) in tops.iter().enumerate() {
                if k == n_surfaces + i || (z - tz).abs() > tol {
                    continue;
                }
                let piece = if bottom.len() >= 3 && top.len() >= 3 {
                    clip2(&bottom, top)
                } else {
                    // Edge or point contact: keep the points of each cap that
                    // lie over the other.
                    let over = |pts: &[P2], region: &[P2]| -> Vec<P2> {
                        pts.iter().copied().filter(|&p| inset2(region, p) >= -1e-9).collect()
                    };
                    [over(&bottom, top), over(top, &bottom)].concat()
                };
                if !piece.is_empty() {
                    supports += 1;
                    patch.extend(piece);
                }
            }
            let com = layout.placements[i].transform() * layout.placements[i].object.center_of_mass;
            let poly = hull2(&patch);
            SupportOracle {
                supports,
                inset: inset2(&poly, [com.x, com.y]),
                degenerate: poly.len() < 3,
            }
        })
        .collect()
}

// ---- ray casting ----

pub struct WorldTriangle {
    pub v: [Point3<f64>; 3],
    pub instance: u16,
}

/// Scene triangles as instance 0, placement `i` as instance `i + 1`.
pub fn world_triangles(layout: &Layout) -> Vec<WorldTriangle> {
    let mut out: Vec<WorldTriangle> = layout
        .scene
        .mesh
        .faces
        .iter()
        .map(|f| WorldTriangle {
            v: f.map(|i| layout.scene.mesh.vertices[i]),
            instance: 0,
        })
        .collect();
    for (k, p) in layout.placements.iter().enumerate() {
        let t = p.transform();
        let m = &p.object.mesh;
        out.extend(m.faces.iter().map(|f| WorldTriangle {
            v: f.map(|i| t * m.vertices[i]),
            instance: k as u16 + 1,
        }));
    }
    out
}

/// Nearest hit along a pixel-center ray, in view depth.
pub struct RayHit {
    pub instance: u16,
    pub depth: f64,
    /// Within `eps` of a triangle edge, or a different instance within
    /// `eps` depth: the label is not well defined.
    pub ambiguous: bool,
}

pub fn cast_pixel(camera: &Camera, tris: &[WorldTriangle], x: u32, y: u32, eps: f64) -> Option<RayHit> {
    let dir_cam = Vector3::new(
        (x as f64 + 0.5 - camera.cx) / camera.fx,
        (y as f64 + 0.5 - camera.cy) / camera.fy,
        1.0,
    );
    let dir = camera.rotation * dir_cam;
    let o = camera.position;
    let mut hits: Vec<(f64, u16, bool)> = Vec::new();
    for t in tris {
        let e1 = t.v[1] - t.v[0];
        let e2 = t.v[2] - t.v[0];
        let p = dir.cross(&e2);
        let det = e1.dot(&p);
        if det.abs() < 1e-14 {
            continue;
        }
        let s = o - t.v[0];
        let u = s.dot(&p) / det;
        let q = s.cross(&e1);
        let v = dir.dot(&q) / det;
        let w = 1.0 - u - v;
        if u < -eps || v < -eps || w < -eps {
            continue;
        }
        // `dir` has unit view-z, so the ray parameter is the view depth.
        let depth = e2.dot(&q) / det;
        if depth < camera.near || depth > camera.far {
            continue;
        }
        let edge = u < eps || v < eps || w < eps;
        hits.push((depth, t.instance, edge));
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let &(depth, instance, edge) = hits.first()?;
    let tie = hits[1..]
        .iter()
        .take_while(|h| h.0 - depth <= eps * depth.max(1.0))
        .any(|h| h.1 != instance);
    Some(RayHit {
        instance,
        depth,
        ambiguous: edge || tie,
    })
}
