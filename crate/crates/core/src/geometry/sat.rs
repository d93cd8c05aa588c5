//! Separating-axis tests between convex polytopes: static penetration depth
//! and time of first contact under translation.

use nalgebra::{Isometry3, Point3, Vector3};

use super::hull::ConvexHull;

const PARALLEL_EPS: f64 = 1e-9;

/// A convex polytope prepared for SAT queries.
#[derive(Debug, Clone)]
pub struct Polytope {
    pub vertices: Vec<Point3<f64>>,
    pub face_normals: Vec<Vector3<f64>>,
    pub edge_dirs: Vec<Vector3<f64>>,
}

fn push_unique_dir(dirs: &mut Vec<Vector3<f64>>, d: Vector3<f64>) {
    if dirs
        .iter()
        .all(|e| e.cross(&d).norm() > PARALLEL_EPS)
    {
        dirs.push(d);
    }
}

fn push_unique_normal(normals: &mut Vec<Vector3<f64>>, n: Vector3<f64>) {
    if normals.iter().all(|m| (m - n).norm() > PARALLEL_EPS) {
        normals.push(n);
    }
}

impl Polytope {
    pub fn from_hull(hull: &ConvexHull) -> Polytope {
        let mut face_normals = Vec::new();
        let mut tri_normals = Vec::with_capacity(hull.faces.len());
        for f in &hull.faces {
            let a = hull.vertices[f[0]];
            let n = (hull.vertices[f[1]] - a).cross(&(hull.vertices[f[2]] - a));
            let n = n.try_normalize(0.0).unwrap_or_else(Vector3::zeros);
            tri_normals.push(n);
            if n != Vector3::zeros() {
                push_unique_normal(&mut face_normals, n);
            }
        }
        // An edge is a real feature edge only when its two triangles are not coplanar.
        let mut edge_faces: std::collections::HashMap<(usize, usize), Vec<usize>> =
            std::collections::HashMap::new();
        for (fi, f) in hull.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let mut keys: Vec<_> = edge_faces.keys().copied().collect();
        keys.sort_unstable();
        let mut edge_dirs = Vec::new();
        for key in keys {
            let fs = &edge_faces[&key];
            let sharp = hull.planar
                || fs.len() != 2
                || (tri_normals[fs[0]] - tri_normals[fs[1]]).norm() > PARALLEL_EPS;
            if !sharp {
                continue;
            }
            if let Some(d) = (hull.vertices[key.1] - hull.vertices[key.0]).try_normalize(0.0) {
                push_unique_dir(&mut edge_dirs, d);
            }
        }
        Polytope {
            vertices: hull.vertices.clone(),
            face_normals,
            edge_dirs,
        }
    }

    /// Convex prism: a planar convex polygon swept by `-normal * thickness`.
    pub fn prism(polygon: &[Point3<f64>], normal: Vector3<f64>, thickness: f64) -> Polytope {
        let n = polygon.len();
        let mut vertices = polygon.to_vec();
        vertices.extend(polygon.iter().map(|p| p - normal * thickness));
        let mut face_normals = vec![normal, -normal];
        let mut edge_dirs = vec![normal];
        for i in 0..n {
            let e = polygon[(i + 1) % n] - polygon[i];
            if let Some(d) = e.try_normalize(0.0) {
                push_unique_dir(&mut edge_dirs, d);
                if let Some(side) = d.cross(&normal).try_normalize(0.0) {
                    push_unique_normal(&mut face_normals, side);
                    push_unique_normal(&mut face_normals, -side);
                }
            }
        }
        Polytope {
            vertices,
            face_normals,
            edge_dirs,
        }
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Polytope {
        Polytope {
            vertices: self.vertices.iter().map(|p| iso * p).collect(),
            face_normals: self.face_normals.iter().map(|n| iso.rotation * n).collect(),
            edge_dirs: self.edge_dirs.iter().map(|d| iso.rotation * d).collect(),
        }
    }

    pub fn translated(&self, t: &Vector3<f64>) -> Polytope {
        Polytope {
            vertices: self.vertices.iter().map(|p| p + t).collect(),
            face_normals: self.face_normals.clone(),
            edge_dirs: self.edge_dirs.clone(),
        }
    }

    pub fn project(&self, axis: &Vector3<f64>) -> (f64, f64) {
        self.vertices
            .iter()
            .map(|p| axis.dot(&p.coords))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn aabb(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in &self.vertices {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        (Point3::from(lo), Point3::from(hi))
    }
}

fn candidate_axes(a: &Polytope, b: &Polytope) -> Vec<Vector3<f64>> {
    let mut axes: Vec<Vector3<f64>> =
        Vec::with_capacity(a.face_normals.len() + b.face_normals.len());
    axes.extend(a.face_normals.iter().copied());
    axes.extend(b.face_normals.iter().copied());
    for ea in &a.edge_dirs {
        for eb in &b.edge_dirs {
            let c = ea.cross(eb);
            let len = c.norm();
            if len > PARALLEL_EPS {
                axes.push(c / len);
            }
        }
    }
    axes
}

/// Minimum translation distance separating `a` and `b`; 0 when they are
/// disjoint or merely touching.
pub fn penetration_depth(a: &Polytope, b: &Polytope) -> f64 {
    let mut depth = f64::INFINITY;
    for axis in candidate_axes(a, b) {
        let (a0, a1) = a.project(&axis);
        let (b0, b1) = b.project(&axis);
        let overlap = (a1 - b0).min(b1 - a0);
        if overlap <= 0.0 {
            return 0.0;
        }
        depth = depth.min(overlap);
    }
    if depth.is_finite() {
        depth
    } else {
        0.0
    }
}

/// Interval of travel distances `t` along unit `dir` during which `moving`
/// translated by `t * dir` overlaps `obstacle`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactInterval {
    pub enter: f64,
    pub exit: f64,
}

pub fn sweep(moving: &Polytope, dir: &Vector3<f64>, obstacle: &Polytope) -> Option<ContactInterval> {
    let mut enter = f64::NEG_INFINITY;
    let mut exit = f64::INFINITY;
    for axis in candidate_axes(moving, obstacle) {
        let (a0, a1) = moving.project(&axis);
        let (b0, b1) = obstacle.project(&axis);
        let speed = axis.dot(dir);
        if speed.abs() < 1e-15 {
            if a1 < b0 || b1 < a0 {
                return None;
            }
            continue;
        }
        let (t0, t1) = if speed > 0.0 {
            ((b0 - a1) / speed, (b1 - a0) / speed)
        } else {
            ((b1 - a0) / speed, (b0 - a1) / speed)
        };
        enter = enter.max(t0);
        exit = exit.min(t1);
        if enter > exit {
            return None;
        }
    }
    Some(ContactInterval { enter, exit })
}
