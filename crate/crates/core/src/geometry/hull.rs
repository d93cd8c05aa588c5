//! Incremental 3D convex hull.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

/// Convex hull of a point cloud.
///
/// `faces` are outward-oriented triangles indexing into `vertices`. A planar
/// input produces a degenerate hull: `planar` is set, `vertices` holds the
/// 2D hull of the points in the plane and `faces` fans that polygon twice,
/// once per side.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHull {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub planar: bool,
}

#[derive(Debug, Clone, Copy)]
struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    alive: bool,
}

impl Face {
    fn new(pts: &[Point3<f64>], v: [usize; 3]) -> Option<Face> {
        let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
        let len = n.norm();
        if len == 0.0 || !len.is_finite() {
            return None;
        }
        let normal = n / len;
        Some(Face {
            v,
            normal,
            offset: normal.dot(&pts[v[0]].coords),
            alive: true,
        })
    }

    fn distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

fn extent(points: &[Point3<f64>]) -> f64 {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    (hi - lo).amax()
}

/// Computes the convex hull of `points`.
///
/// Fails when fewer than three distinct points are given or all points are
/// collinear. Coplanar input yields a hull with `planar == true`.
pub fn convex_hull(points: &[Point3<f64>]) -> Result<ConvexHull> {
    if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
        return Err(Error::Mesh("non-finite coordinate in hull input".into()));
    }
    let mut pts: Vec<Point3<f64>> = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.total_cmp(&b.x)
            .then(a.y.total_cmp(&b.y))
            .then(a.z.total_cmp(&b.z))
    });
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::Mesh(format!(
            "convex hull needs at least 3 distinct points, got {}",
            pts.len()
        )));
    }
    let scale = extent(&pts).max(1e-300);
    let eps = 1e-11 * scale;

    // Initial simplex: extreme point, farthest point, farthest from line,
    // farthest from plane.
    let i0 = 0;
    let i1 = (0..pts.len())
        .max_by(|&a, &b| {
            (pts[a] - pts[i0])
                .norm_squared()
                .total_cmp(&(pts[b] - pts[i0]).norm_squared())
        })
        .unwrap();
    let axis = (pts[i1] - pts[i0]).normalize();
    let line_dist = |p: &Point3<f64>| {
        let d = p - pts[i0];
        (d - axis * d.dot(&axis)).norm()
    };
    let i2 = (0..pts.len())
        .max_by(|&a, &b| line_dist(&pts[a]).total_cmp(&line_dist(&pts[b])))
        .unwrap();
    if line_dist(&pts[i2]) <= eps {
        return Err(Error::Mesh("hull input is collinear".into()));
    }
    let plane_n = (pts[i1] - pts[i0]).cross(&(pts[i2] - pts[i0])).normalize();
    let plane_dist = |p: &Point3<f64>| plane_n.dot(&(p - pts[i0]));
    let i3 = (0..pts.len())
        .max_by(|&a, &b| {
            plane_dist(&pts[a])
                .abs()
                .total_cmp(&plane_dist(&pts[b]).abs())
        })
        .unwrap();
    if plane_dist(&pts[i3]).abs() <= eps {
        return Ok(planar_hull(&pts, plane_n));
    }

    let mut faces: Vec<Face> = Vec::new();
    let simplex = [i0, i1, i2, i3];
    let centroid = Point3::from(
        simplex
            .iter()
            .map(|&i| pts[i].coords)
            .sum::<Vector3<f64>>()
            / 4.0,
    );
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        let mut f = Face::new(&pts, tri).expect("simplex faces are non-degenerate");
        if f.distance(&centroid) > 0.0 {
            f = Face::new(&pts, [tri[0], tri[2], tri[1]]).unwrap();
        }
        faces.push(f);
    }

    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut visible: Vec<usize> = Vec::new();
    for pi in 0..pts.len() {
        if simplex.contains(&pi) {
            continue;
        }
        let p = pts[pi];
        visible.clear();
        visible.extend(
            faces
                .iter()
                .enumerate()
                .filter(|(_, f)| f.alive && f.distance(&p) > eps)
                .map(|(i, _)| i),
        );
        if visible.is_empty() {
            continue;
        }
        edges.clear();
        for &fi in &visible {
            let v = faces[fi].v;
            edges.extend([(v[0], v[1]), (v[1], v[2]), (v[2], v[0])]);
            faces[fi].alive = false;
        }
        let horizon: Vec<(usize, usize)> = edges
            .iter()
            .copied()
            .filter(|&(a, b)| !edges.contains(&(b, a)))
            .collect();
        for (a, b) in horizon {
            if let Some(f) = Face::new(&pts, [a, b, pi]) {
                faces.push(f);
            }
        }
        if faces.len() > 64 && faces.iter().filter(|f| !f.alive).count() * 2 > faces.len() {
            faces.retain(|f| f.alive);
        }
    }

    // Compact to the vertices actually referenced by hull faces.
    let mut remap = vec![usize::MAX; pts.len()];
    let mut vertices = Vec::new();
    let mut out_faces = Vec::new();
    for f in faces.iter().filter(|f| f.alive) {
        let mut tri = [0usize; 3];
        for (k, &vi) in f.v.iter().enumerate() {
            if remap[vi] == usize::MAX {
                remap[vi] = vertices.len();
                vertices.push(pts[vi]);
            }
            tri[k] = remap[vi];
        }
        out_faces.push(tri);
    }
    Ok(ConvexHull {
        vertices,
        faces: out_faces,
        planar: false,
    })
}

fn planar_hull(pts: &[Point3<f64>], normal: Vector3<f64>) -> ConvexHull {
    let (u, v) = super::plane_basis(&normal);
    let origin = pts[0];
    let flat: Vec<[f64; 2]> = pts
        .iter()
        .map(|p| {
            let d = p - origin;
            [d.dot(&u), d.dot(&v)]
        })
        .collect();
    let ring = super::polygon::convex_hull_2d_indices(&flat);
    let vertices: Vec<Point3<f64>> = ring.iter().map(|&i| pts[i]).collect();
    let mut faces = Vec::new();
    for k in 1..vertices.len().saturating_sub(1) {
        faces.push([0, k, k + 1]);
        faces.push([0, k + 1, k]);
    }
    ConvexHull {
        vertices,
        faces,
        planar: true,
    }
}

impl ConvexHull {
    /// Outward unit normal and plane offset of each face.
    pub fn planes(&self) -> Vec<(Vector3<f64>, f64)> {
        self.faces
            .iter()
            .filter_map(|f| {
                let a = self.vertices[f[0]];
                let n = (self.vertices[f[1]] - a).cross(&(self.vertices[f[2]] - a));
                let len = n.norm();
                (len > 0.0).then(|| {
                    let n = n / len;
                    (n, n.dot(&a.coords))
                })
            })
            .collect()
    }

    /// Largest signed distance of `p` to any face plane; `<= 0` means inside.
    pub fn signed_distance(&self, p: &Point3<f64>) -> f64 {
        self.planes()
            .iter()
            .map(|(n, d)| n.dot(&p.coords) - d)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Volume centroid; falls back to the vertex mean for planar hulls.
    pub fn centroid(&self) -> Point3<f64> {
        let mean = self
            .vertices
            .iter()
            .map(|p| p.coords)
            .sum::<Vector3<f64>>()
            / self.vertices.len() as f64;
        if self.planar {
            return Point3::from(mean);
        }
        let mut vol = 0.0;
        let mut acc = Vector3::zeros();
        for f in &self.faces {
            let a = self.vertices[f[0]].coords - mean;
            let b = self.vertices[f[1]].coords - mean;
            let c = self.vertices[f[2]].coords - mean;
            let v = a.dot(&b.cross(&c)) / 6.0;
            vol += v;
            acc += (a + b + c) * (v / 4.0);
        }
        if vol.abs() < 1e-300 {
            return Point3::from(mean);
        }
        Point3::from(mean + acc / vol)
    }

    pub fn volume(&self) -> f64 {
        if self.planar {
            return 0.0;
        }
        let o = self.vertices[0].coords;
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0]].coords - o;
                let b = self.vertices[f[1]].coords - o;
                let c = self.vertices[f[2]].coords - o;
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube() -> Vec<Point3<f64>> {
        let mut v = Vec::new();
        for x in [0.0, 1.0] {
            for y in [0.0, 1.0] {
                for z in [0.0, 1.0] {
                    v.push(Point3::new(x, y, z));
                }
            }
        }
        v
    }

    #[test]
    fn cube_with_center_point_keeps_corners() {
        let mut pts = cube();
        pts.push(Point3::new(0.5, 0.5, 0.5));
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.vertices.len(), 8);
        assert!(!hull.planar);
        assert!(!hull.vertices.contains(&Point3::new(0.5, 0.5, 0.5)));
        assert!((hull.volume() - 1.0).abs() < 1e-12);
        let c = hull.centroid();
        assert!((c - Point3::new(0.5, 0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn tetrahedron_is_its_own_hull() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.vertices.len(), 4);
        assert_eq!(hull.faces.len(), 4);
    }

    #[test]
    fn coplanar_points_flag_planar_fallback() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let hull = convex_hull(&pts).unwrap();
        assert!(hull.planar);
        assert_eq!(hull.vertices.len(), 4);
    }

    #[test]
    fn collinear_points_are_rejected() {
        let pts: Vec<_> = (0..5).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        assert!(convex_hull(&pts).is_err());
    }

    #[test]
    fn random_cloud_is_contained() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pts: Vec<_> = (0..50)
                .map(|_| {
                    Point3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect();
            let hull = convex_hull(&pts).unwrap();
            // Exhaustive containment against every face plane.
            for p in &pts {
                assert!(hull.signed_distance(p) <= 1e-9);
            }
            for v in &hull.vertices {
                assert!(pts.contains(v));
            }
        }
    }
}
