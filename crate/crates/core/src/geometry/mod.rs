//! Geometric primitives shared by asset loading, physics and rendering.

pub mod hull;
pub mod polygon;
pub mod sat;

use nalgebra::Vector3;

pub use hull::{convex_hull, ConvexHull};
pub use sat::{penetration_depth, sweep, ContactInterval, Polytope};

/// Orthonormal basis `(u, v)` of the plane with unit normal `n`, with
/// `u x v = n`.
pub fn plane_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let u = helper.cross(n).normalize();
    let v = n.cross(&u);
    (u, v)
}

/// Newell normal of a (nearly) planar polygon, unnormalized.
pub fn newell_normal(points: &[nalgebra::Point3<f64>]) -> Vector3<f64> {
    let n = points.len();
    let mut acc = Vector3::zeros();
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        acc.x += (a.y - b.y) * (a.z + b.z);
        acc.y += (a.z - b.z) * (a.x + b.x);
        acc.z += (a.x - b.x) * (a.y + b.y);
    }
    acc
}
