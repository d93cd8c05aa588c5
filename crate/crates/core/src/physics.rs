//! Quasi-static plausibility gate.
//!
//! Objects are dropped along gravity (world -Z) onto the support slabs of
//! the scene and onto each other, lowest first, then checked for
//! interpenetration and static stability. Rotations are never simulated.
//! Convex hulls stand in for the meshes in every contact query.

use serde::{Deserialize, Serialize};

use crate::geometry::{penetration_depth, polygon, sweep, Polytope};
use crate::layout::Layout;
use nalgebra::{Point3, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    /// Accepted penetration, as a fraction of the scene scale.
    pub penetration_tol_rel: f64,
    /// Required inset of the center of mass inside the support polygon (m).
    pub stability_margin: f64,
    /// Gap below which two bodies are considered in contact (m).
    pub contact_tol: f64,
    /// Settling converges once no object moves more than this (m).
    pub settle_eps: f64,
    /// Depth of the collision slab under each support surface, as a
    /// fraction of the scene scale.
    pub slab_thickness_rel: f64,
    pub max_iters: usize,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            penetration_tol_rel: 1e-3,
            stability_margin: 1e-3,
            contact_tol: 2e-3,
            settle_eps: 1e-4,
            slab_thickness_rel: 0.01,
            max_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Body {
    Object(String),
    Surface(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// The supported object.
    pub object: String,
    pub support: Body,
    pub points: Vec<[f64; 3]>,
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Penetration {
    pub a: String,
    pub b: Body,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetrationReport {
    pub max_penetration: f64,
    pub offending: Vec<Penetration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub max_penetration: f64,
    pub contacts: Vec<Contact>,
    pub offending: Vec<Penetration>,
    pub unsupported: Vec<String>,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettleOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Objects with nothing beneath them.
    pub falling: Vec<String>,
    pub last_max_move: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stability {
    pub id: String,
    pub stable: bool,
    /// Signed inset of the projected center of mass (positive inside).
    pub inset: f64,
    pub contacts: Vec<Contact>,
}

/// Depths below this are treated as touching when listing offenders.
const LIST_EPS: f64 = 1e-9;

fn down() -> Vector3<f64> {
    -Vector3::z()
}

fn world_polytopes(layout: &Layout) -> Vec<Polytope> {
    layout
        .placements
        .iter()
        .map(|p| p.object.polytope().transformed(&p.transform()))
        .collect()
}

fn slabs(layout: &Layout, cfg: &PhysicsConfig) -> Vec<Polytope> {
    layout
        .scene
        .support_slabs(cfg.slab_thickness_rel * layout.scene.scene_scale)
}

/// Deepest interpenetration among objects and between objects and support
/// slabs. Broad phase prunes by bounding boxes.
pub fn penetration_check(layout: &Layout, cfg: &PhysicsConfig) -> PenetrationReport {
    let bodies = world_polytopes(layout);
    let boxes: Vec<_> = bodies.iter().map(Polytope::aabb).collect();
    let slabs = slabs(layout, cfg);
    let slab_boxes: Vec<_> = slabs.iter().map(Polytope::aabb).collect();
    let overlap = |a: &(Point3<f64>, Point3<f64>), b: &(Point3<f64>, Point3<f64>)| {
        (0..3).all(|k| a.0[k] <= b.1[k] && b.0[k] <= a.1[k])
    };
    let mut max_penetration: f64 = 0.0;
    let mut offending = Vec::new();
    let ps = &layout.placements;
    for i in 0..bodies.len() {
        for j in i + 1..bodies.len() {
            if !overlap(&boxes[i], &boxes[j]) {
                continue;
            }
            let d = penetration_depth(&bodies[i], &bodies[j]);
            max_penetration = max_penetration.max(d);
            if d > LIST_EPS {
                offending.push(Penetration {
                    a: ps[i].id.clone(),
                    b: Body::Object(ps[j].id.clone()),
                    depth: d,
                });
            }
        }
        for (k, slab) in slabs.iter().enumerate() {
            if !overlap(&boxes[i], &slab_boxes[k]) {
                continue;
            }
            let d = penetration_depth(&bodies[i], slab);
            max_penetration = max_penetration.max(d);
            if d > LIST_EPS {
                offending.push(Penetration {
                    a: ps[i].id.clone(),
                    b: Body::Surface(layout.scene.support_surfaces[k].name.clone()),
                    depth: d,
                });
            }
        }
    }
    PenetrationReport {
        max_penetration,
        offending,
    }
}

/// Travel distance along gravity until `body` first touches `obstacle`;
/// `Some(0)` when already touching or overlapping, `None` when never.
fn drop_distance(body: &Polytope, obstacle: &Polytope) -> Option<f64> {
    let hit = sweep(body, &down(), obstacle)?;
    if hit.exit < 0.0 {
        return None;
    }
    Some(hit.enter.max(0.0))
}

/// Drops each object along gravity to its first contact, lowest objects
/// first, repeating until no object moves more than `settle_eps`.
pub fn settle(layout: &Layout, max_iters: usize, cfg: &PhysicsConfig) -> (Layout, SettleOutcome) {
    let mut out = layout.clone();
    let slabs = slabs(layout, cfg);
    let mut bodies = world_polytopes(layout);
    let mut order: Vec<usize> = (0..bodies.len()).collect();
    let lowest: Vec<f64> = bodies.iter().map(|b| b.aabb().0.z).collect();
    order.sort_by(|&a, &b| lowest[a].total_cmp(&lowest[b]).then(a.cmp(&b)));

    let mut falling = vec![false; bodies.len()];
    let mut last_max_move = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let mut max_move: f64 = 0.0;
        for &i in &order {
            let body = &bodies[i];
            let (lo, hi) = body.aabb();
            let mut best: Option<f64> = None;
            let candidates = slabs
                .iter()
                .chain(bodies.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| b));
            for obstacle in candidates {
                let (olo, ohi) = obstacle.aabb();
                // Only things beneath the body and under its footprint matter.
                if olo.z > hi.z || olo.x > hi.x || ohi.x < lo.x || olo.y > hi.y || ohi.y < lo.y {
                    continue;
                }
                if let Some(d) = drop_distance(body, obstacle) {
                    best = Some(best.map_or(d, |b: f64| b.min(d)));
                }
            }
            match best {
                Some(d) if d > 0.0 => {
                    let shift = down() * d;
                    bodies[i] = bodies[i].translated(&shift);
                    out.placements[i].location += shift;
                    max_move = max_move.max(d);
                    falling[i] = false;
                }
                Some(_) => falling[i] = false,
                None => falling[i] = true,
            }
        }
        last_max_move = max_move;
        if max_move < cfg.settle_eps {
            converged = true;
            break;
        }
    }
    let falling_ids: Vec<String> = falling
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| out.placements[i].id.clone())
        .collect();
    (
        out,
        SettleOutcome {
            converged: converged && falling_ids.is_empty(),
            iterations,
            falling: falling_ids,
            last_max_move,
        },
    )
}

fn xy(p: &Point3<f64>) -> [f64; 2] {
    [p.x, p.y]
}

/// Contact patch between `body` resting on `support`, projected along gravity.
fn contact_patch(body: &Polytope, support: &Polytope, tol: f64) -> Vec<[f64; 3]> {
    let (blo, _) = body.aabb();
    let (_, shi) = support.aabb();
    let bottom: Vec<[f64; 2]> = body
        .vertices
        .iter()
        .filter(|p| p.z <= blo.z + tol)
        .map(xy)
        .collect();
    let top: Vec<[f64; 2]> = support
        .vertices
        .iter()
        .filter(|p| p.z >= shi.z - tol)
        .map(xy)
        .collect();
    if (blo.z - shi.z).abs() <= tol {
        let a = polygon::convex_hull_2d(&bottom);
        let b = polygon::convex_hull_2d(&top);
        let patch = match (a.len(), b.len()) {
            (na, nb) if na >= 3 && nb >= 3 => polygon::intersect_convex(&a, &b),
            (na, nb) if na >= 3 => b.into_iter().filter(|p| polygon::contains(&a, *p) || nb == 0).collect(),
            (_, nb) if nb >= 3 => a.into_iter().filter(|p| polygon::contains(&b, *p)).collect(),
            _ => Vec::new(),
        };
        if !patch.is_empty() {
            return patch.into_iter().map(|p| [p[0], p[1], blo.z]).collect();
        }
    }
    // Off-extreme contact: vertices of either body within tolerance of the other.
    let inside = |p: &Point3<f64>, poly: &Polytope| {
        poly.face_normals.iter().all(|n| {
            let (_, hi) = poly.project(n);
            n.dot(&p.coords) <= hi + tol
        })
    };
    body.vertices
        .iter()
        .filter(|p| inside(p, support))
        .chain(support.vertices.iter().filter(|p| inside(p, body)))
        .map(|p| [p.x, p.y, p.z])
        .collect()
}

/// Static stability of each object: its gravity-projected center of mass
/// must lie inside the convex hull of its support contacts, inset by the
/// margin. Supports without area (a point or a segment) accept the center
/// of mass within the margin of the support set.
pub fn stability_check(layout: &Layout, cfg: &PhysicsConfig) -> Vec<Stability> {
    let bodies = world_polytopes(layout);
    let slabs = slabs(layout, cfg);
    let scene = &layout.scene;
    let ps = &layout.placements;
    let mut out = Vec::with_capacity(ps.len());
    for (i, body) in bodies.iter().enumerate() {
        let mut contacts = Vec::new();
        let supports = slabs
            .iter()
            .enumerate()
            .map(|(k, s)| (Body::Surface(scene.support_surfaces[k].name.clone()), s))
            .chain(
                bodies
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(j, b)| (Body::Object(ps[j].id.clone()), b)),
            );
        for (who, support) in supports {
            let Some(hit) = sweep(body, &down(), support) else { continue };
            // Resting on it: the first contact along gravity is (nearly) now.
            if hit.enter.abs() > cfg.contact_tol || hit.exit < 0.0 {
                continue;
            }
            let points = contact_patch(body, support, cfg.contact_tol);
            if points.is_empty() {
                continue;
            }
            contacts.push(Contact {
                object: ps[i].id.clone(),
                support: who,
                points,
                normal: [0.0, 0.0, 1.0],
            });
        }
        let com = ps[i].transform() * ps[i].object.center_of_mass;
        let flat: Vec<[f64; 2]> = contacts
            .iter()
            .flat_map(|c| c.points.iter().map(|p| [p[0], p[1]]))
            .collect();
        let support_poly = polygon::convex_hull_2d(&flat);
        let inset = polygon::signed_distance(&support_poly, xy(&com));
        let stable = if contacts.is_empty() {
            false
        } else if support_poly.len() >= 3 && polygon::signed_area(&support_poly) > 1e-12 {
            inset >= cfg.stability_margin
        } else {
            inset >= -cfg.stability_margin
        };
        out.push(Stability {
            id: ps[i].id.clone(),
            stable,
            inset,
            contacts,
        });
    }
    out
}

/// Settles the layout, then accepts it when settling converged, the deepest
/// penetration is within tolerance and every object is statically stable.
pub fn physics_accept(layout: &Layout, cfg: &PhysicsConfig) -> (bool, Layout, ContactReport) {
    let (settled, outcome) = settle(layout, cfg.max_iters, cfg);
    let pen = penetration_check(&settled, cfg);
    let stability = stability_check(&settled, cfg);
    let mut unsupported: Vec<String> = outcome.falling.clone();
    for s in &stability {
        if !s.stable && !unsupported.contains(&s.id) {
            unsupported.push(s.id.clone());
        }
    }
    let tol = cfg.penetration_tol_rel * settled.scene.scene_scale;
    let accepted = outcome.converged && pen.max_penetration <= tol && unsupported.is_empty();
    let report = ContactReport {
        max_penetration: pen.max_penetration,
        contacts: stability.into_iter().flat_map(|s| s.contacts).collect(),
        offending: pen.offending,
        settled: outcome.converged && unsupported.is_empty(),
        unsupported,
    };
    (accepted, settled, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::layout::Placement;
    use nalgebra::UnitQuaternion;

    fn cube_at(id: &str, x: f64, y: f64, z: f64) -> Placement {
        Placement::new(id, fixtures::cube_model(id, "box", 0.5), UnitQuaternion::identity(), Point3::new(x, y, z))
    }

    fn layout(ps: Vec<Placement>) -> Layout {
        Layout::new(fixtures::floor_scene(5.0), ps).unwrap()
    }

    #[test]
    fn disjoint_cubes_do_not_penetrate() {
        let l = layout(vec![cube_at("a", 0.0, 0.0, 0.5), cube_at("b", 2.0, 0.0, 0.5)]);
        let r = penetration_check(&l, &PhysicsConfig::default());
        assert_eq!(r.max_penetration, 0.0);
        assert!(r.offending.is_empty());
    }

    #[test]
    fn overlapping_cubes_penetrate_by_offset() {
        let l = layout(vec![cube_at("a", 0.0, 0.0, 0.5), cube_at("b", 0.5, 0.0, 0.5)]);
        let r = penetration_check(&l, &PhysicsConfig::default());
        assert!((r.max_penetration - 0.5).abs() < 1e-12);
        assert_eq!(r.offending.len(), 1);
    }

    #[test]
    fn resting_cube_touches_without_penetrating() {
        let l = layout(vec![cube_at("a", 0.0, 0.0, 0.5)]);
        assert!(penetration_check(&l, &PhysicsConfig::default()).max_penetration <= 1e-6);
    }

    #[test]
    fn floating_cube_drops_to_floor() {
        let l = layout(vec![cube_at("a", 0.3, -0.2, 0.8)]);
        let (s, o) = settle(&l, 10, &PhysicsConfig::default());
        assert!(o.converged);
        assert!((s.placements[0].location.z - 0.5).abs() < 1e-12);
        assert_eq!(s.placements[0].location.x, 0.3);
    }

    #[test]
    fn dropped_cube_stacks() {
        let l = layout(vec![cube_at("top", 0.2, 0.0, 3.0), cube_at("bottom", 0.0, 0.0, 0.9)]);
        let (s, o) = settle(&l, 10, &PhysicsConfig::default());
        assert!(o.converged);
        let bottom = s.placements[1].location.z;
        let top = s.placements[0].location.z;
        assert!((bottom - 0.5).abs() < 1e-12);
        assert!(((top - 0.5) - (bottom + 0.5)).abs() < 1e-4);
    }

    #[test]
    fn resting_cube_does_not_move() {
        let l = layout(vec![cube_at("a", 0.0, 0.0, 0.5)]);
        let (s, _) = settle(&l, 10, &PhysicsConfig::default());
        assert_eq!(s.placements[0].location, l.placements[0].location);
    }

    #[test]
    fn cube_off_the_floor_falls() {
        let l = layout(vec![cube_at("a", 9.0, 0.0, 0.5)]);
        let (_, o) = settle(&l, 10, &PhysicsConfig::default());
        assert!(!o.converged);
        assert_eq!(o.falling, vec!["a".to_string()]);
    }

    fn table_with(cube_x: f64) -> Layout {
        // Table top spans x in [-0.6, 0.6] at z = 0.75; cube side 0.2.
        let c = Placement::new(
            "c",
            fixtures::cube_model("c", "box", 0.1),
            UnitQuaternion::identity(),
            Point3::new(cube_x, 0.0, 0.85),
        );
        Layout::new(fixtures::table_scene(), vec![c]).unwrap()
    }

    #[test]
    fn cube_on_table_is_stable() {
        let s = stability_check(&table_with(0.0), &PhysicsConfig::default());
        assert!(s[0].stable);
        assert!((s[0].inset - 0.1).abs() < 1e-9);
    }

    #[test]
    fn overhang_decides_stability() {
        // 60% of the base beyond the edge: support spans [0.5, 0.6], COM at 0.62.
        let s = stability_check(&table_with(0.62), &PhysicsConfig::default());
        assert!(!s[0].stable);
        assert!((s[0].inset + 0.02).abs() < 1e-9);
        // 40% overhang: COM at 0.58 stays over the table.
        let s = stability_check(&table_with(0.58), &PhysicsConfig::default());
        assert!(s[0].stable);
    }

    #[test]
    fn point_contact_under_com_is_stable() {
        // Cube balanced on a vertex: rotate so the body diagonal is vertical.
        let axis = Vector3::new(1.0, -1.0, 0.0).normalize();
        let angle = (1.0f64 / 3.0f64.sqrt()).acos();
        let pose = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let half_diag = 0.5 * 3.0f64.sqrt();
        let p = Placement::new("v", fixtures::cube_model("v", "box", 0.5), pose, Point3::new(0.0, 0.0, half_diag));
        let s = stability_check(&layout(vec![p]), &PhysicsConfig::default());
        assert_eq!(s[0].contacts.len(), 1);
        assert!(s[0].stable, "inset {}", s[0].inset);
    }

    #[test]
    fn physics_accept_verdicts() {
        let cfg = PhysicsConfig::default();
        let ok = layout(vec![cube_at("a", 0.0, 0.0, 0.6), cube_at("b", 2.0, 0.0, 0.7)]);
        let (acc, _, rep) = physics_accept(&ok, &cfg);
        assert!(acc && rep.settled && rep.unsupported.is_empty());

        let bad = layout(vec![cube_at("a", 0.0, 0.0, 0.5), cube_at("b", 0.5, 0.0, 0.5)]);
        let (acc, _, rep) = physics_accept(&bad, &cfg);
        assert!(!acc);
        assert_eq!(rep.offending[0].a, "a");

        let (acc, _, rep) = physics_accept(&table_with(0.62), &cfg);
        assert!(!acc);
        assert_eq!(rep.unsupported, vec!["c".to_string()]);
        assert!(!rep.settled);
    }

    #[test]
    fn settle_is_idempotent_and_never_lifts() {
        let l = layout(vec![
            cube_at("a", 0.0, 0.0, 1.7),
            cube_at("b", 0.3, 0.2, 3.1),
            cube_at("c", -2.0, 0.0, 0.9),
        ]);
        let cfg = PhysicsConfig::default();
        let (s1, _) = settle(&l, 10, &cfg);
        let (s2, o2) = settle(&s1, 10, &cfg);
        assert!(o2.converged);
        for ((a, b), c) in s1.placements.iter().zip(&s2.placements).zip(&l.placements) {
            assert!((a.location - b.location).norm() <= 1e-6);
            assert!(a.location.z <= c.location.z);
        }
    }
}
