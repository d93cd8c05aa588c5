//! 2D convex polygon helpers. Polygons are counter-clockwise `[x, y]` rings.

pub type P2 = [f64; 2];

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain hull, returning indices of the CCW ring (collinear points dropped).
pub fn convex_hull_2d_indices(points: &[P2]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a][0]
            .total_cmp(&points[b][0])
            .then(points[a][1].total_cmp(&points[b][1]))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2
            && cross(
                points[lower[lower.len() - 2]],
                points[lower[lower.len() - 1]],
                points[i],
            ) <= 0.0
        {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2
            && cross(
                points[upper[upper.len() - 2]],
                points[upper[upper.len() - 1]],
                points[i],
            ) <= 0.0
        {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn convex_hull_2d(points: &[P2]) -> Vec<P2> {
    convex_hull_2d_indices(points)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

/// Signed area (positive for CCW rings).
pub fn signed_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

pub fn is_convex(poly: &[P2]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let sign = signed_area(poly).signum();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) * sign >= -1e-12)
}

fn segment_distance(p: P2, a: P2, b: P2) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Signed distance of `p` to the boundary of a convex CCW polygon:
/// positive inside, negative outside. Degenerate rings (a point or a
/// segment) have no interior, so the result is minus the distance to the set.
pub fn signed_distance(poly: &[P2], p: P2) -> f64 {
    match poly.len() {
        0 => f64::NEG_INFINITY,
        1 => -((p[0] - poly[0][0]).hypot(p[1] - poly[0][1])),
        2 => -segment_distance(p, poly[0], poly[1]),
        n => {
            let boundary = (0..n)
                .map(|i| segment_distance(p, poly[i], poly[(i + 1) % n]))
                .fold(f64::INFINITY, f64::min);
            if contains(poly, p) {
                boundary
            } else {
                -boundary
            }
        }
    }
}

/// Point-in-convex-polygon test (boundary counts as inside).
pub fn contains(poly: &[P2], p: P2) -> bool {
    let n = poly.len();
    n >= 3 && (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= -1e-12)
}

/// Closest point of a convex polygon to `p` (identity when inside).
pub fn clamp(poly: &[P2], p: P2) -> P2 {
    if contains(poly, p) {
        return p;
    }
    let n = poly.len();
    let mut best = poly[0];
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 > 0.0 {
            (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
        let d = (p[0] - q[0]).hypot(p[1] - q[1]);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Clips convex `subject` against convex `clip` (Sutherland-Hodgman).
pub fn intersect_convex(subject: &[P2], clip: &[P2]) -> Vec<P2> {
    let mut out: Vec<P2> = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut out);
        let m = input.len();
        for j in 0..m {
            let cur = input[j];
            let prev = input[(j + m - 1) % m];
            let cin = cross(a, b, cur) >= -1e-12;
            let pin = cross(a, b, prev) >= -1e-12;
            if cin {
                if !pin {
                    out.push(line_hit(prev, cur, a, b));
                }
                out.push(cur);
            } else if pin {
                out.push(line_hit(prev, cur, a, b));
            }
        }
    }
    out
}

fn line_hit(p: P2, q: P2, a: P2, b: P2) -> P2 {
    let cp = cross(a, b, p);
    let cq = cross(a, b, q);
    let denom = cp - cq;
    if denom.abs() < 1e-300 {
        return q;
    }
    let t = cp / denom;
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: [P2; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

    #[test]
    fn hull_drops_interior_and_collinear() {
        let pts = [
            [0.0, 0.0],
            [0.5, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [0.5, 0.5],
        ];
        let h = convex_hull_2d(&pts);
        assert_eq!(h.len(), 4);
        assert!(signed_area(&h) > 0.0);
    }

    #[test]
    fn signed_distance_inside_and_outside() {
        assert!((signed_distance(&SQUARE, [0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((signed_distance(&SQUARE, [1.5, 0.5]) + 0.5).abs() < 1e-15);
        assert_eq!(signed_distance(&[[0.0, 0.0]], [0.0, 0.0]), 0.0);
    }

    #[test]
    fn clamp_projects_to_boundary() {
        assert_eq!(clamp(&SQUARE, [2.0, 0.5]), [1.0, 0.5]);
        assert_eq!(clamp(&SQUARE, [0.25, 0.75]), [0.25, 0.75]);
    }

    #[test]
    fn clip_overlapping_squares() {
        let other = [[0.5, -1.0], [2.0, -1.0], [2.0, 2.0], [0.5, 2.0]];
        let inter = intersect_convex(&SQUARE, &other);
        assert!((signed_area(&inter) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn convexity() {
        assert!(is_convex(&SQUARE));
        let dart = [[0.0, 0.0], [2.0, 0.0], [1.0, 0.5], [1.0, 2.0]];
        assert!(!is_convex(&dart));
    }
}
