//! Delaunay triangulation of scattered pixels with a canonical choice of
//! diagonal wherever four or more points are cocircular.
//!
//! The initial triangulation comes from `spade`. Any interior edge whose two
//! triangles share a circumcircle is then flipped, if needed, so that the
//! diagonal of the quadrilateral passes through its lexicographically
//! smallest (x, then y) corner. For a cocircular polygon this converges to the
//! fan from its smallest vertex, so the output depends only on the point set
//! and not on insertion order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use robust::{incircle, orient2d, Coord};
use spade::{DelaunayTriangulation, HasPosition, Point2, Triangulation};

use crate::error::{Error, Result};

struct Site {
    position: Point2<f64>,
    index: usize,
}

impl HasPosition for Site {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.position
    }
}

fn coord(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

pub(crate) fn orient(points: &[[f64; 2]], a: usize, b: usize, c: usize) -> f64 {
    orient2d(coord(points[a]), coord(points[b]), coord(points[c]))
}

/// Positive when `d` lies strictly inside the circumcircle of the
/// counterclockwise triangle `(a, b, c)`.
pub(crate) fn in_circle(points: &[[f64; 2]], a: usize, b: usize, c: usize, d: usize) -> f64 {
    incircle(coord(points[a]), coord(points[b]), coord(points[c]), coord(points[d]))
}

fn lex(points: &[[f64; 2]], a: usize, b: usize) -> Ordering {
    points[a][0]
        .total_cmp(&points[b][0])
        .then(points[a][1].total_cmp(&points[b][1]))
}

/// Counterclockwise triangles of the canonical Delaunay triangulation.
pub(crate) fn delaunay_triangles(points: &[[f64; 2]]) -> Result<Vec<[usize; 3]>> {
    if points.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::DegenerateInput("non-finite coordinate".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| lex(points, a, b));
    if let Some(w) = order.windows(2).find(|w| points[w[0]] == points[w[1]]) {
        return Err(Error::DegenerateInput(format!(
            "duplicate points {} and {}",
            w[0].min(w[1]),
            w[0].max(w[1])
        )));
    }

    let sites: Vec<Site> = points
        .iter()
        .enumerate()
        .map(|(index, p)| Site {
            position: Point2::new(p[0], p[1]),
            index,
        })
        .collect();
    let dt = DelaunayTriangulation::<Site>::bulk_load(sites)
        .map_err(|e| Error::DegenerateInput(format!("{e:?}")))?;
    let mut triangles: Vec<[usize; 3]> = dt
        .inner_faces()
        .map(|f| {
            let [a, b, c] = f.vertices().map(|v| v.data().index);
            if orient(points, a, b, c) > 0.0 {
                [a, b, c]
            } else {
                [a, c, b]
            }
        })
        .collect();
    if triangles.is_empty() {
        return Err(Error::DegenerateInput("all points are collinear".into()));
    }
    canonicalize(points, &mut triangles);
    Ok(triangles)
}

fn opposite(tri: &[usize; 3], a: usize, b: usize) -> usize {
    *tri.iter().find(|&&v| v != a && v != b).expect("triangle has three vertices")
}

fn canonicalize(points: &[[f64; 2]], triangles: &mut [[usize; 3]]) {
    let max_passes = 64 + triangles.len();
    for _ in 0..max_passes {
        let mut by_edge: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut touched = vec![false; triangles.len()];
        let mut flipped = false;
        for (&(a, b), tris) in &by_edge {
            let &[t1, t2] = tris.as_slice() else { continue };
            if touched[t1] || touched[t2] {
                continue;
            }
            let c = opposite(&triangles[t1], a, b);
            let d = opposite(&triangles[t2], a, b);
            let [p, q, r] = triangles[t1];
            if in_circle(points, p, q, r, d) != 0.0 {
                continue;
            }
            let smallest = [a, b, c, d]
                .into_iter()
                .min_by(|&u, &v| lex(points, u, v))
                .expect("four corners");
            if smallest == a || smallest == b {
                continue;
            }
            // Replace diagonal (a, b) by (c, d) when the quad is strictly convex.
            let first = ccw(points, [c, d, a]);
            let second = ccw(points, [c, d, b]);
            if orient(points, first[0], first[1], first[2]) <= 0.0
                || orient(points, second[0], second[1], second[2]) <= 0.0
                || orient(points, c, d, a) * orient(points, c, d, b) >= 0.0
            {
                continue;
            }
            triangles[t1] = first;
            triangles[t2] = second;
            touched[t1] = true;
            touched[t2] = true;
            flipped = true;
        }
        if !flipped {
            return;
        }
    }
    log::warn!("cocircular canonicalization did not settle; keeping current diagonals");
}

fn ccw(points: &[[f64; 2]], t: [usize; 3]) -> [usize; 3] {
    if orient(points, t[0], t[1], t[2]) >= 0.0 {
        t
    } else {
        [t[0], t[2], t[1]]
    }
}
