//! Static 3-D kd-tree for nearest-neighbour queries.
//!
//! Built once over an immutable point set; queries return the index of the
//! nearest point and the squared distance. Ties on distance are broken by
//! the smaller point index, so results are independent of build order and
//! platform.

use alloc::vec::Vec;

use crate::geometry::Point3;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    /// Index into the original point slice.
    point: u32,
    axis: u8,
    left: u32,
    right: u32,
}

/// Balanced kd-tree over a fixed set of points.
#[derive(Debug, Clone)]
pub struct KdTree {
    nodes: Vec<Node>,
    points: Vec<[f64; 3]>,
    root: u32,
}

impl KdTree {
    /// Builds a tree; an empty slice yields a tree whose queries return
    /// `None`.
    pub fn build(points: &[Point3]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_recursive(&coords, &mut order, 0, &mut nodes);
        KdTree {
            nodes,
            points: coords,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point to `query` and the squared distance.
    ///
    /// Distance ties resolve to the smaller index.
    pub fn nearest(&self, query: Point3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [query.x, query.y, query.z];
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, &q, &mut best);
        Some(best)
    }

    fn search(&self, node: u32, q: &[f64; 3], best: &mut (usize, f64)) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node as usize];
        let idx = n.point as usize;
        let p = &self.points[idx];
        let d2 = dist2(p, q);
        // Lexicographic (distance², index) keeps tie-breaks deterministic.
        if d2 < best.1 || (d2 == best.1 && idx < best.0) {
            *best = (idx, d2);
        }
        let axis = n.axis as usize;
        let delta = q[axis] - p[axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, best);
        // The far half-space can still hold an equal-distance, lower-index
        // point, so descend on <= rather than <.
        if delta * delta <= best.1 {
            self.search(far, q, best);
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn build_recursive(
    coords: &[[f64; 3]],
    order: &mut [u32],
    depth: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    if order.is_empty() {
        return NONE;
    }
    let axis = depth % 3;
    // Total order (coordinate, index) makes the median split reproducible
    // even with duplicate coordinates.
    order.sort_unstable_by(|&a, &b| {
        coords[a as usize][axis]
            .total_cmp(&coords[b as usize][axis])
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let point = order[mid];
    let (lo, rest) = order.split_at_mut(mid);
    let hi = &mut rest[1..];
    let left = build_recursive(coords, lo, depth + 1, nodes);
    let right = build_recursive(coords, hi, depth + 1, nodes);
    let id = nodes.len() as u32;
    nodes.push(Node {
        point,
        axis: axis as u8,
        left,
        right,
    });
    id
}
