//! Projection of scattered signed-distance fields onto regular per-face
//! grids, and aggregation of such grids across specimens.
//!
//! Each face of the reference prism carries a grid of nodes at cell
//! centres; every node takes the signed distance of its nearest field
//! point. With normal filtering on, the search is restricted to points
//! labelled with (and oriented towards) the target face, falling back to
//! the unrestricted search when no candidate exists. Nodes that cannot be
//! valued carry a missing marker — never zero, which would corrupt mean
//! maps.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

use crate::deviation::DeviationField;
use crate::fmath;
use crate::geometry::{FaceLabel, ReferencePrism};
use crate::kdtree::KdTree;

/// Cell-count rounding tolerance: `ceil(dim/spacing − TOL)` keeps an exact
/// divisor from gaining a phantom cell to floating-point noise.
pub const NODE_COUNT_TOL: f64 = 1e-9;

/// Angular half-width applied to scan normals when normal filtering is on
/// and the scan carries normals.
pub const DEFAULT_NORMAL_FILTER_DEG: f64 = 45.0;

/// Errors from projection and aggregation.
#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("deviation field is empty")]
    EmptyField,
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("spacing leaves a {nu}×{nv} grid; faces need at least 2×2 nodes")]
    SpacingTooCoarse { nu: usize, nv: usize },
    #[error("no grids to aggregate")]
    NoGrids,
    #[error("grid {index} differs in face, size or spacing from the first")]
    ShapeMismatch { index: usize },
    #[error("refinement factor must be at least 1")]
    BadFactor,
}

/// Number of grid cells (= nodes) along a face dimension.
pub fn node_count(dim_mm: f64, spacing_mm: f64) -> usize {
    let n = fmath::ceil(dim_mm / spacing_mm - NODE_COUNT_TOL) as usize;
    n.max(1)
}

/// In-plane node coordinates: centres of `node_count` cells of width
/// `spacing_mm`, the last cell truncated at the face edge.
pub fn node_coordinates(dim_mm: f64, spacing_mm: f64) -> Vec<f64> {
    let n = node_count(dim_mm, spacing_mm);
    (0..n)
        .map(|i| {
            let lo = i as f64 * spacing_mm;
            let hi = (lo + spacing_mm).min(dim_mm);
            0.5 * (lo + hi)
        })
        .collect()
}

/// Regular grid of signed distances on one prism face.
///
/// `values` is row-major over `v` then `u` (`index = v·nu + u`); `None`
/// marks a missing node. `sources` records, for grids produced by
/// [`project_face`], the index of the field point each node was valued
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGrid {
    pub face: FaceLabel,
    pub nu: usize,
    pub nv: usize,
    pub spacing_mm: f64,
    pub values: Vec<Option<f64>>,
    pub sources: Vec<Option<u32>>,
}

impl FaceGrid {
    /// Empty (all-missing) grid of the given shape.
    pub fn blank(face: FaceLabel, nu: usize, nv: usize, spacing_mm: f64) -> Self {
        FaceGrid {
            face,
            nu,
            nv,
            spacing_mm,
            values: vec![None; nu * nv],
            sources: vec![None; nu * nv],
        }
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        debug_assert!(u < self.nu && v < self.nv);
        v * self.nu + u
    }

    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.values[self.index(u, v)]
    }

    /// True when no node is missing.
    pub fn is_fully_populated(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// True when `other` has the same face, node counts and spacing.
    pub fn same_shape(&self, other: &FaceGrid) -> bool {
        self.face == other.face
            && self.nu == other.nu
            && self.nv == other.nv
            && self.spacing_mm == other.spacing_mm
    }
}

/// A set of same-shape grids from multiple specimens with their per-node
/// mean and sample standard deviation maps.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStack {
    pub grids: Vec<FaceGrid>,
    pub mean: FaceGrid,
    pub std: FaceGrid,
}

/// Projects a deviation field onto the grid of one face.
///
/// With `normal_filter_deg` set, candidates are the points labelled with
/// `face`; when the field's cloud carries normals, they must additionally
/// lie within the given angle of the face's outward normal. An empty
/// candidate set falls back to the unrestricted field.
pub fn project_face(
    field: &DeviationField,
    prism: &ReferencePrism,
    face: FaceLabel,
    spacing_mm: f64,
    normal_filter_deg: Option<f64>,
) -> Result<FaceGrid, ProjectionError> {
    if field.is_empty() {
        return Err(ProjectionError::EmptyField);
    }
    if !(spacing_mm > 0.0) {
        return Err(ProjectionError::BadSpacing(spacing_mm));
    }
    let (dim_u, dim_v) = prism.face_uv_dims(face);
    let nu = node_count(dim_u, spacing_mm);
    let nv = node_count(dim_v, spacing_mm);
    if nu < 2 || nv < 2 {
        return Err(ProjectionError::SpacingTooCoarse { nu, nv });
    }

    // Candidate field points, ascending index so kd-tree tie-breaks stay
    // stable in the original field order.
    let candidates: Vec<u32> = match normal_filter_deg {
        Some(deg) => {
            let cos_min = fmath::cos(deg.to_radians());
            let outward = face.outward_normal();
            (0..field.len() as u32)
                .filter(|&i| {
                    let i = i as usize;
                    if field.face[i] != face {
                        return false;
                    }
                    match &field.points.normals {
                        Some(ns) => ns[i].dot(&outward) >= cos_min,
                        None => true,
                    }
                })
                .collect()
        }
        None => (0..field.len() as u32).collect(),
    };
    let candidates: Vec<u32> = if candidates.is_empty() {
        (0..field.len() as u32).collect()
    } else {
        candidates
    };
    let candidate_points: Vec<_> = candidates
        .iter()
        .map(|&i| field.points.points[i as usize])
        .collect();
    let tree = KdTree::build(&candidate_points);

    let us = node_coordinates(dim_u, spacing_mm);
    let vs = node_coordinates(dim_v, spacing_mm);
    let mut grid = FaceGrid::blank(face, nu, nv, spacing_mm);
    for (vi, &v) in vs.iter().enumerate() {
        for (ui, &u) in us.iter().enumerate() {
            let node = prism.face_point(face, u, v);
            let (sub_idx, _) = tree.nearest(node).expect("candidates non-empty");
            let field_idx = candidates[sub_idx];
            let k = grid.index(ui, vi);
            grid.values[k] = Some(field.signed_distance_mm[field_idx as usize]);
            grid.sources[k] = Some(field_idx);
        }
    }
    Ok(grid)
}

/// Projects a field onto all six faces in the fixed face order.
pub fn project_all_faces(
    field: &DeviationField,
    prism: &ReferencePrism,
    spacing_mm: f64,
    normal_filter_deg: Option<f64>,
) -> Result<[FaceGrid; 6], ProjectionError> {
    let mut out = Vec::with_capacity(6);
    for face in FaceLabel::ALL {
        out.push(project_face(field, prism, face, spacing_mm, normal_filter_deg)?);
    }
    Ok(out.try_into().expect("six faces"))
}

/// Aggregates same-shape grids into per-node mean and sample standard
/// deviation maps.
///
/// A node missing in *any* member grid is missing in both maps; with a
/// single grid the std map is entirely missing (n − 1 undefined).
pub fn aggregate_grids(grids: Vec<FaceGrid>) -> Result<GridStack, ProjectionError> {
    let first = grids.first().ok_or(ProjectionError::NoGrids)?;
    for (index, g) in grids.iter().enumerate() {
        if !g.same_shape(first) {
            return Err(ProjectionError::ShapeMismatch { index });
        }
    }
    let n = grids.len();
    let mut mean = FaceGrid::blank(first.face, first.nu, first.nv, first.spacing_mm);
    let mut std = mean.clone();
    for k in 0..first.values.len() {
        if grids.iter().any(|g| g.values[k].is_none()) {
            continue;
        }
        let sum: f64 = grids.iter().map(|g| g.values[k].unwrap()).sum();
        let m = sum / n as f64;
        mean.values[k] = Some(m);
        if n >= 2 {
            let ss: f64 = grids
                .iter()
                .map(|g| {
                    let d = g.values[k].unwrap() - m;
                    d * d
                })
                .sum();
            std.values[k] = Some(fmath::sqrt(ss / (n - 1) as f64));
        }
    }
    Ok(GridStack { grids, mean, std })
}

/// Optional post-step: bilinear resampling of a grid onto a `factor`×
/// finer grid over the same face rectangle.
///
/// Interpolation runs in the source grid's node coordinates; positions
/// outside the outer node ring clamp to it, and a destination node whose
/// four surrounding source nodes are not all present stays missing.
pub fn bilinear_refine(
    grid: &FaceGrid,
    prism: &ReferencePrism,
    factor: u32,
) -> Result<FaceGrid, ProjectionError> {
    if factor < 1 {
        return Err(ProjectionError::BadFactor);
    }
    let (dim_u, dim_v) = prism.face_uv_dims(grid.face);
    let src_u = node_coordinates(dim_u, grid.spacing_mm);
    let src_v = node_coordinates(dim_v, grid.spacing_mm);
    let fine = grid.spacing_mm / factor as f64;
    let dst_u = node_coordinates(dim_u, fine);
    let dst_v = node_coordinates(dim_v, fine);
    let mut out = FaceGrid::blank(grid.face, dst_u.len(), dst_v.len(), fine);

    // Index of the cell [coords[i], coords[i+1]] containing x, clamped.
    let locate = |coords: &[f64], x: f64| -> (usize, f64) {
        let x = x.clamp(coords[0], coords[coords.len() - 1]);
        let mut i = coords.partition_point(|&c| c <= x);
        i = i.clamp(1, coords.len() - 1);
        let lo = coords[i - 1];
        let hi = coords[i];
        let t = if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };
        (i - 1, t)
    };

    for (vi, &v) in dst_v.iter().enumerate() {
        let (j, tv) = locate(&src_v, v);
        for (ui, &u) in dst_u.iter().enumerate() {
            let (i, tu) = locate(&src_u, u);
            let corners = [
                grid.get(i, j),
                grid.get(i + 1, j),
                grid.get(i, j + 1),
                grid.get(i + 1, j + 1),
            ];
            if let [Some(c00), Some(c10), Some(c01), Some(c11)] = corners {
                let lo = c00 + (c10 - c00) * tu;
                let hi = c01 + (c11 - c01) * tu;
                let k = out.index(ui, vi);
                out.values[k] = Some(lo + (hi - lo) * tv);
            }
        }
    }
    Ok(out)
}
