//! Voxelization of watertight designs onto the printer lattice,
//! deviation-driven compensation, and the printable instruction document.
//!
//! A voxel is occupied iff its centre lies inside the mesh (parity test).
//! Compensation shrinks the model where the measured mean deviations are
//! systematically positive: an optional global one-layer peel per axis,
//! then per-column removal along each face normal, two voxels where the
//! face's mean deviation map exceeds the strong threshold and one above
//! the moderate threshold.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use thiserror::Error;

use crate::deviation::SignedDistance;
use crate::fmath;
use crate::geometry::{FaceLabel, MeshError, Point3, TriangleMesh, Vector3};
use crate::projection::{node_coordinates, node_count, FaceGrid};

/// Lattice cell-count rounding tolerance, in cells. STL vertices are
/// 32-bit floats, so an exact multiple of the pitch can arrive up to
/// ~2e-6 cells away from the integer; 1e-4 cells (≈ 0.6 µm at 5.7 mm)
/// absorbs that without ever swallowing a real cell.
pub const CELL_COUNT_TOL: f64 = 1e-4;

/// Errors from voxel operations.
#[derive(Debug, Error, PartialEq)]
pub enum VoxelError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("voxel dims must all be positive")]
    BadDims,
    #[error("occupancy length {got} does not match dims product {expected}")]
    OccupancyLength { expected: usize, got: usize },
    #[error("model has no occupied voxels")]
    EmptyModel,
    #[error("thresholds must satisfy strong > moderate > 0, got {strong} / {moderate}")]
    BadPolicy { strong: f64, moderate: f64 },
    #[error("grid for face {face} does not cover the model's face at its spacing")]
    GridMismatch { face: FaceLabel },
    #[error("more than one grid given for face {face}")]
    DuplicateFaceGrid { face: FaceLabel },
    #[error("compensation would remove every occupied voxel")]
    RemovalEmptiesModel,
    #[error("instruction line {line} is malformed or out of range")]
    BadInstruction { line: usize },
}

/// Dense voxel model on the printer lattice.
///
/// Cell `(i, j, k)` spans `origin + pitch·(i, j, k)` to
/// `origin + pitch·(i+1, j+1, k+1)`; occupancy is x-fastest, then y, then
/// z — the same order the printer walks.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelModel {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub pitch_mm: f64,
    pub origin: Point3,
    /// Nozzle opening time applied to every occupied voxel.
    pub nozzle_time_ms: f64,
    occupancy: Vec<bool>,
}

impl VoxelModel {
    /// Centre-to-centre nozzle spacing of the reference printer.
    pub const DEFAULT_PITCH_MM: f64 = 5.7;

    /// Empty model of the given lattice size.
    pub fn new(
        (nx, ny, nz): (usize, usize, usize),
        pitch_mm: f64,
        origin: Point3,
        nozzle_time_ms: f64,
    ) -> Result<Self, VoxelError> {
        if nx == 0 || ny == 0 || nz == 0 || !(pitch_mm > 0.0) {
            return Err(VoxelError::BadDims);
        }
        Ok(VoxelModel {
            nx,
            ny,
            nz,
            pitch_mm,
            origin,
            nozzle_time_ms,
            occupancy: vec![false; nx * ny * nz],
        })
    }

    /// Model with explicit occupancy (length must equal `nx·ny·nz`).
    pub fn with_occupancy(
        dims: (usize, usize, usize),
        pitch_mm: f64,
        origin: Point3,
        nozzle_time_ms: f64,
        occupancy: Vec<bool>,
    ) -> Result<Self, VoxelError> {
        let mut model = Self::new(dims, pitch_mm, origin, nozzle_time_ms)?;
        let expected = model.occupancy.len();
        if occupancy.len() != expected {
            return Err(VoxelError::OccupancyLength {
                expected,
                got: occupancy.len(),
            });
        }
        model.occupancy = occupancy;
        Ok(model)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, occupied: bool) {
        let idx = self.index(i, j, k);
        self.occupancy[idx] = occupied;
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Centre of cell `(i, j, k)` in model coordinates.
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Point3 {
        self.origin
            + Vector3::new(
                (i as f64 + 0.5) * self.pitch_mm,
                (j as f64 + 0.5) * self.pitch_mm,
                (k as f64 + 0.5) * self.pitch_mm,
            )
    }

    /// Inclusive index bounds of the occupied set, `None` when empty.
    pub fn occupied_extent(&self) -> Option<((usize, usize, usize), (usize, usize, usize))> {
        let mut lo = (usize::MAX, usize::MAX, usize::MAX);
        let mut hi = (0, 0, 0);
        let mut any = false;
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    if self.get(i, j, k) {
                        any = true;
                        lo = (lo.0.min(i), lo.1.min(j), lo.2.min(k));
                        hi = (hi.0.max(i), hi.1.max(j), hi.2.max(k));
                    }
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// True when the occupied set is a single 6-connected component (or
    /// empty).
    pub fn is_six_connected(&self) -> bool {
        let total = self.occupied_count();
        if total == 0 {
            return true;
        }
        let start = self.occupancy.iter().position(|&o| o).unwrap();
        let mut seen = vec![false; self.occupancy.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(idx) = stack.pop() {
            reached += 1;
            let i = idx % self.nx;
            let j = (idx / self.nx) % self.ny;
            let k = idx / (self.nx * self.ny);
            let mut push = |ii: usize, jj: usize, kk: usize| {
                let n = self.index(ii, jj, kk);
                if self.occupancy[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                push(i - 1, j, k);
            }
            if i + 1 < self.nx {
                push(i + 1, j, k);
            }
            if j > 0 {
                push(i, j - 1, k);
            }
            if j + 1 < self.ny {
                push(i, j + 1, k);
            }
            if k > 0 {
                push(i, j, k - 1);
            }
            if k + 1 < self.nz {
                push(i, j, k + 1);
            }
        }
        reached == total
    }
}

/// When and how aggressively voxels are removed during compensation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationPolicy {
    /// Mean deviation at or above this removes `strong_removal` voxels.
    pub strong_threshold_mm: f64,
    /// Mean deviation at or above this (but below strong) removes
    /// `moderate_removal` voxels.
    pub moderate_threshold_mm: f64,
    pub strong_removal: usize,
    pub moderate_removal: usize,
    /// Additionally peel one full boundary layer per axis before the local
    /// removals.
    pub global_shrink: bool,
}

impl CompensationPolicy {
    /// Pitch-multiple defaults: strong at 2× pitch removing 2 voxels,
    /// moderate at 1× pitch removing 1, global shrink off.
    pub fn for_pitch(pitch_mm: f64) -> Self {
        CompensationPolicy {
            strong_threshold_mm: 2.0 * pitch_mm,
            moderate_threshold_mm: pitch_mm,
            strong_removal: 2,
            moderate_removal: 1,
            global_shrink: false,
        }
    }
}

/// Compensation result: the shrunk model plus what happened to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationOutcome {
    pub model: VoxelModel,
    /// Voxels removed by per-column face rules.
    pub removed_local: usize,
    /// Voxels removed by the global one-layer peel.
    pub removed_global: usize,
    /// Set when a 6-connected input came out disconnected (thin features
    /// may legitimately separate; this is a warning, not an error).
    pub connectivity_warning: bool,
}

fn cell_count(extent_mm: f64, pitch_mm: f64) -> usize {
    (fmath::ceil(extent_mm / pitch_mm - CELL_COUNT_TOL) as usize).max(1)
}

/// Voxelizes a watertight mesh onto the lattice anchored at `origin`:
/// a cell is occupied iff its centre lies inside the mesh. The lattice
/// covers from `origin` to the mesh bounding-box maximum.
pub fn voxelize(
    mesh: &TriangleMesh,
    pitch_mm: f64,
    origin: Point3,
    nozzle_time_ms: f64,
) -> Result<VoxelModel, VoxelError> {
    let sdf = SignedDistance::new(mesh)?;
    let (_, hi) = mesh.bounds().ok_or(MeshError::Empty)?;
    let dims = (
        cell_count(hi.x - origin.x, pitch_mm),
        cell_count(hi.y - origin.y, pitch_mm),
        cell_count(hi.z - origin.z, pitch_mm),
    );
    let mut model = VoxelModel::new(dims, pitch_mm, origin, nozzle_time_ms)?;
    for k in 0..model.nz {
        for j in 0..model.ny {
            for i in 0..model.nx {
                if sdf.contains(model.cell_center(i, j, k)) {
                    model.set(i, j, k, true);
                }
            }
        }
    }
    Ok(model)
}

/// Voxelizes with the lattice anchored at the mesh bounding-box minimum.
pub fn voxelize_bounding(
    mesh: &TriangleMesh,
    pitch_mm: f64,
    nozzle_time_ms: f64,
) -> Result<VoxelModel, VoxelError> {
    let (lo, _) = mesh.bounds().ok_or(MeshError::Empty)?;
    voxelize(mesh, pitch_mm, lo, nozzle_time_ms)
}

/// Mean of the grid nodes overlapping one voxel column's face footprint;
/// `None` when every overlapping node is missing.
fn footprint_mean(
    grid: &FaceGrid,
    us: &[f64],
    vs: &[f64],
    cu: usize,
    cv: usize,
    pitch: f64,
) -> Option<f64> {
    let (ulo, uhi) = (cu as f64 * pitch, (cu + 1) as f64 * pitch);
    let (vlo, vhi) = (cv as f64 * pitch, (cv + 1) as f64 * pitch);
    let mut sum = 0.0;
    let mut n = 0;
    for (vi, &v) in vs.iter().enumerate() {
        if v < vlo || v >= vhi {
            continue;
        }
        for (ui, &u) in us.iter().enumerate() {
            if u < ulo || u >= uhi {
                continue;
            }
            if let Some(value) = grid.get(ui, vi) {
                sum += value;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Applies deviation-driven compensation.
///
/// `mean_grids` holds at most one mean deviation map per face (faces
/// without a grid are left alone), each covering the model's original
/// footprint at its own spacing. With `global_shrink` on, one occupied
/// boundary layer is peeled from the maximum side of each axis first;
/// then each face column loses voxels by the threshold rule, faces
/// processed in the fixed face order on the evolving occupancy. The input
/// model is not modified.
pub fn compensate(
    model: &VoxelModel,
    mean_grids: &[FaceGrid],
    policy: &CompensationPolicy,
) -> Result<CompensationOutcome, VoxelError> {
    if model.occupied_count() == 0 {
        return Err(VoxelError::EmptyModel);
    }
    if !(policy.strong_threshold_mm > policy.moderate_threshold_mm
        && policy.moderate_threshold_mm > 0.0)
    {
        return Err(VoxelError::BadPolicy {
            strong: policy.strong_threshold_mm,
            moderate: policy.moderate_threshold_mm,
        });
    }
    // Validate the grid set against the model's as-designed footprint.
    let dims_mm = [
        model.nx as f64 * model.pitch_mm,
        model.ny as f64 * model.pitch_mm,
        model.nz as f64 * model.pitch_mm,
    ];
    let mut per_face: [Option<&FaceGrid>; 6] = [None; 6];
    for grid in mean_grids {
        let slot = FaceLabel::ALL
            .iter()
            .position(|&f| f == grid.face)
            .expect("six faces");
        if per_face[slot].is_some() {
            return Err(VoxelError::DuplicateFaceGrid { face: grid.face });
        }
        let (ua, va) = grid.face.uv_axes();
        if grid.nu != node_count(dims_mm[ua], grid.spacing_mm)
            || grid.nv != node_count(dims_mm[va], grid.spacing_mm)
        {
            return Err(VoxelError::GridMismatch { face: grid.face });
        }
        per_face[slot] = Some(grid);
    }

    let was_connected = model.is_six_connected();
    let mut out = model.clone();
    let mut removed_global = 0;
    let mut removed_local = 0;

    if policy.global_shrink {
        // Peel the occupied layer at the maximum side of each axis.
        for axis in 0..3 {
            let Some((_, hi)) = out.occupied_extent() else {
                return Err(VoxelError::RemovalEmptiesModel);
            };
            let layer = [hi.0, hi.1, hi.2][axis];
            for k in 0..out.nz {
                for j in 0..out.ny {
                    for i in 0..out.nx {
                        if [i, j, k][axis] == layer && out.get(i, j, k) {
                            out.set(i, j, k, false);
                            removed_global += 1;
                        }
                    }
                }
            }
        }
    }

    for (slot, face) in FaceLabel::ALL.iter().enumerate() {
        let Some(grid) = per_face[slot] else { continue };
        let (ua, va) = face.uv_axes();
        let us = node_coordinates(dims_mm[ua], grid.spacing_mm);
        let vs = node_coordinates(dims_mm[va], grid.spacing_mm);
        let n_axis = [out.nx, out.ny, out.nz];
        let (n_u, n_v) = (n_axis[ua], n_axis[va]);
        let depth_axis = face.axis();
        for cv in 0..n_v {
            for cu in 0..n_u {
                let Some(mean) = footprint_mean(grid, &us, &vs, cu, cv, out.pitch_mm) else {
                    continue;
                };
                let depth = if mean >= policy.strong_threshold_mm {
                    policy.strong_removal
                } else if mean >= policy.moderate_threshold_mm {
                    policy.moderate_removal
                } else {
                    0
                };
                if depth == 0 {
                    continue;
                }
                // Walk the column from the face side inward.
                let len = n_axis[depth_axis];
                let mut removed = 0;
                for step in 0..len {
                    if removed == depth {
                        break;
                    }
                    let d = if face.is_positive() {
                        len - 1 - step
                    } else {
                        step
                    };
                    let mut idx = [0usize; 3];
                    idx[depth_axis] = d;
                    idx[ua] = cu;
                    idx[va] = cv;
                    if out.get(idx[0], idx[1], idx[2]) {
                        out.set(idx[0], idx[1], idx[2], false);
                        removed += 1;
                    }
                }
                removed_local += removed;
            }
        }
    }

    if out.occupied_count() == 0 {
        return Err(VoxelError::RemovalEmptiesModel);
    }
    let connectivity_warning = was_connected && !out.is_six_connected();
    Ok(CompensationOutcome {
        model: out,
        removed_local,
        removed_global,
        connectivity_warning,
    })
}

/// Formats one row's occupied nozzle indices as compact ranges, e.g.
/// `0-10,12,14-27`.
fn format_runs(active: &[usize]) -> String {
    let mut s = String::new();
    let mut i = 0;
    while i < active.len() {
        let start = active[i];
        let mut end = start;
        while i + 1 < active.len() && active[i + 1] == end + 1 {
            i += 1;
            end = active[i];
        }
        if !s.is_empty() {
            s.push(',');
        }
        if start == end {
            let _ = write!(s, "{start}");
        } else {
            let _ = write!(s, "{start}-{end}");
        }
        i += 1;
    }
    s
}

/// Renders the printable instruction document: one line per non-empty row,
/// `layer k; row j; <nozzle ranges>; <nozzle_time_ms>`, ordered z then y
/// ascending, LF endings.
pub fn export_instructions(model: &VoxelModel) -> Result<String, VoxelError> {
    if model.occupied_count() == 0 {
        return Err(VoxelError::EmptyModel);
    }
    let mut doc = String::new();
    for k in 0..model.nz {
        for j in 0..model.ny {
            let active: Vec<usize> = (0..model.nx).filter(|&i| model.get(i, j, k)).collect();
            if active.is_empty() {
                continue;
            }
            let _ = writeln!(
                doc,
                "layer {k}; row {j}; {}; {:.3}",
                format_runs(&active),
                model.nozzle_time_ms
            );
        }
    }
    Ok(doc)
}

/// Parses an instruction document back into a model on the given lattice.
/// The nozzle time is taken from the first line.
pub fn parse_instructions(
    doc: &str,
    dims: (usize, usize, usize),
    pitch_mm: f64,
    origin: Point3,
) -> Result<VoxelModel, VoxelError> {
    let mut model = VoxelModel::new(dims, pitch_mm, origin, 0.0)?;
    let mut time: Option<f64> = None;
    for (line_no, raw) in doc.lines().enumerate() {
        let line = line_no + 1;
        let bad = || VoxelError::BadInstruction { line };
        let mut parts = raw.split(';').map(str::trim);
        let layer = parts
            .next()
            .and_then(|s| s.strip_prefix("layer "))
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(bad)?;
        let row = parts
            .next()
            .and_then(|s| s.strip_prefix("row "))
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(bad)?;
        let ranges = parts.next().ok_or_else(bad)?;
        let t = parts
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(bad)?;
        if parts.next().is_some() || layer >= model.nz || row >= model.ny {
            return Err(bad());
        }
        time.get_or_insert(t);
        for run in ranges.split(',') {
            let (lo, hi) = match run.split_once('-') {
                Some((a, b)) => (
                    a.parse::<usize>().map_err(|_| bad())?,
                    b.parse::<usize>().map_err(|_| bad())?,
                ),
                None => {
                    let v = run.parse::<usize>().map_err(|_| bad())?;
                    (v, v)
                }
            };
            if lo > hi || hi >= model.nx {
                return Err(bad());
            }
            for i in lo..=hi {
                model.set(i, row, layer, true);
            }
        }
    }
    model.nozzle_time_ms = time.ok_or(VoxelError::EmptyModel)?;
    Ok(model)
}
