//! JSON artifact schemas and the run-length occupancy encoding for voxel
//! models. Field order is fixed by the struct declarations, so outputs are
//! byte-stable for identical inputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use prismetric_core::metrics::MetricsReport;
use prismetric_core::register::{IcpResult, RigidTransform};
use prismetric_core::voxel::{CompensationPolicy, VoxelModel};
use prismetric_core::Point3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::FileError;

/// Rigid transform as row-major rotation plus translation, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformJson {
    pub rotation_row_major: [f64; 9],
    pub translation_mm: [f64; 3],
}

impl From<&RigidTransform> for TransformJson {
    fn from(t: &RigidTransform) -> Self {
        TransformJson {
            rotation_row_major: t.rotation_row_major(),
            translation_mm: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TransformJson {
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::from_row_major(self.rotation_row_major, self.translation_mm)
    }
}

/// Registration outcome written by the align stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignJson {
    pub transform: TransformJson,
    pub final_cost_mm2: f64,
    pub iterations: usize,
    pub converged: bool,
    pub cost_history_mm2: Vec<f64>,
}

impl From<&IcpResult> for AlignJson {
    fn from(r: &IcpResult) -> Self {
        AlignJson {
            transform: TransformJson::from(&r.transform),
            final_cost_mm2: r.final_cost,
            iterations: r.iterations,
            converged: r.converged,
            cost_history_mm2: r.cost_history.clone(),
        }
    }
}

/// Scalar metrics of one scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub hausdorff_mm: f64,
    pub chamfer_mm: f64,
    pub pai: f64,
    pub s_pai: f64,
    pub n_points: usize,
}

impl From<&MetricsReport> for MetricsJson {
    fn from(m: &MetricsReport) -> Self {
        MetricsJson {
            hausdorff_mm: m.hausdorff_mm,
            chamfer_mm: m.chamfer_mm,
            pai: m.pai,
            s_pai: m.s_pai,
            n_points: m.n_points,
        }
    }
}

/// Compensation policy file schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyJson {
    pub strong_threshold_mm: f64,
    pub moderate_threshold_mm: f64,
    pub strong_removal: usize,
    pub moderate_removal: usize,
    pub global_shrink: bool,
}

impl From<&CompensationPolicy> for PolicyJson {
    fn from(p: &CompensationPolicy) -> Self {
        PolicyJson {
            strong_threshold_mm: p.strong_threshold_mm,
            moderate_threshold_mm: p.moderate_threshold_mm,
            strong_removal: p.strong_removal,
            moderate_removal: p.moderate_removal,
            global_shrink: p.global_shrink,
        }
    }
}

impl PolicyJson {
    pub fn to_policy(&self) -> CompensationPolicy {
        CompensationPolicy {
            strong_threshold_mm: self.strong_threshold_mm,
            moderate_threshold_mm: self.moderate_threshold_mm,
            strong_removal: self.strong_removal,
            moderate_removal: self.moderate_removal,
            global_shrink: self.global_shrink,
        }
    }
}

/// Elastic fit of one specimen curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechJson {
    #[serde(rename = "E_MPa")]
    pub e_mpa: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "sigma_max_MPa")]
    pub sigma_max_mpa: f64,
    /// `[window_start, window_len]` in curve sample indices.
    pub window: [usize; 2],
}

/// Voxel model file: lattice header plus run-length-encoded occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelJson {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub pitch_mm: f64,
    pub origin_mm: [f64; 3],
    pub nozzle_time_ms: f64,
    /// Runs `<count>x<bit>` joined by commas, x-fastest cell order.
    pub occupancy_rle: String,
}

impl From<&VoxelModel> for VoxelJson {
    fn from(m: &VoxelModel) -> Self {
        VoxelJson {
            nx: m.nx,
            ny: m.ny,
            nz: m.nz,
            pitch_mm: m.pitch_mm,
            origin_mm: [m.origin.x, m.origin.y, m.origin.z],
            nozzle_time_ms: m.nozzle_time_ms,
            occupancy_rle: rle_encode(m.occupancy()),
        }
    }
}

impl VoxelJson {
    pub fn to_model(&self, path: &Path) -> Result<VoxelModel, FileError> {
        let occupancy = rle_decode(&self.occupancy_rle, self.nx * self.ny * self.nz)
            .map_err(|message| FileError::malformed(path, message))?;
        VoxelModel::with_occupancy(
            (self.nx, self.ny, self.nz),
            self.pitch_mm,
            Point3::new(self.origin_mm[0], self.origin_mm[1], self.origin_mm[2]),
            self.nozzle_time_ms,
            occupancy,
        )
        .map_err(|e| FileError::malformed(path, e.to_string()))
    }
}

/// Encodes a bit run sequence as `<count>x<bit>,…`.
pub fn rle_encode(bits: &[bool]) -> String {
    let mut out = String::new();
    let mut iter = bits.iter();
    let Some(&first) = iter.next() else {
        return out;
    };
    let mut current = first;
    let mut run = 1usize;
    for &b in iter {
        if b == current {
            run += 1;
        } else {
            out.push_str(&format!("{run}x{}", current as u8));
            out.push(',');
            current = b;
            run = 1;
        }
    }
    out.push_str(&format!("{run}x{}", current as u8));
    out
}

/// Decodes [`rle_encode`] output, checking the total length.
pub fn rle_decode(s: &str, expected_len: usize) -> Result<Vec<bool>, String> {
    let mut bits = Vec::with_capacity(expected_len);
    for run in s.split(',') {
        let (count, bit) = run
            .split_once('x')
            .ok_or_else(|| format!("bad run '{run}'"))?;
        let count: usize = count.parse().map_err(|_| format!("bad run count '{count}'"))?;
        let value = match bit {
            "0" => false,
            "1" => true,
            other => return Err(format!("bad run bit '{other}'")),
        };
        bits.extend(std::iter::repeat_n(value, count));
    }
    if bits.len() != expected_len {
        return Err(format!(
            "occupancy length {} does not match dims product {expected_len}",
            bits.len()
        ));
    }
    Ok(bits)
}

/// Writes any schema as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), FileError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| FileError::malformed(path, e.to_string()))?;
    text.push('\n');
    let mut file = fs::File::create(path).map_err(|e| FileError::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| FileError::io(path, e))
}

/// Reads and deserialises a JSON artifact.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FileError::malformed(path, e.to_string()))
}
