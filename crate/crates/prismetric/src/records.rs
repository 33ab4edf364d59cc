//! Tabular ingestion and export: dosage tables, load–displacement curves
//! and per-point deviation records.

use std::fs;
use std::io::Write;
use std::path::Path;

use prismetric_core::deviation::DeviationField;
use prismetric_core::dosage::DosageRecord;
use prismetric_core::{FaceLabel, Point3, PointCloud};

use crate::{fmt_fixed, FileError};

/// One parsed dosage row; the optional trailing column carries the weighed
/// part mass enabling the mass-based w/c estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosageRow {
    pub record: DosageRecord,
    pub total_mass_g: Option<f64>,
}

/// Reads a dosage table: CSV columns `nozzle_time_ms, droplet_mass_mg,
/// droplet_mass_std_mg, voxel_count, retained[, total_mass_g]`. A header
/// row and `#` comments are skipped.
pub fn read_dosage_csv(path: &Path) -> Result<Vec<DosageRow>, FileError> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        // Tolerate a header row: first field not numeric.
        if fields[0].parse::<f64>().is_err() && rows.is_empty() {
            continue;
        }
        if fields.len() != 5 && fields.len() != 6 {
            return Err(FileError::parse(
                path,
                line,
                format!("expected 5 or 6 columns, found {}", fields.len()),
            ));
        }
        let num = |idx: usize, what: &str| -> Result<f64, FileError> {
            fields[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| FileError::parse(path, line, format!("bad {what} '{}'", fields[idx])))
        };
        let int = |idx: usize, what: &str| -> Result<u32, FileError> {
            fields[idx]
                .parse::<u32>()
                .map_err(|_| FileError::parse(path, line, format!("bad {what} '{}'", fields[idx])))
        };
        rows.push(DosageRow {
            record: DosageRecord {
                nozzle_time_ms: num(0, "nozzle_time_ms")?,
                droplet_mass_mg: num(1, "droplet_mass_mg")?,
                droplet_mass_std_mg: num(2, "droplet_mass_std_mg")?,
                voxel_count: int(3, "voxel_count")?,
                retained: int(4, "retained")?,
            },
            total_mass_g: if fields.len() == 6 {
                Some(num(5, "total_mass_g")?)
            } else {
                None
            },
        });
    }
    if rows.is_empty() {
        return Err(FileError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

/// Reads a load–displacement curve from tab-separated text.
///
/// `skip_lines` header lines are dropped (testing-machine exports carry a
/// four-line preamble); each remaining line must start with two numeric
/// columns, extra columns are ignored. With `x_percent` the first column
/// is divided by 100 (files storing the displacement scaled to percent).
pub fn read_load_tsv(
    path: &Path,
    skip_lines: usize,
    x_percent: bool,
) -> Result<Vec<(f64, f64)>, FileError> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate().skip(skip_lines) {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split('\t').map(str::trim);
        let mut num = |what: &str| -> Result<f64, FileError> {
            let tok = fields
                .next()
                .ok_or_else(|| FileError::parse(path, line, format!("missing {what} column")))?;
            tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                FileError::parse(path, line, format!("bad {what} '{tok}'"))
            })
        };
        let x = num("displacement")?;
        let y = num("force")?;
        samples.push((if x_percent { x / 100.0 } else { x }, y));
    }
    if samples.is_empty() {
        return Err(FileError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(samples)
}

/// Writes a deviation field as CSV `x,y,z,signed_distance_mm,face`.
pub fn write_deviation_csv(
    field: &DeviationField,
    path: &Path,
    decimals: usize,
) -> Result<(), FileError> {
    let mut out = String::from("x,y,z,signed_distance_mm,face\n");
    for i in 0..field.len() {
        let p = field.points.points[i];
        out.push_str(&fmt_fixed(p.x, decimals));
        out.push(',');
        out.push_str(&fmt_fixed(p.y, decimals));
        out.push(',');
        out.push_str(&fmt_fixed(p.z, decimals));
        out.push(',');
        out.push_str(&fmt_fixed(field.signed_distance_mm[i], decimals));
        out.push(',');
        out.push_str(field.face[i].as_str());
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| FileError::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| FileError::io(path, e))
}

/// Reads a deviation CSV back into a field (normals are not part of the
/// format and come back absent).
pub fn read_deviation_csv(path: &Path) -> Result<DeviationField, FileError> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x,y,z,signed_distance_mm,face" => {}
        _ => return Err(FileError::malformed(path, "missing deviation CSV header")),
    }
    let mut points = Vec::new();
    let mut signed = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(FileError::parse(
                path,
                line,
                format!("expected 5 columns, found {}", fields.len()),
            ));
        }
        let num = |idx: usize| -> Result<f64, FileError> {
            fields[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| FileError::parse(path, line, format!("bad number '{}'", fields[idx])))
        };
        points.push(Point3::new(num(0)?, num(1)?, num(2)?));
        signed.push(num(3)?);
        faces.push(
            fields[4]
                .parse::<FaceLabel>()
                .map_err(|_| FileError::parse(path, line, format!("bad face '{}'", fields[4])))?,
        );
    }
    if points.is_empty() {
        return Err(FileError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(DeviationField {
        points: PointCloud::new(points),
        signed_distance_mm: signed,
        face: faces,
    })
}
