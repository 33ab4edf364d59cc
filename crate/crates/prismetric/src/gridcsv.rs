//! Face-grid CSV files: a 4-line header (face, nu, nv, spacing_mm)
//! followed by the value matrix, one `v` row per line, `nan` marking
//! missing nodes. These are the plot-ready deviation maps.

use std::fs;
use std::io::Write;
use std::path::Path;

use prismetric_core::projection::FaceGrid;
use prismetric_core::FaceLabel;

use crate::{fmt_opt, FileError};

/// Writes a grid with fixed-decimal values. Provenance (`sources`) is
/// in-memory only and not serialised.
pub fn write_grid_csv(grid: &FaceGrid, path: &Path, decimals: usize) -> Result<(), FileError> {
    let mut out = String::new();
    out.push_str(&format!("face,{}\n", grid.face.as_str()));
    out.push_str(&format!("nu,{}\n", grid.nu));
    out.push_str(&format!("nv,{}\n", grid.nv));
    out.push_str(&format!("spacing_mm,{}\n", grid.spacing_mm));
    for v in 0..grid.nv {
        for u in 0..grid.nu {
            if u > 0 {
                out.push(',');
            }
            out.push_str(&fmt_opt(grid.get(u, v), decimals));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| FileError::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| FileError::io(path, e))
}

/// Reads a grid written by [`write_grid_csv`].
pub fn read_grid_csv(path: &Path) -> Result<FaceGrid, FileError> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let mut header = |key: &str| -> Result<String, FileError> {
        let (i, raw) = lines
            .next()
            .ok_or_else(|| FileError::malformed(path, format!("missing '{key}' header line")))?;
        let (k, v) = raw
            .split_once(',')
            .ok_or_else(|| FileError::parse(path, i + 1, "expected 'key,value'"))?;
        if k != key {
            return Err(FileError::parse(
                path,
                i + 1,
                format!("expected '{key}', found '{k}'"),
            ));
        }
        Ok(v.trim().to_string())
    };
    let face: FaceLabel = header("face")?
        .parse()
        .map_err(|_| FileError::malformed(path, "bad face label"))?;
    let nu: usize = header("nu")?
        .parse()
        .map_err(|_| FileError::malformed(path, "bad nu"))?;
    let nv: usize = header("nv")?
        .parse()
        .map_err(|_| FileError::malformed(path, "bad nv"))?;
    let spacing: f64 = header("spacing_mm")?
        .parse()
        .map_err(|_| FileError::malformed(path, "bad spacing_mm"))?;
    if nu == 0 || nv == 0 || !(spacing > 0.0) {
        return Err(FileError::malformed(path, "non-positive grid shape"));
    }

    let mut grid = FaceGrid::blank(face, nu, nv, spacing);
    let mut rows = 0;
    for (i, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        if rows == nv {
            return Err(FileError::parse(path, i + 1, "more rows than nv"));
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != nu {
            return Err(FileError::parse(
                path,
                i + 1,
                format!("expected {nu} columns, found {}", fields.len()),
            ));
        }
        for (u, field) in fields.iter().enumerate() {
            let field = field.trim();
            let k = grid.index(u, rows);
            grid.values[k] = if field == "nan" {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| {
                    FileError::parse(path, i + 1, format!("bad number '{field}'"))
                })?)
            };
        }
        rows += 1;
    }
    if rows != nv {
        return Err(FileError::malformed(
            path,
            format!("expected {nv} rows, found {rows}"),
        ));
    }
    Ok(grid)
}
