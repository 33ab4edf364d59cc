//! Whitespace-separated XYZ point-cloud files, with optional per-point
//! normals in three extra columns.

use std::fs;
use std::io::Write;
use std::path::Path;

use prismetric_core::{Point3, PointCloud, Vector3};

use crate::{fmt_fixed, FileError};

/// Reads a cloud from text: one point per line, `x y z` or
/// `x y z nx ny nz`, `#`-comments and blank lines ignored. Normals are
/// renormalised; every data line must carry the same column count.
pub fn read_xyz(path: &Path) -> Result<PointCloud, FileError> {
    let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut width: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut values = [0.0f64; 6];
        let mut n = 0;
        for tok in trimmed.split_whitespace() {
            if n == 6 {
                return Err(FileError::parse(path, line, "more than 6 columns"));
            }
            values[n] = tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                FileError::parse(path, line, format!("bad number '{tok}'"))
            })?;
            n += 1;
        }
        if n != 3 && n != 6 {
            return Err(FileError::parse(
                path,
                line,
                format!("expected 3 or 6 columns, found {n}"),
            ));
        }
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(FileError::parse(
                    path,
                    line,
                    format!("expected {w} columns like the first point, found {n}"),
                ));
            }
            _ => {}
        }
        points.push(Point3::new(values[0], values[1], values[2]));
        if n == 6 {
            let v = Vector3::new(values[3], values[4], values[5]);
            if v.norm() < 1e-12 {
                return Err(FileError::parse(path, line, "zero-length normal"));
            }
            normals.push(v.normalize());
        }
    }
    if points.is_empty() {
        return Err(FileError::Empty {
            path: path.to_path_buf(),
        });
    }
    match width {
        Some(6) => PointCloud::with_normals(points, normals)
            .map_err(|e| FileError::malformed(path, e.to_string())),
        _ => Ok(PointCloud::new(points)),
    }
}

/// Writes a cloud as `x y z [nx ny nz]` lines with fixed decimals.
pub fn write_xyz(cloud: &PointCloud, path: &Path, decimals: usize) -> Result<(), FileError> {
    let mut out = String::new();
    for (i, p) in cloud.points.iter().enumerate() {
        out.push_str(&fmt_fixed(p.x, decimals));
        out.push(' ');
        out.push_str(&fmt_fixed(p.y, decimals));
        out.push(' ');
        out.push_str(&fmt_fixed(p.z, decimals));
        if let Some(ns) = &cloud.normals {
            let n = ns[i];
            for v in [n.x, n.y, n.z] {
                out.push(' ');
                out.push_str(&fmt_fixed(v, decimals));
            }
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| FileError::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| FileError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn reads_plain_points_with_comments() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        fs::write(&path, "# scan\n1 2 3\n\n4.5 -6 7e-1\n").unwrap();
        let cloud = read_xyz(&path).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[1], Point3::new(4.5, -6.0, 0.7));
        assert!(cloud.normals.is_none());
    }

    #[test]
    fn reads_and_renormalises_normals() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        fs::write(&path, "0 0 0 2 0 0\n1 1 1 0 0 -5\n").unwrap();
        let cloud = read_xyz(&path).unwrap();
        let ns = cloud.normals.as_ref().unwrap();
        assert_eq!(ns[0], Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(ns[1], Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn mixed_column_counts_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.xyz");
        fs::write(&path, "0 0 0\n1 1 1 0 0 1\n").unwrap();
        match read_xyz(&path).unwrap_err() {
            FileError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn empty_and_garbage_files_are_distinguished() {
        let dir = tempdir().unwrap();
        let empty = dir.path().join("empty.xyz");
        fs::write(&empty, "# only a comment\n").unwrap();
        assert!(matches!(read_xyz(&empty).unwrap_err(), FileError::Empty { .. }));
        let garbage = dir.path().join("bad.xyz");
        fs::write(&garbage, "1 2 potato\n").unwrap();
        assert!(matches!(
            read_xyz(&garbage).unwrap_err(),
            FileError::Parse { .. }
        ));
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("out.xyz");
        let cloud = PointCloud::with_normals(
            vec![Point3::new(1.25, -2.0, 3.5), Point3::new(0.0, 0.125, -9.0)],
            vec![Vector3::new(0.0, 1.0, 0.0), Vector3::new(1.0, 0.0, 0.0)],
        )
        .unwrap();
        write_xyz(&cloud, &path, 4).unwrap();
        let back = read_xyz(&path).unwrap();
        assert_eq!(back.points, cloud.points);
        assert_eq!(back.normals, cloud.normals);
    }
}
