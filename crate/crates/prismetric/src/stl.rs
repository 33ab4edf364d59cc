//! STL mesh ingestion and export, binary and ASCII.
//!
//! Reading merges vertices that coincide within [`VERTEX_MERGE_EPS_MM`]
//! (STL stores each triangle's corners independently) and silently drops
//! degenerate triangles, so watertight solids come back watertight.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use prismetric_core::{Point3, TriangleMesh};

use crate::FileError;

/// Vertices closer than this (per axis) are merged on read.
pub const VERTEX_MERGE_EPS_MM: f64 = 1e-6;

/// Triangles with less than this area are dropped on read.
const DEGENERATE_AREA_MM2: f64 = 1e-12;

/// Reads a binary or ASCII STL file; the variant is detected from the
/// record-count size check and the `solid`/`facet` keywords.
pub fn read_stl(path: &Path) -> Result<TriangleMesh, FileError> {
    let bytes = fs::read(path).map_err(|e| FileError::io(path, e))?;
    if bytes.is_empty() {
        return Err(FileError::Empty {
            path: path.to_path_buf(),
        });
    }
    let looks_ascii = {
        let head = &bytes[..bytes.len().min(1024)];
        head.trim_ascii_start().starts_with(b"solid")
            && head.windows(5).any(|w| w == b"facet")
    };
    let corners = if !looks_ascii && bytes.len() >= 84 {
        let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
        if bytes.len() != 84 + 50 * n {
            return Err(FileError::malformed(
                path,
                format!(
                    "binary record count {n} does not match file size {}",
                    bytes.len()
                ),
            ));
        }
        read_binary_corners(&bytes[84..], n)
    } else if looks_ascii {
        read_ascii_corners(&bytes, path)?
    } else {
        return Err(FileError::malformed(
            path,
            "neither a valid binary nor an ASCII mesh",
        ));
    };
    if corners.is_empty() {
        return Err(FileError::Empty {
            path: path.to_path_buf(),
        });
    }
    build_mesh(corners, path)
}

fn read_binary_corners(records: &[u8], n: usize) -> Vec<[Point3; 3]> {
    let mut corners = Vec::with_capacity(n);
    for rec in records.chunks_exact(50) {
        let f = |off: usize| f32::from_le_bytes(rec[off..off + 4].try_into().unwrap()) as f64;
        // Offsets 0..12 hold the stored normal, which we recompute instead.
        corners.push([
            Point3::new(f(12), f(16), f(20)),
            Point3::new(f(24), f(28), f(32)),
            Point3::new(f(36), f(40), f(44)),
        ]);
    }
    corners
}

fn read_ascii_corners(bytes: &[u8], path: &Path) -> Result<Vec<[Point3; 3]>, FileError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| FileError::malformed(path, "ASCII mesh is not valid UTF-8"))?;
    let mut corners = Vec::new();
    let mut pending: Vec<Point3> = Vec::new();
    let mut in_loop = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tokens = raw.split_whitespace();
        match tokens.next() {
            None | Some("solid") | Some("endsolid") | Some("endfacet") => {}
            Some("facet") => {
                // "facet normal nx ny nz" — the stored normal is ignored.
                if tokens.next() != Some("normal") {
                    return Err(FileError::parse(path, line, "expected 'facet normal'"));
                }
            }
            Some("outer") => {
                if tokens.next() != Some("loop") {
                    return Err(FileError::parse(path, line, "expected 'outer loop'"));
                }
                in_loop = true;
                pending.clear();
            }
            Some("vertex") => {
                if !in_loop {
                    return Err(FileError::parse(path, line, "vertex outside 'outer loop'"));
                }
                let mut coord = |what: &str| -> Result<f64, FileError> {
                    tokens
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            FileError::parse(path, line, format!("bad vertex {what} coordinate"))
                        })
                };
                let (x, y, z) = (coord("x")?, coord("y")?, coord("z")?);
                pending.push(Point3::new(x, y, z));
            }
            Some("endloop") => {
                if pending.len() != 3 {
                    return Err(FileError::parse(
                        path,
                        line,
                        format!("facet has {} vertices, expected 3", pending.len()),
                    ));
                }
                corners.push([pending[0], pending[1], pending[2]]);
                in_loop = false;
            }
            Some(other) => {
                return Err(FileError::parse(
                    path,
                    line,
                    format!("unexpected token '{other}'"),
                ));
            }
        }
    }
    Ok(corners)
}

/// Merges per-triangle corners into an indexed mesh, dropping degenerate
/// triangles.
fn build_mesh(corners: Vec<[Point3; 3]>, path: &Path) -> Result<TriangleMesh, FileError> {
    let quantize = |p: &Point3| -> [i64; 3] {
        [
            (p.x / VERTEX_MERGE_EPS_MM).round() as i64,
            (p.y / VERTEX_MERGE_EPS_MM).round() as i64,
            (p.z / VERTEX_MERGE_EPS_MM).round() as i64,
        ]
    };
    let mut index: BTreeMap<[i64; 3], u32> = BTreeMap::new();
    let mut vertices: Vec<Point3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    for tri in &corners {
        let area = 0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
        if area < DEGENERATE_AREA_MM2 {
            continue;
        }
        let mut ids = [0u32; 3];
        for (slot, p) in ids.iter_mut().zip(tri) {
            *slot = *index.entry(quantize(p)).or_insert_with(|| {
                vertices.push(*p);
                vertices.len() as u32 - 1
            });
        }
        if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
            continue; // collapsed by merging
        }
        triangles.push(ids);
    }
    if triangles.is_empty() {
        return Err(FileError::Empty {
            path: path.to_path_buf(),
        });
    }
    TriangleMesh::new(vertices, triangles).map_err(|e| FileError::malformed(path, e.to_string()))
}

/// Writes a mesh as binary STL with recomputed facet normals.
pub fn write_stl(mesh: &TriangleMesh, path: &Path) -> Result<(), FileError> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangle_count());
    let mut header = [0u8; 80];
    let tag = b"prismetric binary mesh";
    header[..tag.len()].copy_from_slice(tag);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangle_count() as u32).to_le_bytes());
    for i in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.triangle(i);
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        for v in [n.x, n.y, n.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for p in [a, b, c] {
            for v in [p.x, p.y, p.z] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| FileError::io(path, e))?;
    file.write_all(&out).map_err(|e| FileError::io(path, e))
}
