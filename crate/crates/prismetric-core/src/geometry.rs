//! Reference-prism geometry: points, clouds, triangle meshes and the
//! axis-aligned prism that all deviations are measured against.
//!
//! Coordinates are millimetres throughout. The prism sits axis-aligned with
//! its minimum corner at `origin`; faces are named by their outward axis
//! (`+x`, `-x`, …).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use thiserror::Error;

use crate::fmath;

/// 3-D point in millimetres.
pub type Point3 = nalgebra::Point3<f64>;
/// 3-D vector / direction.
pub type Vector3 = nalgebra::Vector3<f64>;

/// Triangles with less area than this are treated as degenerate (mm²).
pub const DEGENERATE_AREA: f64 = 1e-12;
/// Normals must be unit length to within this tolerance.
pub const NORMAL_UNIT_TOL: f64 = 1e-9;

/// Errors constructing or validating point clouds.
#[derive(Debug, Error, PartialEq)]
pub enum CloudError {
    #[error("normal count {normals} does not match point count {points}")]
    NormalCountMismatch { points: usize, normals: usize },
    #[error("normal {index} is not unit length (|n| = {norm})")]
    NormalNotUnit { index: usize, norm: f64 },
}

/// Errors constructing or querying triangle meshes.
#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index} out of {count}")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        count: usize,
    },
    #[error("triangle {triangle} is degenerate (area below {DEGENERATE_AREA} mm^2)")]
    DegenerateTriangle { triangle: usize },
    #[error("mesh is not watertight: some edge is not shared by exactly two triangles")]
    NotWatertight,
    #[error("mesh has no triangles")]
    Empty,
}

/// Errors constructing a reference prism.
#[derive(Debug, Error, PartialEq)]
pub enum PrismError {
    #[error("prism dimensions must be positive, got ({0}, {1}, {2})")]
    NonPositiveDims(f64, f64, f64),
}

/// One of the six axis-aligned faces of the reference prism.
///
/// `ALL` fixes the processing (and tie-break) order used everywhere a face
/// loop or a nearest-face decision occurs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FaceLabel {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl FaceLabel {
    /// Fixed face order: `+x, -x, +y, -y, +z, -z`.
    pub const ALL: [FaceLabel; 6] = [
        FaceLabel::PosX,
        FaceLabel::NegX,
        FaceLabel::PosY,
        FaceLabel::NegY,
        FaceLabel::PosZ,
        FaceLabel::NegZ,
    ];

    /// Outward unit normal of the face.
    pub fn outward_normal(self) -> Vector3 {
        match self {
            FaceLabel::PosX => Vector3::new(1.0, 0.0, 0.0),
            FaceLabel::NegX => Vector3::new(-1.0, 0.0, 0.0),
            FaceLabel::PosY => Vector3::new(0.0, 1.0, 0.0),
            FaceLabel::NegY => Vector3::new(0.0, -1.0, 0.0),
            FaceLabel::PosZ => Vector3::new(0.0, 0.0, 1.0),
            FaceLabel::NegZ => Vector3::new(0.0, 0.0, -1.0),
        }
    }

    /// Axis index the face is normal to (x = 0, y = 1, z = 2).
    pub fn axis(self) -> usize {
        match self {
            FaceLabel::PosX | FaceLabel::NegX => 0,
            FaceLabel::PosY | FaceLabel::NegY => 1,
            FaceLabel::PosZ | FaceLabel::NegZ => 2,
        }
    }

    /// True for the face on the maximum side of its axis.
    pub fn is_positive(self) -> bool {
        matches!(self, FaceLabel::PosX | FaceLabel::PosY | FaceLabel::PosZ)
    }

    /// In-plane axis indices `(u, v)`; the lower axis index is always `u`.
    pub fn uv_axes(self) -> (usize, usize) {
        match self.axis() {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    /// Display name, e.g. `"+x"`.
    pub fn as_str(self) -> &'static str {
        match self {
            FaceLabel::PosX => "+x",
            FaceLabel::NegX => "-x",
            FaceLabel::PosY => "+y",
            FaceLabel::NegY => "-y",
            FaceLabel::PosZ => "+z",
            FaceLabel::NegZ => "-z",
        }
    }

    /// Filesystem-safe name, e.g. `"px"`.
    pub fn file_stem(self) -> &'static str {
        match self {
            FaceLabel::PosX => "px",
            FaceLabel::NegX => "nx",
            FaceLabel::PosY => "py",
            FaceLabel::NegY => "ny",
            FaceLabel::PosZ => "pz",
            FaceLabel::NegZ => "nz",
        }
    }

    /// Face on the opposite side of the same axis.
    pub fn opposite(self) -> FaceLabel {
        match self {
            FaceLabel::PosX => FaceLabel::NegX,
            FaceLabel::NegX => FaceLabel::PosX,
            FaceLabel::PosY => FaceLabel::NegY,
            FaceLabel::NegY => FaceLabel::PosY,
            FaceLabel::PosZ => FaceLabel::NegZ,
            FaceLabel::NegZ => FaceLabel::PosZ,
        }
    }
}

impl core::fmt::Display for FaceLabel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for FaceLabel {
    type Err = ();

    /// Accepts both display (`"+x"`) and filesystem (`"px"`) spellings.
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "+x" | "px" => Ok(FaceLabel::PosX),
            "-x" | "nx" => Ok(FaceLabel::NegX),
            "+y" | "py" => Ok(FaceLabel::PosY),
            "-y" | "ny" => Ok(FaceLabel::NegY),
            "+z" | "pz" => Ok(FaceLabel::PosZ),
            "-z" | "nz" => Ok(FaceLabel::NegZ),
            _ => Err(()),
        }
    }
}

/// Unordered set of 3-D points, optionally with per-point unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Per-point outward normals; when present, same length as `points` and
    /// unit length.
    pub normals: Option<Vec<Vector3>>,
}

impl PointCloud {
    /// Cloud without normals.
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud {
            points,
            normals: None,
        }
    }

    /// Cloud with per-point normals; validates count and unit length.
    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vector3>) -> Result<Self, CloudError> {
        if normals.len() != points.len() {
            return Err(CloudError::NormalCountMismatch {
                points: points.len(),
                normals: normals.len(),
            });
        }
        for (index, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if fmath::abs(norm - 1.0) > NORMAL_UNIT_TOL {
                return Err(CloudError::NormalNotUnit { index, norm });
            }
        }
        Ok(PointCloud {
            points,
            normals: Some(normals),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arithmetic mean of the points; `None` for an empty cloud.
    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let mut sum = Vector3::zeros();
        for p in &self.points {
            sum += p.coords;
        }
        Some(Point3::from(sum / self.points.len() as f64))
    }
}

/// Indexed triangle mesh. Triangles are CCW when viewed from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, rejecting out-of-range indices and degenerate
    /// triangles (area ≤ [`DEGENERATE_AREA`]).
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let count = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= count {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index,
                        count,
                    });
                }
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area <= DEGENERATE_AREA {
                return Err(MeshError::DegenerateTriangle { triangle: t });
            }
        }
        Ok(TriangleMesh {
            vertices,
            triangles,
        })
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// Corner points of triangle `i`.
    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        self.triangles[i].map(|v| self.vertices[v as usize])
    }

    /// True when every directed edge is matched by exactly one reverse edge,
    /// i.e. the mesh encloses a volume and orientation is consistent.
    pub fn is_watertight(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let mut edges: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                *edges.entry(e).or_insert(0) += 1;
            }
        }
        edges
            .iter()
            .all(|(&(a, b), &n)| n == 1 && edges.get(&(b, a)) == Some(&1))
    }

    /// Enclosed volume in mm³ via the divergence theorem.
    ///
    /// Requires a watertight mesh; the result is the absolute volume, so it
    /// is independent of global orientation.
    pub fn volume(&self) -> Result<f64, MeshError> {
        if self.triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if !self.is_watertight() {
            return Err(MeshError::NotWatertight);
        }
        let mut six_vol = 0.0;
        for tri in &self.triangles {
            let [a, b, c] = tri.map(|i| self.vertices[i as usize].coords);
            six_vol += a.dot(&b.cross(&c));
        }
        Ok(fmath::abs(six_vol) / 6.0)
    }

    /// Axis-aligned bounding box; `None` for a vertex-free mesh.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = self.vertices.first()?;
        let mut lo = *first;
        let mut hi = *first;
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    /// Area-weighted centroid of the surface; `None` for an empty mesh.
    pub fn surface_centroid(&self) -> Option<Point3> {
        if self.triangles.is_empty() {
            return None;
        }
        let mut weighted = Vector3::zeros();
        let mut total_area = 0.0;
        for tri in &self.triangles {
            let [a, b, c] = tri.map(|i| self.vertices[i as usize]);
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            let centroid = (a.coords + b.coords + c.coords) / 3.0;
            weighted += centroid * area;
            total_area += area;
        }
        if total_area <= 0.0 {
            return None;
        }
        Some(Point3::from(weighted / total_area))
    }
}

/// Axis-aligned rectangular prism that scans are compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePrism {
    /// Edge lengths along x, y, z (mm); all positive.
    pub dims: Vector3,
    /// Minimum corner.
    pub origin: Point3,
}

impl ReferencePrism {
    /// Footprint of the standard test prism: 28 × 7 × 7 voxels at 5.7 mm
    /// pitch.
    pub const DEFAULT_DIMS: (f64, f64, f64) = (159.6, 39.9, 39.9);

    pub fn new(dims: Vector3, origin: Point3) -> Result<Self, PrismError> {
        if !(dims.x > 0.0 && dims.y > 0.0 && dims.z > 0.0) {
            return Err(PrismError::NonPositiveDims(dims.x, dims.y, dims.z));
        }
        Ok(ReferencePrism { dims, origin })
    }

    /// Standard test prism with its minimum corner at the global origin.
    pub fn standard() -> Self {
        let (l, w, h) = Self::DEFAULT_DIMS;
        ReferencePrism {
            dims: Vector3::new(l, w, h),
            origin: Point3::origin(),
        }
    }

    /// Geometric centre.
    pub fn center(&self) -> Point3 {
        self.origin + self.dims * 0.5
    }

    /// Exact volume in mm³.
    pub fn volume(&self) -> f64 {
        self.dims.x * self.dims.y * self.dims.z
    }

    /// The eight corner points, minimum corner first, x fastest.
    pub fn corners(&self) -> [Point3; 8] {
        let o = self.origin;
        let d = self.dims;
        let mut out = [o; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            *corner = Point3::new(
                o.x + if i & 1 != 0 { d.x } else { 0.0 },
                o.y + if i & 2 != 0 { d.y } else { 0.0 },
                o.z + if i & 4 != 0 { d.z } else { 0.0 },
            );
        }
        out
    }

    /// Signed distance to the prism surface: positive outside, negative
    /// inside, zero on a face.
    pub fn signed_distance(&self, p: Point3) -> f64 {
        let c = self.center();
        let h = self.dims * 0.5;
        let q = Vector3::new(
            fmath::abs(p.x - c.x) - h.x,
            fmath::abs(p.y - c.y) - h.y,
            fmath::abs(p.z - c.z) - h.z,
        );
        let outside = fmath::hypot3(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0));
        let inside = q.x.max(q.y).max(q.z).min(0.0);
        outside + inside
    }

    /// True when the point is strictly inside.
    pub fn contains(&self, p: Point3) -> bool {
        self.signed_distance(p) < 0.0
    }

    /// Position of the face plane along its axis.
    pub fn face_coordinate(&self, face: FaceLabel) -> f64 {
        let a = face.axis();
        if face.is_positive() {
            self.origin[a] + self.dims[a]
        } else {
            self.origin[a]
        }
    }

    /// In-plane extents `(dim_u, dim_v)` of a face.
    pub fn face_uv_dims(&self, face: FaceLabel) -> (f64, f64) {
        let (u, v) = face.uv_axes();
        (self.dims[u], self.dims[v])
    }

    /// 3-D position on a face at in-plane offsets `(u, v)` measured from the
    /// face's minimum corner.
    pub fn face_point(&self, face: FaceLabel, u: f64, v: f64) -> Point3 {
        let (ua, va) = face.uv_axes();
        let mut p = self.origin;
        p[face.axis()] = self.face_coordinate(face);
        p[ua] += u;
        p[va] += v;
        p
    }

    /// Euclidean distance from `p` to the (bounded) face rectangle.
    pub fn distance_to_face_rect(&self, face: FaceLabel, p: Point3) -> f64 {
        let (ua, va) = face.uv_axes();
        let u = (p[ua] - self.origin[ua]).clamp(0.0, self.dims[ua]);
        let v = (p[va] - self.origin[va]).clamp(0.0, self.dims[va]);
        (p - self.face_point(face, u, v)).norm()
    }

    /// Watertight 12-triangle mesh of the prism, outward-oriented.
    pub fn to_mesh(&self) -> TriangleMesh {
        let vertices: Vec<Point3> = self.corners().to_vec();
        // Corner index layout: bit 0 = +x, bit 1 = +y, bit 2 = +z.
        let triangles: Vec<[u32; 3]> = alloc::vec![
            // -z (bottom), normal (0,0,-1)
            [0, 2, 1],
            [1, 2, 3],
            // +z (top)
            [4, 5, 6],
            [5, 7, 6],
            // -y
            [0, 1, 4],
            [1, 5, 4],
            // +y
            [2, 6, 3],
            [3, 6, 7],
            // -x
            [0, 4, 2],
            [2, 4, 6],
            // +x
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriangleMesh {
            vertices,
            triangles,
        }
    }
}
