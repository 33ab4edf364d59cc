//! Rigid registration: closed-form point-pair alignment (Kabsch) and
//! iterative closest point over a static target cloud.
//!
//! The ICP cost is the mean squared nearest-neighbour distance in mm².
//! Each iteration first solves the optimal rigid map for the current
//! correspondences, then refreshes correspondences — so the recorded cost
//! sequence is non-increasing by construction.

use alloc::vec::Vec;
use nalgebra::Matrix3;
use thiserror::Error;

use crate::geometry::{Point3, PointCloud, TriangleMesh, Vector3};
use crate::kdtree::KdTree;

/// Errors from registration.
#[derive(Debug, Error, PartialEq)]
pub enum RegisterError {
    #[error("source cloud is empty")]
    EmptySource,
    #[error("target cloud is empty")]
    EmptyTarget,
    #[error("pair counts differ: {source_len} source vs {target_len} target")]
    LengthMismatch { source_len: usize, target_len: usize },
    #[error("correspondences are degenerate (all points coincident)")]
    Degenerate,
    #[error("singular value decomposition did not converge")]
    SvdFailed,
}

/// Proper rigid motion `p ↦ R p + t` (rotation plus translation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pure translation.
    pub fn translation(t: Vector3) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle_rad` about a unit `axis` through the origin.
    pub fn rotation_about(axis: Vector3, angle_rad: f64) -> Self {
        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle_rad,
        );
        RigidTransform {
            rotation: rot.into_inner(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply_point(&self, p: Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// Rotates a direction (no translation), e.g. a normal.
    pub fn apply_vector(&self, v: Vector3) -> Vector3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Checks `RᵀR = I` and `det R = +1` to within `tol`.
    pub fn is_rigid(&self, tol: f64) -> bool {
        let gram = self.rotation.transpose() * self.rotation;
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        err <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// Rotation entries in row-major order.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    /// Rebuilds a transform from row-major rotation entries plus a
    /// translation.
    pub fn from_row_major(r: [f64; 9], t: [f64; 3]) -> Self {
        RigidTransform {
            rotation: Matrix3::new(r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]),
            translation: Vector3::new(t[0], t[1], t[2]),
        }
    }
}

/// ICP stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    /// Hard iteration cap.
    pub max_iterations: usize,
    /// Converged when the absolute change in mean squared error between
    /// consecutive iterations drops below this (mm²).
    pub cost_change_tolerance: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iterations: 100,
            cost_change_tolerance: 1e-5,
        }
    }
}

/// Outcome of an ICP run.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps source coordinates into the target frame.
    pub transform: RigidTransform,
    /// Mean squared nearest-neighbour distance after the last iteration
    /// (mm²).
    pub final_cost: f64,
    /// Iterations actually executed (correspondence + solve rounds).
    pub iterations: usize,
    /// True when the cost-change tolerance was met within the iteration cap.
    pub converged: bool,
    /// Cost before any iteration, then after each iteration; non-increasing.
    pub cost_history: Vec<f64>,
}

/// Optimal rigid motion mapping `source[i]` onto `target[i]` in the least
/// squares sense (Kabsch, with an SVD reflection guard).
pub fn kabsch_step(source: &PointCloud, target: &PointCloud) -> Result<RigidTransform, RegisterError> {
    if source.is_empty() {
        return Err(RegisterError::EmptySource);
    }
    if source.len() != target.len() {
        return Err(RegisterError::LengthMismatch {
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    let sc = source.centroid().expect("non-empty").coords;
    let tc = target.centroid().expect("non-empty").coords;
    let mut h = Matrix3::zeros();
    for (p, q) in source.points.iter().zip(&target.points) {
        h += (p.coords - sc) * (q.coords - tc).transpose();
    }
    if h == Matrix3::zeros() {
        // All centred products vanish: every pair sits on its centroid.
        return Err(RegisterError::Degenerate);
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or(RegisterError::SvdFailed)?;
    let v_t = svd.v_t.ok_or(RegisterError::SvdFailed)?;
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant();
    // Flip the least-significant singular direction if the best orthogonal
    // map is a reflection; singular values come back sorted descending.
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
    let rotation = v * correction * u.transpose();
    let translation = tc - rotation * sc;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Applies a rigid transform to every point (and normal) of a cloud.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|&p| t.apply_point(p)).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| ns.iter().map(|&n| t.apply_vector(n)).collect()),
    }
}

/// Applies a rigid transform to every vertex of a mesh.
pub fn apply_transform_mesh(mesh: &TriangleMesh, t: &RigidTransform) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|&v| t.apply_point(v)).collect(),
        triangles: mesh.triangles.clone(),
    }
}

/// Registers `source` onto the static `target` by iterating
/// nearest-neighbour correspondence and closed-form alignment from identity
/// initialisation.
pub fn icp_align(
    source: &PointCloud,
    target: &PointCloud,
    config: &IcpConfig,
) -> Result<IcpResult, RegisterError> {
    if source.is_empty() {
        return Err(RegisterError::EmptySource);
    }
    if target.is_empty() {
        return Err(RegisterError::EmptyTarget);
    }
    let tree = KdTree::build(&target.points);
    let n = source.len() as f64;

    // Correspondences and cost for the current placement of the source.
    let correspond = |placed: &[Point3]| -> (Vec<Point3>, f64) {
        let mut matched = Vec::with_capacity(placed.len());
        let mut sum = 0.0;
        for &p in placed {
            let (idx, d2) = tree.nearest(p).expect("target is non-empty");
            matched.push(target.points[idx]);
            sum += d2;
        }
        (matched, sum / n)
    };

    let mut transform = RigidTransform::identity();
    let mut placed: Vec<Point3> = source.points.clone();
    let (mut matched, mut cost) = correspond(&placed);
    let mut history = alloc::vec![cost];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..config.max_iterations {
        // Solve against the original source so `transform` stays the total
        // motion rather than an increment.
        let matched_cloud = PointCloud::new(matched);
        transform = kabsch_step(source, &matched_cloud)?;
        for (out, &p) in placed.iter_mut().zip(&source.points) {
            *out = transform.apply_point(p);
        }
        let (next_matched, next_cost) = correspond(&placed);
        matched = next_matched;
        iterations += 1;
        let change = (cost - next_cost).abs();
        cost = next_cost;
        history.push(cost);
        if change < config.cost_change_tolerance {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform,
        final_cost: cost,
        iterations,
        converged,
        cost_history: history,
    })
}
