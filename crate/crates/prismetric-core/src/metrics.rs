//! Scalar shape metrics between a registered scan and its reference:
//! Hausdorff distance, Chamfer distance and the print accuracy index (PAI).
//!
//! Hausdorff and Chamfer compare two point clouds through nearest-neighbour
//! distances (accelerated by a kd-tree, identical to brute force). PAI
//! compares a cloud against the reference mesh: both are re-centred on
//! their own centroids, and each point contributes the ratio of its
//! distance from the centroid to the ray-cast distance from the centroid to
//! the reference surface through that point. Ratios above 1 mean oversize.

use alloc::vec::Vec;
use thiserror::Error;

use crate::fmath;
use crate::geometry::{MeshError, Point3, PointCloud, TriangleMesh, Vector3};
use crate::kdtree::KdTree;

/// Errors from metric evaluation.
#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric requires non-empty clouds")]
    EmptyCloud,
    #[error("PAI standard deviation requires at least two points, got {count}")]
    TooFewPoints { count: usize },
    #[error("scan point {index} coincides with the common centroid")]
    PointAtCentroid { index: usize },
    #[error("ray through scan point {index} never meets the reference surface")]
    RayMiss { index: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Scalar metrics of one registered scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub hausdorff_mm: f64,
    pub chamfer_mm: f64,
    pub pai: f64,
    pub s_pai: f64,
    /// Scan points the metrics were computed from.
    pub n_points: usize,
}

fn directed_nn(from: &PointCloud, tree: &KdTree) -> Vec<f64> {
    from.points
        .iter()
        .map(|&p| fmath::sqrt(tree.nearest(p).expect("non-empty target").1))
        .collect()
}

/// Symmetric Hausdorff distance: the larger of the two directed maxima of
/// nearest-neighbour distance.
pub fn hausdorff(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let tree_b = KdTree::build(&b.points);
    let tree_a = KdTree::build(&a.points);
    let max_ab = directed_nn(a, &tree_b).into_iter().fold(0.0, f64::max);
    let max_ba = directed_nn(b, &tree_a).into_iter().fold(0.0, f64::max);
    Ok(max_ab.max(max_ba))
}

/// Chamfer distance: the sum of the two directed mean nearest-neighbour
/// distances (unsquared).
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let tree_b = KdTree::build(&b.points);
    let tree_a = KdTree::build(&a.points);
    let mean_ab = directed_nn(a, &tree_b).iter().sum::<f64>() / a.len() as f64;
    let mean_ba = directed_nn(b, &tree_a).iter().sum::<f64>() / b.len() as f64;
    Ok(mean_ab + mean_ba)
}

/// First intersection of the ray `origin + t · dir` (t > 0) with the mesh,
/// with inclusive edge handling so rays through edges and vertices still
/// count.
fn ray_mesh_first_hit(origin: Point3, dir: Vector3, mesh: &TriangleMesh) -> Option<f64> {
    const EDGE_EPS: f64 = 1e-10;
    let mut best: Option<f64> = None;
    for i in 0..mesh.triangle_count() {
        let [a, b, c] = mesh.triangle(i);
        let e1 = b - a;
        let e2 = c - a;
        let pvec = dir.cross(&e2);
        let det = e1.dot(&pvec);
        if fmath::abs(det) <= 1e-14 * e1.norm() * e2.norm() {
            continue; // grazing-parallel: an adjacent triangle catches it
        }
        let inv = 1.0 / det;
        let tvec = origin - a;
        let u = tvec.dot(&pvec) * inv;
        let qvec = tvec.cross(&e1);
        let v = dir.dot(&qvec) * inv;
        let t = e2.dot(&qvec) * inv;
        if u >= -EDGE_EPS && v >= -EDGE_EPS && u + v <= 1.0 + EDGE_EPS && t > 1e-12 {
            best = Some(match best {
                Some(prev) => prev.min(t),
                None => t,
            });
        }
    }
    best
}

/// Per-point accuracy ratios `d_cs / D_cr`, both legs measured from the
/// common centroid.
///
/// The scan is assumed registered onto the reference, so the area-weighted
/// surface centroid of the reference serves as the common centroid for both
/// sides; estimating a separate centroid from the sampled scan would leak
/// sampling noise into every ratio.
pub fn pai_ratios(scan: &PointCloud, reference: &TriangleMesh) -> Result<Vec<f64>, MetricsError> {
    if scan.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    if !reference.is_watertight() {
        return Err(MetricsError::Mesh(MeshError::NotWatertight));
    }
    let centroid = reference
        .surface_centroid()
        .ok_or(MeshError::Empty)?
        .coords;
    // Work with both sides expressed about the common centroid.
    let centered_ref = TriangleMesh {
        vertices: reference
            .vertices
            .iter()
            .map(|v| Point3::from(v.coords - centroid))
            .collect(),
        triangles: reference.triangles.clone(),
    };
    let mut ratios = Vec::with_capacity(scan.len());
    for (index, p) in scan.points.iter().enumerate() {
        let centered = p.coords - centroid;
        let d_cs = centered.norm();
        if d_cs < 1e-12 {
            return Err(MetricsError::PointAtCentroid { index });
        }
        let dir = centered / d_cs;
        let d_cr = ray_mesh_first_hit(Point3::origin(), dir, &centered_ref)
            .ok_or(MetricsError::RayMiss { index })?;
        ratios.push(d_cs / d_cr);
    }
    Ok(ratios)
}

/// Mean and sample standard deviation (n − 1) of a ratio list.
pub fn ratio_stats(ratios: &[f64]) -> Result<(f64, f64), MetricsError> {
    if ratios.len() < 2 {
        return Err(MetricsError::TooFewPoints {
            count: ratios.len(),
        });
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let ss = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>();
    Ok((mean, fmath::sqrt(ss / (n - 1.0))))
}

/// Print accuracy index `(PAI, s_PAI)` of a scan against the reference
/// mesh.
pub fn pai(scan: &PointCloud, reference: &TriangleMesh) -> Result<(f64, f64), MetricsError> {
    let ratios = pai_ratios(scan, reference)?;
    ratio_stats(&ratios)
}

/// All scalar metrics of one scan: Hausdorff/Chamfer against the sampled
/// reference cloud, PAI against the reference mesh.
pub fn metrics_report(
    scan: &PointCloud,
    reference_cloud: &PointCloud,
    reference_mesh: &TriangleMesh,
) -> Result<MetricsReport, MetricsError> {
    let hausdorff_mm = hausdorff(scan, reference_cloud)?;
    let chamfer_mm = chamfer(scan, reference_cloud)?;
    let (pai_value, s_pai) = pai(scan, reference_mesh)?;
    Ok(MetricsReport {
        hausdorff_mm,
        chamfer_mm,
        pai: pai_value,
        s_pai,
        n_points: scan.len(),
    })
}
