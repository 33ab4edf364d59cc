//! Deterministic point sampling: reference-surface clouds and random
//! downsampling of dense scans.
//!
//! Every function takes an explicit seed and uses a counter-based stream
//! cipher RNG, so identical inputs produce bit-identical clouds on every
//! platform.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{FaceLabel, PointCloud, ReferencePrism};

/// Seed used by the command-line tools when none is given.
pub const DEFAULT_SEED: u64 = 42;
/// Random surface samples per reference cloud before the corners are added.
pub const DEFAULT_SURFACE_SAMPLES: usize = 1000;
/// Scan size that dense clouds are reduced to before registration.
pub const DEFAULT_DOWNSAMPLE: usize = 50_000;

/// Errors from sampling operations.
#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("downsample target must be at least 1")]
    ZeroTarget,
}

/// Samples `n_random` points uniformly by area over the prism surface, then
/// appends the eight corner points.
///
/// Face selection is area-weighted over the fixed face order; each sample
/// consumes exactly three RNG draws, so the cloud is a pure function of
/// `(prism, n_random, seed)`.
pub fn sample_reference_surface(prism: &ReferencePrism, n_random: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let areas: Vec<f64> = FaceLabel::ALL
        .iter()
        .map(|&f| {
            let (du, dv) = prism.face_uv_dims(f);
            du * dv
        })
        .collect();
    let total: f64 = areas.iter().sum();

    let mut points = Vec::with_capacity(n_random + 8);
    for _ in 0..n_random {
        let r = rng.random::<f64>() * total;
        let mut face = *FaceLabel::ALL.last().unwrap();
        let mut cumulative = 0.0;
        for (&f, &a) in FaceLabel::ALL.iter().zip(&areas) {
            cumulative += a;
            if r < cumulative {
                face = f;
                break;
            }
        }
        let (du, dv) = prism.face_uv_dims(face);
        let u = rng.random::<f64>() * du;
        let v = rng.random::<f64>() * dv;
        points.push(prism.face_point(face, u, v));
    }
    points.extend_from_slice(&prism.corners());
    PointCloud::new(points)
}

/// Uniformly selects `target` points without replacement; selected points
/// keep their original relative order (and their normals, when present).
///
/// A cloud already at or below `target` is returned unchanged.
pub fn downsample_random(
    cloud: &PointCloud,
    target: usize,
    seed: u64,
) -> Result<PointCloud, SampleError> {
    if target == 0 {
        return Err(SampleError::ZeroTarget);
    }
    if cloud.len() <= target {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, cloud.len(), target).into_vec();
    picked.sort_unstable();
    let points = picked.iter().map(|&i| cloud.points[i]).collect();
    let normals = cloud
        .normals
        .as_ref()
        .map(|ns| picked.iter().map(|&i| ns[i]).collect());
    Ok(PointCloud { points, normals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point3, Vector3};

    #[test]
    fn surface_samples_lie_on_the_surface() {
        let prism = ReferencePrism::standard();
        let cloud = sample_reference_surface(&prism, 1000, DEFAULT_SEED);
        assert_eq!(cloud.len(), 1008);
        for p in &cloud.points {
            assert!(
                prism.signed_distance(*p).abs() < 1e-9,
                "sample {p:?} is off-surface"
            );
        }
    }

    #[test]
    fn corners_are_appended_last() {
        let prism = ReferencePrism::standard();
        let cloud = sample_reference_surface(&prism, 10, 1);
        assert_eq!(&cloud.points[10..], &prism.corners());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let prism = ReferencePrism::standard();
        let a = sample_reference_surface(&prism, 500, 42);
        let b = sample_reference_surface(&prism, 500, 42);
        let c = sample_reference_surface(&prism, 500, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn face_coverage_tracks_area_fractions() {
        let prism = ReferencePrism::standard();
        let cloud = sample_reference_surface(&prism, 1000, 3);
        let mut counts = [0usize; 6];
        for p in &cloud.points[..1000] {
            for (k, &f) in FaceLabel::ALL.iter().enumerate() {
                if (p[f.axis()] - prism.face_coordinate(f)).abs() < 1e-12 {
                    counts[k] += 1;
                    break;
                }
            }
        }
        assert_eq!(counts.iter().sum::<usize>(), 1000);
        // Expected fractions: x faces 5.6 % each, y/z faces 22.2 % each.
        assert!(counts[0] > 20 && counts[0] < 120, "{counts:?}");
        assert!(counts[1] > 20 && counts[1] < 120, "{counts:?}");
        for &c in &counts[2..] {
            assert!(c > 150 && c < 300, "{counts:?}");
        }
    }

    #[test]
    fn downsample_rejects_zero_target() {
        let cloud = PointCloud::new(alloc::vec![Point3::origin()]);
        assert_eq!(downsample_random(&cloud, 0, 1), Err(SampleError::ZeroTarget));
    }

    #[test]
    fn downsample_small_cloud_is_identity() {
        let cloud = PointCloud::new(alloc::vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        ]);
        assert_eq!(downsample_random(&cloud, 2, 9).unwrap(), cloud);
        assert_eq!(downsample_random(&cloud, 10, 9).unwrap(), cloud);
    }

    #[test]
    fn downsample_keeps_order_and_normals() {
        let n = 100;
        let points: Vec<Point3> = (0..n).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let normals: Vec<Vector3> = (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    Vector3::new(1.0, 0.0, 0.0)
                } else {
                    Vector3::new(0.0, 1.0, 0.0)
                }
            })
            .collect();
        let cloud = PointCloud::with_normals(points, normals).unwrap();
        let down = downsample_random(&cloud, 30, 5).unwrap();
        assert_eq!(down.len(), 30);
        let ns = down.normals.as_ref().unwrap();
        let mut last = f64::NEG_INFINITY;
        for (p, n) in down.points.iter().zip(ns) {
            // Original order: x strictly increasing.
            assert!(p.x > last);
            last = p.x;
            // Normal must still belong to its point.
            let expected_x = (p.x as usize) % 2 == 0;
            assert_eq!(n.x == 1.0, expected_x);
        }
        // Determinism.
        assert_eq!(down, downsample_random(&cloud, 30, 5).unwrap());
        assert_ne!(down, downsample_random(&cloud, 30, 6).unwrap());
    }
}
