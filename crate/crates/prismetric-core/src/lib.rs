//! Core algorithms for dimensional quality control of voxelised concrete
//! printing: reference-prism geometry, point-cloud registration, signed
//! deviation fields, surface metrics, face-grid projection, water dosage
//! arithmetic, load-curve mechanics and voxel-model compensation.
//!
//! The crate is `no_std` + `alloc` so the numerics can run close to the
//! printer hardware; everything file- or OS-shaped lives in the companion
//! `prismetric` crate.
//!
//! All randomised operations (surface sampling, downsampling) take an
//! explicit seed and are bit-reproducible across runs and platforms.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod deviation;
pub mod dosage;
pub mod geometry;
pub mod kdtree;
pub mod mechanics;
pub mod metrics;
pub mod projection;
pub mod register;
pub mod sample;
pub mod voxel;

mod fmath;

pub use geometry::{FaceLabel, Point3, PointCloud, ReferencePrism, TriangleMesh, Vector3};
