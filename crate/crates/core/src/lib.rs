//! Preprocessing pipeline for sparse radar point clouds.
//!
//! Fixed-size stacked frames are split into contiguous temporal segments,
//! zero-padding is removed by an L2-norm threshold, points are clustered with
//! a vertically-weighted DBSCAN, clusters are associated across segments with
//! the Hungarian algorithm, tracks are smoothed by a gated constant-velocity
//! Kalman filter, and the human cluster is selected by RMSE / median distance
//! against keypoint medians. Every stage can be toggled, giving seven method
//! combinations with well-defined standalone semantics (see [`pipeline`]).
//!
//! All geometry and filtering math is generic over the scalar type through
//! [`types::Real`] (`f32` or `f64`); the file formats, pipeline driver, and
//! CLI run on the `f64` aliases exported at the crate root.

pub mod association;
pub mod clustering;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod segmentation;
pub mod selection;
pub mod tracking;
pub mod tuning;
pub mod types;

pub use error::{Error, Result};
pub use types::{Cluster, Frame, MethodSet, Point3, Real, Segment, Track, TrackNode};

/// `Point3` at the default pipeline scalar.
pub type Point3d = Point3<f64>;
/// Single-precision `Point3`.
pub type Point3f = Point3<f32>;
/// `Frame` at the default pipeline scalar.
pub type Frame64 = Frame<f64>;
/// `Segment` at the default pipeline scalar.
pub type Segment64 = Segment<f64>;
/// `Cluster` at the default pipeline scalar.
pub type Cluster64 = Cluster<f64>;
/// `Track` at the default pipeline scalar.
pub type Track64 = Track<f64>;
