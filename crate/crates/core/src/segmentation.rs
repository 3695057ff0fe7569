//! Frame segmentation and null-value removal.
//!
//! A frame is split into contiguous equal windows; within each window, points
//! at or below the L2-norm threshold (the zero-padding) are discarded.

use crate::error::{Error, Result};
use crate::types::{Frame, Real, Segment};

/// Segmentation parameters.
///
/// When the frame size is not divisible by `num_segments`, the last segment
/// absorbs the remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationConfig<T> {
    pub num_segments: usize,
    pub null_threshold: T,
}

impl<T: Real> Default for SegmentationConfig<T> {
    fn default() -> Self {
        SegmentationConfig {
            num_segments: 5,
            null_threshold: T::of(0.001),
        }
    }
}

impl<T: Real> SegmentationConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_segments == 0 {
            return Err(Error::InvalidConfig("num_segments must be > 0".into()));
        }
        if !(self.null_threshold >= T::zero()) {
            return Err(Error::InvalidConfig(
                "null_threshold must be a non-negative number".into(),
            ));
        }
        Ok(())
    }
}

/// Splits a frame into `num_segments` contiguous windows, preserving point
/// order. Every segment except the last holds exactly
/// `floor(len / num_segments)` points; the last absorbs the remainder.
pub fn split_frame<T: Real>(
    frame: &Frame<T>,
    config: &SegmentationConfig<T>,
) -> Result<Vec<Segment<T>>> {
    config.validate()?;
    let n = frame.points.len();
    let k = config.num_segments;
    if n < k {
        return Err(Error::InvalidConfig(format!(
            "frame {} has {} points, fewer than {} segments",
            frame.frame_id, n, k
        )));
    }
    let base = n / k;
    let mut segments = Vec::with_capacity(k);
    for i in 0..k {
        let start = i * base;
        let end = if i == k - 1 { n } else { start + base };
        segments.push(Segment::new(
            i,
            frame.points[start..end].to_vec(),
            (start..end).collect(),
        ));
    }
    Ok(segments)
}

/// Retains exactly the points with `x² + y² + z² > threshold²` (strict),
/// preserving order. Idempotent; an empty result is legal.
pub fn remove_null_points<T: Real>(segment: &Segment<T>, threshold: T) -> Segment<T> {
    let thr_sq = threshold * threshold;
    let mut points = Vec::with_capacity(segment.points.len());
    let mut indices = Vec::with_capacity(segment.indices.len());
    for (p, &idx) in segment.points.iter().zip(&segment.indices) {
        if p.squared_norm() > thr_sq {
            points.push(*p);
            indices.push(idx);
        }
    }
    Segment::new(segment.segment_index, points, indices)
}

/// Splits and null-filters in one pass: the per-segment windows of `frame`
/// with padding removed.
pub fn segment_frame<T: Real>(
    frame: &Frame<T>,
    config: &SegmentationConfig<T>,
) -> Result<Vec<Segment<T>>> {
    let segments = split_frame(frame, config)?;
    Ok(segments
        .iter()
        .map(|s| remove_null_points(s, config.null_threshold))
        .collect())
}
