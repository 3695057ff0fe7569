//! Shared geometric and pipeline-wide domain types.
//!
//! All types are immutable value types after construction and are safe to
//! share across threads.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Scalar type for geometry and filtering math: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from a literal; panics only for non-finite inputs on
    /// types that cannot represent them, which none of the implementors hit.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable in Real scalar")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Display
        + Debug
        + Default
        + Send
        + Sync
        + 'static
{
}

/// A single radar return or keypoint, in meters.
///
/// Coordinates are finite real numbers; files are validated on load and the
/// synthesizer only emits finite values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
pub struct Point3<T: Copy> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Copy> From<[T; 3]> for Point3<T> {
    fn from(v: [T; 3]) -> Self {
        Point3 {
            x: v[0],
            y: v[1],
            z: v[2],
        }
    }
}

impl<T: Copy> From<Point3<T>> for [T; 3] {
    fn from(p: Point3<T>) -> Self {
        [p.x, p.y, p.z]
    }
}

impl<T: Real> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Point3 { x, y, z }
    }

    pub fn zero() -> Self {
        Point3 {
            x: T::zero(),
            y: T::zero(),
            z: T::zero(),
        }
    }

    /// `x² + y² + z²`, the quantity thresholded by null-value removal.
    pub fn squared_norm(&self) -> T {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    /// Unweighted 3-D Euclidean distance.
    pub fn distance(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Planar projection used by the Kalman filter state space.
    pub fn xy(&self) -> [T; 2] {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Planar Euclidean distance between two `[x, y]` positions.
pub fn xy_distance<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// A stacked sample: a fixed-size, temporally ordered point list with
/// optional ground-truth keypoints and an optional action label.
///
/// Point order is meaningful (temporal stacking) and is preserved by every
/// stage; the configured frame size is enforced at the I/O boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame<T: Copy> {
    pub frame_id: u64,
    pub points: Vec<Point3<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<Point3<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_label: Option<u8>,
}

impl<T: Real> Frame<T> {
    pub fn new(frame_id: u64, points: Vec<Point3<T>>) -> Self {
        Frame {
            frame_id,
            points,
            keypoints: None,
            action_label: None,
        }
    }
}

/// A contiguous sub-window of a frame's point list.
///
/// `indices` maps every point back to its slot in the parent frame so that
/// later stages can zero out exactly the non-retained slots; the two vectors
/// are always the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T: Copy> {
    pub segment_index: usize,
    pub points: Vec<Point3<T>>,
    pub indices: Vec<usize>,
}

impl<T: Real> Segment<T> {
    pub fn new(segment_index: usize, points: Vec<Point3<T>>, indices: Vec<usize>) -> Self {
        assert_eq!(points.len(), indices.len());
        Segment {
            segment_index,
            points,
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A labeled, non-empty point subset of one segment with its centroid.
///
/// The centroid is the componentwise arithmetic mean of `points`, fixed at
/// construction. Border-only clusters may hold fewer than `min_samples`
/// points; the core-point rule only governs cluster creation.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T: Copy> {
    pub label: usize,
    pub segment_index: usize,
    pub points: Vec<Point3<T>>,
    pub indices: Vec<usize>,
    pub centroid: Point3<T>,
}

impl<T: Real> Cluster<T> {
    pub fn new(
        label: usize,
        segment_index: usize,
        points: Vec<Point3<T>>,
        indices: Vec<usize>,
    ) -> Self {
        assert!(!points.is_empty(), "cluster must hold at least one point");
        assert_eq!(points.len(), indices.len());
        let centroid =
            crate::association::centroid(&points).expect("non-empty cluster has a centroid");
        Cluster {
            label,
            segment_index,
            points,
            indices,
            centroid,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One associated cluster on a track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackNode<T: Copy> {
    pub segment_index: usize,
    pub cluster: Cluster<T>,
}

impl<T: Real> TrackNode<T> {
    /// The measurement the Kalman filter sees for this node.
    pub fn observed_centroid(&self) -> Point3<T> {
        self.cluster.centroid
    }
}

/// One Kalman step of a filtered track: predicted and filtered planar
/// positions plus the innovation magnitude (zero on coasting steps).
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanPoint<T> {
    pub predicted: [T; 2],
    pub filtered: [T; 2],
    pub innovation: T,
}

/// A chain of clusters associated across segments.
///
/// Nodes are strictly increasing in `segment_index` with at most one node per
/// segment. `kalman_history` is populated by `tracking::track_with_kf`.
#[derive(Debug, Clone, PartialEq)]
pub struct Track<T: Copy> {
    pub track_id: usize,
    pub nodes: Vec<TrackNode<T>>,
    pub kalman_history: Option<Vec<KalmanPoint<T>>>,
}

impl<T: Real> Track<T> {
    pub fn new(track_id: usize, first: TrackNode<T>) -> Self {
        Track {
            track_id,
            nodes: vec![first],
            kalman_history: None,
        }
    }

    /// Appends a node, enforcing strictly increasing segment indices.
    pub fn push_node(&mut self, node: TrackNode<T>) {
        if let Some(last) = self.nodes.last() {
            assert!(
                node.segment_index > last.segment_index,
                "track nodes must be strictly increasing in segment index"
            );
        }
        self.nodes.push(node);
    }

    pub fn first_segment(&self) -> usize {
        self.nodes.first().map(|n| n.segment_index).unwrap_or(0)
    }

    pub fn last_segment(&self) -> usize {
        self.nodes.last().map(|n| n.segment_index).unwrap_or(0)
    }

    /// Node with the given segment index, if any.
    pub fn node_at(&self, segment_index: usize) -> Option<&TrackNode<T>> {
        self.nodes
            .iter()
            .find(|n| n.segment_index == segment_index)
    }

    /// Total number of member points across all nodes.
    pub fn total_points(&self) -> usize {
        self.nodes.iter().map(|n| n.cluster.len()).sum()
    }
}

/// Which of the three preprocessing methods a pipeline run combines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSet {
    /// Density-based clustering.
    pub ds: bool,
    /// Hungarian inter-segment association.
    pub hg: bool,
    /// Kalman tracking.
    pub km: bool,
}

impl MethodSet {
    pub const DS: MethodSet = MethodSet {
        ds: true,
        hg: false,
        km: false,
    };
    pub const HG: MethodSet = MethodSet {
        ds: false,
        hg: true,
        km: false,
    };
    pub const KM: MethodSet = MethodSet {
        ds: false,
        hg: false,
        km: true,
    };
    pub const FULL: MethodSet = MethodSet {
        ds: true,
        hg: true,
        km: true,
    };

    /// The seven method combinations in canonical benchmark row order.
    pub const ALL_COMBINATIONS: [MethodSet; 7] = [
        MethodSet {
            ds: false,
            hg: false,
            km: true,
        },
        MethodSet {
            ds: true,
            hg: false,
            km: false,
        },
        MethodSet {
            ds: false,
            hg: true,
            km: false,
        },
        MethodSet {
            ds: false,
            hg: true,
            km: true,
        },
        MethodSet {
            ds: true,
            hg: true,
            km: false,
        },
        MethodSet {
            ds: true,
            hg: false,
            km: true,
        },
        MethodSet {
            ds: true,
            hg: true,
            km: true,
        },
    ];

    /// True when at least one method is enabled (required to run a pipeline).
    pub fn any(&self) -> bool {
        self.ds || self.hg || self.km
    }

    /// Parses a comma list over `{ds,hg,km}`; the error names the first
    /// unknown token.
    pub fn parse(s: &str) -> std::result::Result<MethodSet, String> {
        let mut set = MethodSet {
            ds: false,
            hg: false,
            km: false,
        };
        for token in s.split(',') {
            match token.trim().to_ascii_lowercase().as_str() {
                "ds" => set.ds = true,
                "hg" => set.hg = true,
                "km" => set.km = true,
                other => return Err(format!("unknown method token \"{other}\"")),
            }
        }
        if !set.any() {
            return Err("method list selects no methods".to_string());
        }
        Ok(set)
    }

    /// Canonical label, matching the benchmark row naming.
    pub fn label(&self) -> &'static str {
        match (self.ds, self.hg, self.km) {
            (false, false, true) => "km",
            (true, false, false) => "ds",
            (false, true, false) => "hg",
            (false, true, true) => "km+hg",
            (true, true, false) => "hg+ds",
            (true, false, true) => "ds+km",
            (true, true, true) => "ds+km+hg",
            (false, false, false) => "none",
        }
    }
}

impl std::fmt::Display for MethodSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}
