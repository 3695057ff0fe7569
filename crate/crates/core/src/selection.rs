//! Human-cluster selection: score filtered tracks against keypoint medians,
//! merge the two best tracks when the RMSE and proximity winners differ, and
//! zero out everything else.

use crate::error::{Error, Result};
use crate::types::{Frame, Point3, Real, Track};
use crate::tracking::StepRecord;

/// Per-track alignment scores: planar RMSE of filtered positions and the
/// median 3-D distance of observed centroids, both against the ground-truth
/// keypoint median.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackScore<T> {
    pub track_id: usize,
    pub rmse: T,
    pub median_distance: T,
}

/// The selected track set and the frame slots it retains.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection<T: Copy> {
    /// One or two track ids (two when the RMSE and distance winners differ).
    pub selected_track_ids: Vec<usize>,
    /// Union of the member points of clusters on selected tracks.
    pub retained_points: Vec<Point3<T>>,
    /// Frame slots of `retained_points`, in the same order.
    pub retained_indices: Vec<usize>,
    pub scores: Vec<TrackScore<T>>,
    /// True when no keypoints were available and the structural fallback
    /// (most nodes, then most points) chose the track.
    pub used_fallback: bool,
}

/// Root of the mean squared Euclidean distance between paired positions.
pub fn rmse<T: Real>(predicted: &[[T; 2]], actual: &[[T; 2]]) -> Result<T> {
    if predicted.is_empty() || predicted.len() != actual.len() {
        return Err(Error::Data(format!(
            "rmse needs equal non-zero lengths, got {} and {}",
            predicted.len(),
            actual.len()
        )));
    }
    let mut sum = T::zero();
    for (p, a) in predicted.iter().zip(actual) {
        let dx = p[0] - a[0];
        let dy = p[1] - a[1];
        sum += dx * dx + dy * dy;
    }
    Ok((sum / T::from_usize(predicted.len()).unwrap()).sqrt())
}

/// Componentwise median; an even count takes the mean of the two middle
/// values per component.
pub fn keypoint_median<T: Real>(keypoints: &[Point3<T>]) -> Result<Point3<T>> {
    if keypoints.is_empty() {
        return Err(Error::Data("median of an empty keypoint set".into()));
    }
    let component = |get: fn(&Point3<T>) -> T| -> T {
        let mut values: Vec<T> = keypoints.iter().map(get).collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite keypoint coordinates"));
        let n = values.len();
        if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) * T::of(0.5)
        }
    };
    Ok(Point3::new(
        component(|p| p.x),
        component(|p| p.y),
        component(|p| p.z),
    ))
}

/// Scores each filtered track against per-segment ground-truth medians.
///
/// A track covers the segments from its first to its last node; coasted
/// segments use the coasted filtered position. The median distance aggregates
/// only segments with an observed centroid. Tracks covering no segment with
/// ground truth are omitted with a warning.
pub fn score_tracks<T: Real>(
    tracks: &[(Track<T>, Vec<StepRecord<T>>)],
    ground_truth_median_per_segment: &[Point3<T>],
) -> Vec<TrackScore<T>> {
    let mut scores = Vec::with_capacity(tracks.len());
    for (track, steps) in tracks {
        let first = match track.nodes.first() {
            Some(n) => n,
            None => continue,
        };
        // Filtered series over covered segments: the first node seeds the
        // filter, so its filtered position is the observation itself.
        let mut filtered: Vec<(usize, [T; 2])> =
            vec![(first.segment_index, first.observed_centroid().xy())];
        filtered.extend(steps.iter().map(|s| (s.segment_index, s.filtered_xy)));

        let mut predicted_xy = Vec::new();
        let mut truth_xy = Vec::new();
        for &(seg, xy) in &filtered {
            if let Some(gt) = ground_truth_median_per_segment.get(seg) {
                predicted_xy.push(xy);
                truth_xy.push(gt.xy());
            }
        }
        if predicted_xy.is_empty() {
            log::warn!(
                "track {} covers no segment with ground truth; score omitted",
                track.track_id
            );
            continue;
        }
        let rmse_value = rmse(&predicted_xy, &truth_xy).expect("non-empty paired positions");

        let mut distances: Vec<T> = track
            .nodes
            .iter()
            .filter_map(|n| {
                ground_truth_median_per_segment
                    .get(n.segment_index)
                    .map(|gt| n.observed_centroid().distance(gt))
            })
            .collect();
        distances.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let median_distance = if distances.is_empty() {
            T::infinity()
        } else if distances.len() % 2 == 1 {
            distances[distances.len() / 2]
        } else {
            (distances[distances.len() / 2 - 1] + distances[distances.len() / 2]) * T::of(0.5)
        };

        scores.push(TrackScore {
            track_id: track.track_id,
            rmse: rmse_value,
            median_distance,
        });
    }
    scores
}

/// Selects the human track set from scores.
///
/// With `A = argmin rmse` and `B = argmin median_distance` (ties to the lower
/// track id), the selection is `{A}` when they coincide and the merged
/// `{A, B}` otherwise. Retained points collect every member point of clusters
/// on selected tracks.
pub fn select_human<T: Real>(
    scores: &[TrackScore<T>],
    tracks: &[Track<T>],
) -> Result<Selection<T>> {
    if scores.is_empty() {
        return Err(Error::Data("selection needs at least one track score".into()));
    }
    let argmin = |key: fn(&TrackScore<T>) -> T| -> usize {
        scores
            .iter()
            .min_by(|a, b| {
                key(a)
                    .partial_cmp(&key(b))
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.track_id.cmp(&b.track_id))
            })
            .unwrap()
            .track_id
    };
    let by_rmse = argmin(|s| s.rmse);
    let by_distance = argmin(|s| s.median_distance);
    let mut selected = vec![by_rmse];
    if by_distance != by_rmse {
        selected.push(by_distance);
    }
    selected.sort_unstable();
    Ok(build_selection(selected, tracks, scores.to_vec(), false))
}

/// Keypoint-free fallback: the track with the most nodes, then the largest
/// total point count, then the lowest id.
pub fn select_fallback<T: Real>(tracks: &[Track<T>]) -> Result<Selection<T>> {
    let best = tracks
        .iter()
        .max_by(|a, b| {
            a.nodes
                .len()
                .cmp(&b.nodes.len())
                .then(a.total_points().cmp(&b.total_points()))
                .then(b.track_id.cmp(&a.track_id))
        })
        .ok_or_else(|| Error::Data("selection fallback needs at least one track".into()))?;
    Ok(build_selection(
        vec![best.track_id],
        tracks,
        Vec::new(),
        true,
    ))
}

fn build_selection<T: Real>(
    selected_track_ids: Vec<usize>,
    tracks: &[Track<T>],
    scores: Vec<TrackScore<T>>,
    used_fallback: bool,
) -> Selection<T> {
    let mut retained_points = Vec::new();
    let mut retained_indices = Vec::new();
    for track in tracks {
        if !selected_track_ids.contains(&track.track_id) {
            continue;
        }
        for node in &track.nodes {
            retained_points.extend_from_slice(&node.cluster.points);
            retained_indices.extend_from_slice(&node.cluster.indices);
        }
    }
    Selection {
        selected_track_ids,
        retained_points,
        retained_indices,
        scores,
        used_fallback,
    }
}

/// Returns a frame of identical size where every slot not retained by the
/// selection is replaced by the origin; retained points keep their original
/// positions and order.
pub fn zero_out<T: Real>(frame: &Frame<T>, selection: &Selection<T>) -> Frame<T> {
    let mut keep = vec![false; frame.points.len()];
    for &idx in &selection.retained_indices {
        keep[idx] = true;
    }
    let mut out = frame.clone();
    for (slot, p) in out.points.iter_mut().enumerate() {
        if !keep[slot] {
            *p = Point3::zero();
        }
    }
    out
}

/// CSV rendering of scores with the selected flag, one row per track.
pub fn scores_to_csv<T: Real>(scores: &[TrackScore<T>], selected: &[usize]) -> String {
    let mut out = String::from("track_id,rmse,median_distance,selected\n");
    for s in scores {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.track_id,
            s.rmse,
            s.median_distance,
            selected.contains(&s.track_id)
        ));
    }
    out
}
