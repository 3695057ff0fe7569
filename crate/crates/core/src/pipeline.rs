//! Stage composition for the seven method combinations, with per-stage
//! timing and a processing report.
//!
//! Every combination starts with segmentation and null-removal and ends by
//! zeroing out non-retained slots, so output frames always keep the input
//! frame size. Standalone semantics:
//!
//! * `ds` — per-segment DBSCAN, keep each segment's largest cluster.
//! * `km` — per-segment global centroid as a single pseudo-track, Kalman
//!   filter it, keep points within the gate radius of the filtered position.
//! * `hg` — coarse grid cells (≥ `min_samples` points) as pseudo-clusters,
//!   Hungarian association, keep the longest track.
//! * `hg+ds` — DBSCAN clusters, Hungarian association, keep the longest
//!   track.
//! * `ds+km` — DBSCAN clusters, nearest-centroid continuation (no
//!   assignment solve), Kalman filter, keep gated clusters of every track.
//! * `km+hg` — grid pseudo-clusters, Hungarian association, Kalman filter,
//!   keep the track with the smallest mean prediction error.
//! * `ds+km+hg` — the full pipeline: DBSCAN, Hungarian tracks, Kalman
//!   filter, RMSE/median-distance selection against keypoint medians (or the
//!   structural fallback when keypoints are absent).

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::association::{build_tracks, cost_matrix, CostMatrix};
use crate::clustering::{cluster_segment, largest_cluster, ClusterLabeling, DbscanConfig, NOISE};
use crate::error::{Error, Result};
use crate::ingest::FrameSet;
use crate::segmentation::{segment_frame, SegmentationConfig};
use crate::selection::{
    keypoint_median, score_tracks, select_fallback, select_human, zero_out, Selection, TrackScore,
};
use crate::tracking::{track_with_kf, KalmanParams, StepRecord};
use crate::types::{xy_distance, Cluster, Frame, MethodSet, Point3, Segment, Track, TrackNode};

/// Stage keys in report order.
pub const STAGES: [&str; 5] = [
    "segmentation",
    "clustering",
    "association",
    "tracking",
    "selection",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub methods: MethodSet,
    pub segmentation: SegmentationConfig<f64>,
    pub dbscan: DbscanConfig<f64>,
    pub kalman: KalmanParams<f64>,
    /// Cell size of the grid proxy used by `hg`/`km+hg`, meters.
    pub grid_cell: f64,
    pub emit_intermediates: bool,
    /// Worker cap for per-frame parallelism; 1 = serial, 0 = machine default.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            methods: MethodSet::FULL,
            segmentation: SegmentationConfig::default(),
            dbscan: DbscanConfig::default(),
            kalman: KalmanParams::default(),
            grid_cell: 0.5,
            emit_intermediates: false,
            threads: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.methods.any() {
            return Err(Error::InvalidConfig(
                "method set must enable at least one of ds, hg, km".into(),
            ));
        }
        self.segmentation.validate()?;
        self.kalman.validate()?;
        if !(self.dbscan.eps > 0.0) || self.dbscan.min_samples == 0 {
            return Err(Error::InvalidConfig(
                "dbscan needs eps > 0 and min_samples >= 1".into(),
            ));
        }
        if !(self.dbscan.alpha >= 0.0 && self.dbscan.alpha <= 1.0) {
            return Err(Error::InvalidConfig("dbscan alpha must be in [0, 1]".into()));
        }
        if !(self.grid_cell > 0.0) {
            return Err(Error::InvalidConfig("grid_cell must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything one frame produced on the way to its output, for inspection.
#[derive(Debug, Clone)]
pub struct FrameIntermediates {
    pub frame_id: u64,
    /// Post-null-removal segments.
    pub segments: Vec<Segment<f64>>,
    /// Per-segment labelings (pseudo-clusters included, noise = −1).
    pub labelings: Vec<ClusterLabeling<f64>>,
    /// Cost matrices between consecutive segments, when association ran.
    pub cost_matrices: Vec<CostMatrix<f64>>,
    pub tracks: Vec<Track<f64>>,
    /// Step records parallel to `tracks`, when tracking ran.
    pub steps: Vec<Vec<StepRecord<f64>>>,
    pub scores: Vec<TrackScore<f64>>,
    pub selected_track_ids: Vec<usize>,
    pub used_fallback: bool,
}

/// Run summary: timings, sizes, and optional per-frame intermediates.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub methods: String,
    /// Wall seconds per stage, summed over frames.
    pub per_stage_seconds: BTreeMap<String, f64>,
    pub frames_processed: usize,
    pub mean_retained_points: f64,
    /// Frames where keypoint-based selection fell back to the structural
    /// rule.
    pub fallback_selections: usize,
    #[serde(skip)]
    pub per_frame_outputs: Option<Vec<FrameIntermediates>>,
}

struct FrameOutcome {
    frame: Frame<f64>,
    stage_seconds: Vec<(&'static str, f64)>,
    retained: usize,
    used_fallback: bool,
    intermediates: Option<FrameIntermediates>,
}

/// Runs the configured method combination over every frame.
///
/// Outputs are deterministic for fixed inputs and configuration; frames may
/// be processed in parallel but are always emitted in input order.
pub fn run_pipeline(frames: &FrameSet, config: &PipelineConfig) -> Result<(FrameSet, PipelineReport)> {
    config.validate()?;
    if frames.is_empty() {
        return Err(Error::Data("cannot run the pipeline on an empty frame set".into()));
    }

    let outcomes: Result<Vec<FrameOutcome>> = if config.threads == 1 {
        frames.frames.iter().map(|f| process_frame(f, config)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| {
            frames
                .frames
                .par_iter()
                .map(|f| process_frame(f, config))
                .collect()
        })
    };
    let outcomes = outcomes?;

    let mut per_stage_seconds: BTreeMap<String, f64> = BTreeMap::new();
    let mut retained_total = 0usize;
    let mut fallback_selections = 0usize;
    let mut processed = Vec::with_capacity(outcomes.len());
    let mut intermediates = config.emit_intermediates.then(Vec::new);
    for outcome in outcomes {
        for (stage, seconds) in &outcome.stage_seconds {
            *per_stage_seconds.entry(stage.to_string()).or_insert(0.0) += seconds;
        }
        retained_total += outcome.retained;
        fallback_selections += outcome.used_fallback as usize;
        processed.push(outcome.frame);
        if let (Some(all), Some(one)) = (intermediates.as_mut(), outcome.intermediates) {
            all.push(one);
        }
    }

    let report = PipelineReport {
        methods: config.methods.label().to_string(),
        per_stage_seconds,
        frames_processed: processed.len(),
        mean_retained_points: retained_total as f64 / processed.len() as f64,
        fallback_selections,
        per_frame_outputs: intermediates,
    };
    Ok((
        FrameSet {
            frames: processed,
            meta: frames.meta.clone(),
        },
        report,
    ))
}

fn process_frame(frame: &Frame<f64>, config: &PipelineConfig) -> Result<FrameOutcome> {
    let methods = config.methods;
    let mut stage_seconds: Vec<(&'static str, f64)> = Vec::new();

    let start = Instant::now();
    let segments = segment_frame(frame, &config.segmentation)?;
    stage_seconds.push(("segmentation", start.elapsed().as_secs_f64()));

    // Clustering: DBSCAN when ds is on, otherwise the method's proxy.
    let start = Instant::now();
    let labelings: Vec<ClusterLabeling<f64>> = if methods.ds {
        segments
            .iter()
            .map(|s| cluster_segment(s, &config.dbscan))
            .collect()
    } else if methods.hg {
        segments
            .iter()
            .map(|s| grid_clusters(s, config.grid_cell, config.dbscan.min_samples))
            .collect()
    } else {
        segments.iter().map(global_cluster).collect()
    };
    let clusters: Vec<Vec<Cluster<f64>>> = labelings.iter().map(|l| l.clusters.clone()).collect();
    stage_seconds.push(("clustering", start.elapsed().as_secs_f64()));

    // Association.
    let mut cost_matrices = Vec::new();
    let mut tracks: Vec<Track<f64>> = Vec::new();
    let associated = methods.hg || (methods.ds && methods.km);
    if associated {
        let start = Instant::now();
        if methods.hg {
            tracks = build_tracks(&clusters, None);
        } else {
            tracks = nearest_centroid_tracks(&clusters);
        }
        if config.emit_intermediates {
            for pair in clusters.windows(2) {
                cost_matrices.push(cost_matrix(&pair[0], &pair[1]));
            }
        }
        stage_seconds.push(("association", start.elapsed().as_secs_f64()));
    } else if methods.km {
        // Standalone km: chain the per-segment pseudo-clusters directly.
        tracks = chain_single_track(&clusters);
    }

    // Tracking.
    let mut steps: Vec<Vec<StepRecord<f64>>> = Vec::new();
    if methods.km {
        let start = Instant::now();
        let mut filtered = Vec::with_capacity(tracks.len());
        for track in &tracks {
            let (t, s) = track_with_kf(track, &config.kalman)?;
            filtered.push(t);
            steps.push(s);
        }
        tracks = filtered;
        stage_seconds.push(("tracking", start.elapsed().as_secs_f64()));
    }

    // Selection: decide the retained slots and zero out the rest.
    let start = Instant::now();
    let mut scores: Vec<TrackScore<f64>> = Vec::new();
    let mut used_fallback = false;
    let selection: Selection<f64> = match (methods.ds, methods.hg, methods.km) {
        (true, false, false) => {
            let mut retained = Vec::new();
            for labeling in &labelings {
                if let Some(cluster) = largest_cluster(labeling) {
                    retained.extend_from_slice(&cluster.indices);
                }
            }
            structural_selection(Vec::new(), retained)
        }
        (false, false, true) => {
            let retained = retain_within_gate(&segments, &tracks, &steps, config.kalman.gate);
            structural_selection(tracks.iter().map(|t| t.track_id).collect(), retained)
        }
        (false, true, false) | (true, true, false) => {
            let ids = longest_track_ids(&tracks);
            let retained = retained_of_tracks(&tracks, &ids);
            structural_selection(ids, retained)
        }
        (true, false, true) => {
            let retained = retain_gated_clusters(&tracks, &steps);
            structural_selection(tracks.iter().map(|t| t.track_id).collect(), retained)
        }
        (false, true, true) => {
            let ids = min_prediction_error_ids(&tracks, &steps);
            let retained = retained_of_tracks(&tracks, &ids);
            structural_selection(ids, retained)
        }
        (true, true, true) => {
            let pairs: Vec<(Track<f64>, Vec<StepRecord<f64>>)> = tracks
                .iter()
                .cloned()
                .zip(steps.iter().cloned())
                .collect();
            let keypoint_selection = frame
                .keypoints
                .as_ref()
                .map(|kps| keypoint_median(kps))
                .transpose()?
                .map(|median| {
                    let truth = vec![median; segments.len()];
                    score_tracks(&pairs, &truth)
                })
                .filter(|s| !s.is_empty());
            match keypoint_selection {
                Some(s) => {
                    scores = s.clone();
                    select_human(&s, &tracks)?
                }
                None if tracks.is_empty() => structural_selection(Vec::new(), Vec::new()),
                None => {
                    used_fallback = true;
                    select_fallback(&tracks)?
                }
            }
        }
        (false, false, false) => unreachable!("validated: at least one method"),
    };
    used_fallback |= selection.used_fallback;
    let output = zero_out(frame, &selection);
    stage_seconds.push(("selection", start.elapsed().as_secs_f64()));

    let retained = selection.retained_indices.len();
    let intermediates = config.emit_intermediates.then(|| FrameIntermediates {
        frame_id: frame.frame_id,
        segments,
        labelings,
        cost_matrices,
        steps,
        scores: if scores.is_empty() {
            selection.scores.clone()
        } else {
            scores
        },
        selected_track_ids: selection.selected_track_ids.clone(),
        used_fallback,
        tracks,
    });

    Ok(FrameOutcome {
        frame: output,
        stage_seconds,
        retained,
        used_fallback,
        intermediates,
    })
}

fn structural_selection(
    selected_track_ids: Vec<usize>,
    retained_indices: Vec<usize>,
) -> Selection<f64> {
    Selection {
        selected_track_ids,
        retained_points: Vec::new(),
        retained_indices,
        scores: Vec::new(),
        used_fallback: false,
    }
}

/// Occupied grid cells (cell edge `cell`) holding at least `min_samples`
/// points become pseudo-clusters, ordered by first point appearance.
fn grid_clusters(segment: &Segment<f64>, cell: f64, min_samples: usize) -> ClusterLabeling<f64> {
    let key = |p: &Point3<f64>| {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut order: Vec<(i64, i64, i64)> = Vec::new();
    for (i, p) in segment.points.iter().enumerate() {
        let k = key(p);
        let members = cells.entry(k).or_default();
        if members.is_empty() {
            order.push(k);
        }
        members.push(i);
    }

    let mut labels = vec![NOISE; segment.points.len()];
    let mut clusters = Vec::new();
    for k in order {
        let members = &cells[&k];
        if members.len() < min_samples {
            continue;
        }
        let label = clusters.len();
        let points: Vec<Point3<f64>> = members.iter().map(|&i| segment.points[i]).collect();
        let indices: Vec<usize> = members.iter().map(|&i| segment.indices[i]).collect();
        for &i in members {
            labels[i] = label as i64;
        }
        clusters.push(Cluster::new(label, segment.segment_index, points, indices));
    }
    ClusterLabeling { labels, clusters }
}

/// All retained points of a segment as one pseudo-cluster (standalone km).
fn global_cluster(segment: &Segment<f64>) -> ClusterLabeling<f64> {
    if segment.is_empty() {
        return ClusterLabeling {
            labels: Vec::new(),
            clusters: Vec::new(),
        };
    }
    ClusterLabeling {
        labels: vec![0; segment.points.len()],
        clusters: vec![Cluster::new(
            0,
            segment.segment_index,
            segment.points.clone(),
            segment.indices.clone(),
        )],
    }
}

/// Chains one cluster per segment into a single pseudo-track.
fn chain_single_track(per_segment: &[Vec<Cluster<f64>>]) -> Vec<Track<f64>> {
    let mut track: Option<Track<f64>> = None;
    for (t, clusters) in per_segment.iter().enumerate() {
        let Some(cluster) = clusters.first() else {
            continue;
        };
        let node = TrackNode {
            segment_index: t,
            cluster: cluster.clone(),
        };
        match track.as_mut() {
            Some(tr) => tr.push_node(node),
            None => track = Some(Track::new(0, node)),
        }
    }
    track.into_iter().collect()
}

/// Greedy continuation without an assignment solve: tracks claim their
/// nearest next-segment cluster in track-id order; unclaimed clusters spawn.
fn nearest_centroid_tracks(per_segment: &[Vec<Cluster<f64>>]) -> Vec<Track<f64>> {
    let mut tracks: Vec<Track<f64>> = Vec::new();
    let mut tails: Vec<usize> = Vec::new();
    for (t, clusters) in per_segment.iter().enumerate() {
        let mut new_tails = vec![usize::MAX; clusters.len()];
        if t > 0 {
            let prev = &per_segment[t - 1];
            let mut order: Vec<(usize, usize)> =
                tails.iter().enumerate().map(|(i, &id)| (id, i)).collect();
            order.sort_unstable();
            let mut claimed = vec![false; clusters.len()];
            for (id, prev_idx) in order {
                let from = prev[prev_idx].centroid;
                let mut best: Option<(f64, usize)> = None;
                for (j, c) in clusters.iter().enumerate() {
                    if claimed[j] {
                        continue;
                    }
                    let d = from.distance(&c.centroid);
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, j));
                    }
                }
                if let Some((_, j)) = best {
                    claimed[j] = true;
                    tracks[id].push_node(TrackNode {
                        segment_index: t,
                        cluster: clusters[j].clone(),
                    });
                    new_tails[j] = id;
                }
            }
        }
        for (j, c) in clusters.iter().enumerate() {
            if new_tails[j] == usize::MAX {
                let id = tracks.len();
                tracks.push(Track::new(
                    id,
                    TrackNode {
                        segment_index: t,
                        cluster: c.clone(),
                    },
                ));
                new_tails[j] = id;
            }
        }
        tails = new_tails;
    }
    tracks
}

/// Longest track; ties prefer the larger total point count, then the lower
/// id. Empty when there are no tracks.
fn longest_track_ids(tracks: &[Track<f64>]) -> Vec<usize> {
    tracks
        .iter()
        .max_by(|a, b| {
            a.nodes
                .len()
                .cmp(&b.nodes.len())
                .then(a.total_points().cmp(&b.total_points()))
                .then(b.track_id.cmp(&a.track_id))
        })
        .map(|t| vec![t.track_id])
        .unwrap_or_default()
}

/// Track with the smallest mean prediction error over observed steps; tracks
/// without observed steps rank last, ties prefer the lower id.
fn min_prediction_error_ids(tracks: &[Track<f64>], steps: &[Vec<StepRecord<f64>>]) -> Vec<usize> {
    tracks
        .iter()
        .zip(steps)
        .min_by(|(a, sa), (b, sb)| {
            mean_prediction_error(sa)
                .partial_cmp(&mean_prediction_error(sb))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.track_id.cmp(&b.track_id))
        })
        .map(|(t, _)| vec![t.track_id])
        .unwrap_or_default()
}

fn mean_prediction_error(steps: &[StepRecord<f64>]) -> f64 {
    let observed: Vec<f64> = steps
        .iter()
        .filter(|s| s.had_observation())
        .map(|s| s.prediction_error)
        .collect();
    if observed.is_empty() {
        f64::INFINITY
    } else {
        observed.iter().sum::<f64>() / observed.len() as f64
    }
}

fn retained_of_tracks(tracks: &[Track<f64>], ids: &[usize]) -> Vec<usize> {
    let mut retained = Vec::new();
    for track in tracks {
        if ids.contains(&track.track_id) {
            for node in &track.nodes {
                retained.extend_from_slice(&node.cluster.indices);
            }
        }
    }
    retained
}

/// Standalone km retention: per segment, the points within the gate radius
/// (planar) of that segment's filtered position.
fn retain_within_gate(
    segments: &[Segment<f64>],
    tracks: &[Track<f64>],
    steps: &[Vec<StepRecord<f64>>],
    gate: f64,
) -> Vec<usize> {
    let mut filtered_at: HashMap<usize, [f64; 2]> = HashMap::new();
    for (track, track_steps) in tracks.iter().zip(steps) {
        if let Some(first) = track.nodes.first() {
            filtered_at.insert(first.segment_index, first.observed_centroid().xy());
        }
        for s in track_steps {
            filtered_at.insert(s.segment_index, s.filtered_xy);
        }
    }
    let mut retained = Vec::new();
    for segment in segments {
        let Some(&center) = filtered_at.get(&segment.segment_index) else {
            continue;
        };
        for (p, &idx) in segment.points.iter().zip(&segment.indices) {
            if xy_distance(p.xy(), center) <= gate {
                retained.push(idx);
            }
        }
    }
    retained
}

/// ds+km retention: every track keeps its seed cluster and the clusters whose
/// observation passed the gate.
fn retain_gated_clusters(tracks: &[Track<f64>], steps: &[Vec<StepRecord<f64>>]) -> Vec<usize> {
    let mut retained = Vec::new();
    for (track, track_steps) in tracks.iter().zip(steps) {
        let gated_in: Vec<usize> = track_steps
            .iter()
            .filter(|s| s.observed_xy.is_some())
            .map(|s| s.segment_index)
            .collect();
        for (i, node) in track.nodes.iter().enumerate() {
            if i == 0 || gated_in.contains(&node.segment_index) {
                retained.extend_from_slice(&node.cluster.indices);
            }
        }
    }
    retained
}

/// One benchmark row: a method combination with its median per-frame time
/// and per-stage breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub methods: String,
    pub per_frame_seconds: f64,
    pub stages: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchRow>,
}

impl BenchmarkTable {
    /// Long-form CSV: one row per (method, stage).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("methods,per_frame_seconds,stage,stage_seconds\n");
        for row in &self.rows {
            for (stage, seconds) in &row.stages {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row.methods, row.per_frame_seconds, stage, seconds
                ));
            }
        }
        out
    }
}

/// Times each method set over `repetitions` single-threaded runs and reports
/// the median per-frame seconds plus a per-stage breakdown.
pub fn benchmark(
    frames: &FrameSet,
    method_sets: &[MethodSet],
    repetitions: usize,
    base: &PipelineConfig,
) -> Result<BenchmarkTable> {
    if repetitions < 3 {
        return Err(Error::InvalidConfig(
            "benchmark needs at least 3 repetitions".into(),
        ));
    }
    if frames.is_empty() {
        return Err(Error::Data("cannot benchmark an empty frame set".into()));
    }
    let mut rows = Vec::with_capacity(method_sets.len());
    for &methods in method_sets {
        let config = PipelineConfig {
            methods,
            emit_intermediates: false,
            threads: 1,
            ..base.clone()
        };
        let mut per_frame: Vec<f64> = Vec::with_capacity(repetitions);
        let mut per_stage: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for _ in 0..repetitions {
            let start = Instant::now();
            let (_, report) = run_pipeline(frames, &config)?;
            per_frame.push(start.elapsed().as_secs_f64() / frames.len() as f64);
            for (stage, seconds) in report.per_stage_seconds {
                per_stage
                    .entry(stage)
                    .or_default()
                    .push(seconds / frames.len() as f64);
            }
        }
        let stages = STAGES
            .iter()
            .filter_map(|&stage| {
                per_stage
                    .get(stage)
                    .map(|times| (stage.to_string(), median(times)))
            })
            .collect();
        rows.push(BenchRow {
            methods: methods.label().to_string(),
            per_frame_seconds: median(&per_frame),
            stages,
        });
    }
    Ok(BenchmarkTable { rows })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
