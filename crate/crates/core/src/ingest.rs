//! Frame file I/O in neutral formats (JSONL and flat CSV) and a deterministic
//! synthetic scene generator with oracle ground truth.
//!
//! JSONL carries one frame object per line:
//! `{"frame_id", "points": [[x,y,z],...], "keypoints": [[x,y,z],...]?, "action_label"?}`.
//! CSV carries one point per row (`frame_id,point_index,x,y,z`) with
//! keypoints in a sibling `<name>.keypoints.csv` of the same schema and
//! action labels in `<name>.labels.csv` (`frame_id,action_label`). Floats are
//! written in shortest exact decimal form, so a load of a write reproduces
//! the frame set exactly.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Frame, Point3};

/// Origin label for synthesized human body returns.
pub const LABEL_HUMAN: u8 = 0;
/// Origin label for synthesized clutter returns (diffuse or dense objects).
pub const LABEL_CLUTTER: u8 = 1;
/// Origin label for zero-padding slots.
pub const LABEL_PADDING: u8 = 2;

/// Highest action label the dataset defines.
pub const MAX_ACTION_LABEL: u8 = 48;

/// Active (non-padding) synthetic points are kept at least this far from the
/// origin so padding is exactly the set of points under the null threshold.
const MIN_ACTIVE_NORM_SQ: f64 = 1e-4;

const BLOB_SIGMA: f64 = 0.15;

/// Frame-set provenance and shape.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameMeta {
    pub frame_size: usize,
    pub num_keypoints: usize,
    pub source: String,
}

/// An ordered collection of frames sharing one frame size.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub frames: Vec<Frame<f64>>,
    pub meta: FrameMeta,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// On-disk frame formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Jsonl,
    Csv,
}

impl FileFormat {
    /// Infers the format from a path extension; defaults to JSONL.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => FileFormat::Csv,
            _ => FileFormat::Jsonl,
        }
    }
}

impl std::str::FromStr for FileFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(FileFormat::Jsonl),
            "csv" => Ok(FileFormat::Csv),
            other => Err(format!("unknown format \"{other}\" (expected jsonl or csv)")),
        }
    }
}

/// Loads a frame file.
///
/// Frames keep file order; missing keypoints and labels stay absent. When
/// `expected_frame_size` is `None`, the first frame fixes the size and every
/// later frame must match it.
pub fn load_frames(
    path: &Path,
    format: FileFormat,
    expected_frame_size: Option<usize>,
) -> Result<FrameSet> {
    let frames = match format {
        FileFormat::Jsonl => load_jsonl(path)?,
        FileFormat::Csv => load_csv(path)?,
    };

    let mut expected = expected_frame_size;
    for frame in &frames {
        let n = frame.points.len();
        let want = *expected.get_or_insert(n);
        if n != want {
            return Err(Error::Data(format!(
                "frame {}: expected {} points, found {}",
                frame.frame_id, want, n
            )));
        }
        validate_frame(frame)?;
    }

    let num_keypoints = frames
        .iter()
        .find_map(|f| f.keypoints.as_ref().map(Vec::len))
        .unwrap_or(0);
    Ok(FrameSet {
        frames,
        meta: FrameMeta {
            frame_size: expected.unwrap_or(0),
            num_keypoints,
            source: path.display().to_string(),
        },
    })
}

/// Writes a frame set; a later `load_frames` reproduces it exactly.
pub fn write_frames(set: &FrameSet, path: &Path, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Jsonl => write_jsonl(set, path),
        FileFormat::Csv => write_csv(set, path),
    }
}

fn validate_frame(frame: &Frame<f64>) -> Result<()> {
    for p in &frame.points {
        if !p.is_finite() {
            return Err(Error::Data(format!(
                "frame {}: non-finite point coordinate",
                frame.frame_id
            )));
        }
    }
    if let Some(kps) = &frame.keypoints {
        if kps.is_empty() {
            return Err(Error::Data(format!(
                "frame {}: keypoints present but empty",
                frame.frame_id
            )));
        }
        if kps.iter().any(|p| !p.is_finite()) {
            return Err(Error::Data(format!(
                "frame {}: non-finite keypoint coordinate",
                frame.frame_id
            )));
        }
    }
    if let Some(label) = frame.action_label {
        if label > MAX_ACTION_LABEL {
            return Err(Error::Data(format!(
                "frame {}: action_label {} out of range 0..={}",
                frame.frame_id, label, MAX_ACTION_LABEL
            )));
        }
    }
    Ok(())
}

fn load_jsonl(path: &Path) -> Result<Vec<Frame<f64>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut frames = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: Frame<f64> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            msg: format!("invalid frame record: {e}"),
        })?;
        frames.push(frame);
    }
    Ok(frames)
}

fn write_jsonl(set: &FrameSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for frame in &set.frames {
        let line = serde_json::to_string(frame).expect("frame serializes");
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    frame_id: u64,
    point_index: usize,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    frame_id: u64,
    action_label: u8,
}

fn sibling(path: &Path, tag: &str) -> PathBuf {
    path.with_extension(format!("{tag}.csv"))
}

fn load_csv(path: &Path) -> Result<Vec<Frame<f64>>> {
    let mut frames: Vec<Frame<f64>> = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    for record in reader.deserialize::<PointRow>() {
        let row = record.map_err(|e| csv_error(path, e))?;
        let start_new = frames.last().map_or(true, |f| f.frame_id != row.frame_id);
        if start_new {
            if !seen.insert(row.frame_id) {
                return Err(Error::Data(format!(
                    "frame {} appears in two non-contiguous row blocks",
                    row.frame_id
                )));
            }
            frames.push(Frame::new(row.frame_id, Vec::new()));
        }
        let frame = frames.last_mut().unwrap();
        if row.point_index != frame.points.len() {
            return Err(Error::Data(format!(
                "frame {}: point_index {} out of order (expected {})",
                row.frame_id,
                row.point_index,
                frame.points.len()
            )));
        }
        frame.points.push(Point3::new(row.x, row.y, row.z));
    }

    let keypoint_path = sibling(path, "keypoints");
    if keypoint_path.exists() {
        let mut by_frame: HashMap<u64, Vec<Point3<f64>>> = HashMap::new();
        let mut reader =
            csv::Reader::from_path(&keypoint_path).map_err(|e| csv_error(&keypoint_path, e))?;
        for record in reader.deserialize::<PointRow>() {
            let row = record.map_err(|e| csv_error(&keypoint_path, e))?;
            by_frame
                .entry(row.frame_id)
                .or_default()
                .push(Point3::new(row.x, row.y, row.z));
        }
        for frame in &mut frames {
            if let Some(kps) = by_frame.remove(&frame.frame_id) {
                frame.keypoints = Some(kps);
            }
        }
        if let Some(&frame_id) = by_frame.keys().min() {
            return Err(Error::Data(format!(
                "keypoints for unknown frame {frame_id}"
            )));
        }
    }

    let label_path = sibling(path, "labels");
    if label_path.exists() {
        let mut by_frame: HashMap<u64, u8> = HashMap::new();
        let mut reader =
            csv::Reader::from_path(&label_path).map_err(|e| csv_error(&label_path, e))?;
        for record in reader.deserialize::<LabelRow>() {
            let row = record.map_err(|e| csv_error(&label_path, e))?;
            by_frame.insert(row.frame_id, row.action_label);
        }
        for frame in &mut frames {
            frame.action_label = by_frame.remove(&frame.frame_id);
        }
        if let Some(&frame_id) = by_frame.keys().min() {
            return Err(Error::Data(format!("label for unknown frame {frame_id}")));
        }
    }

    Ok(frames)
}

fn write_csv(set: &FrameSet, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for frame in &set.frames {
        for (point_index, p) in frame.points.iter().enumerate() {
            writer
                .serialize(PointRow {
                    frame_id: frame.frame_id,
                    point_index,
                    x: p.x,
                    y: p.y,
                    z: p.z,
                })
                .map_err(|e| csv_error(path, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;

    if set.frames.iter().any(|f| f.keypoints.is_some()) {
        let keypoint_path = sibling(path, "keypoints");
        let mut writer =
            csv::Writer::from_path(&keypoint_path).map_err(|e| csv_error(&keypoint_path, e))?;
        for frame in &set.frames {
            if let Some(kps) = &frame.keypoints {
                for (point_index, p) in kps.iter().enumerate() {
                    writer
                        .serialize(PointRow {
                            frame_id: frame.frame_id,
                            point_index,
                            x: p.x,
                            y: p.y,
                            z: p.z,
                        })
                        .map_err(|e| csv_error(&keypoint_path, e))?;
                }
            }
        }
        writer.flush().map_err(|e| Error::io(&keypoint_path, e))?;
    }

    if set.frames.iter().any(|f| f.action_label.is_some()) {
        let label_path = sibling(path, "labels");
        let mut writer =
            csv::Writer::from_path(&label_path).map_err(|e| csv_error(&label_path, e))?;
        for frame in &set.frames {
            if let Some(action_label) = frame.action_label {
                writer
                    .serialize(LabelRow {
                        frame_id: frame.frame_id,
                        action_label,
                    })
                    .map_err(|e| csv_error(&label_path, e))?;
            }
        }
        writer.flush().map_err(|e| Error::io(&label_path, e))?;
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    let msg = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        _ => Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        },
    }
}

/// Body motion model for synthetic scenes; time is measured in frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trajectory {
    Stationary,
    Linear,
    Sinusoidal,
}

impl std::str::FromStr for Trajectory {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stationary" => Ok(Trajectory::Stationary),
            "linear" => Ok(Trajectory::Linear),
            "sinusoidal" => Ok(Trajectory::Sinusoidal),
            other => Err(format!(
                "unknown trajectory \"{other}\" (expected stationary, linear, or sinusoidal)"
            )),
        }
    }
}

/// Synthetic scene parameters.
///
/// Each frame holds `human..=human` body returns around a moving centroid,
/// optional diffuse clutter, optional dense clutter objects, and zero-padding
/// up to `frame_size`. Non-padding returns are interleaved across the frame
/// timeline the way stacked sweeps are, so every segment sees a share of each
/// source. Identical seeds give bit-identical output.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub num_frames: usize,
    pub frame_size: usize,
    /// Inclusive per-frame range of human returns.
    pub human_points: (usize, usize),
    /// Diffuse uniform clutter returns per frame.
    pub clutter_points: usize,
    /// Dense static clutter objects, each producing a persistent cluster.
    pub clutter_blobs: usize,
    /// Returns per clutter object per frame.
    pub blob_points: usize,
    /// When set, clutter objects are visible only on a sub-range of the
    /// frame timeline, producing short-lived tracks.
    pub transient_clutter: bool,
    pub trajectory: Trajectory,
    /// Body speed in meters per frame.
    pub speed: f64,
    /// Gaussian spread of human returns, meters.
    pub noise_sigma: f64,
    pub with_keypoints: bool,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            num_frames: 10,
            frame_size: 1100,
            human_points: (60, 300),
            clutter_points: 60,
            clutter_blobs: 0,
            blob_points: 60,
            transient_clutter: false,
            trajectory: Trajectory::Linear,
            speed: 0.05,
            noise_sigma: 0.1,
            with_keypoints: true,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 {
            return Err(Error::InvalidConfig("num_frames must be >= 1".into()));
        }
        if self.frame_size == 0 {
            return Err(Error::InvalidConfig("frame_size must be >= 1".into()));
        }
        if self.human_points.0 > self.human_points.1 || self.human_points.0 == 0 {
            return Err(Error::InvalidConfig(format!(
                "human point range {}..={} is invalid",
                self.human_points.0, self.human_points.1
            )));
        }
        let max_active =
            self.human_points.1 + self.clutter_points + self.clutter_blobs * self.blob_points;
        if max_active > self.frame_size {
            return Err(Error::InvalidConfig(format!(
                "infeasible scene: up to {} active points exceed frame_size {}",
                max_active, self.frame_size
            )));
        }
        if !self.speed.is_finite() || self.speed < 0.0 {
            return Err(Error::InvalidConfig("speed must be non-negative".into()));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// True body position at time `t` (in frames).
    pub fn body_position(&self, t: f64) -> Point3<f64> {
        let start = Point3::new(2.0, 1.5, 0.5);
        match self.trajectory {
            Trajectory::Stationary => start,
            Trajectory::Linear => {
                let norm = (1.0f64 + 0.3 * 0.3).sqrt();
                Point3::new(
                    start.x + self.speed * t / norm,
                    start.y + 0.3 * self.speed * t / norm,
                    start.z,
                )
            }
            Trajectory::Sinusoidal => Point3::new(
                start.x + self.speed * t,
                start.y + 0.8 * (0.5 * t).sin(),
                start.z,
            ),
        }
    }
}

/// Per-frame oracle data: the true body centroid (at mid-frame time) and the
/// origin of every slot (0 = human, 1 = clutter, 2 = padding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub frame_id: u64,
    pub body_centroid: Point3<f64>,
    pub origin_labels: Vec<u8>,
}

/// Oracle ground truth for a synthesized scene.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub frames: Vec<FrameTruth>,
}

impl GroundTruth {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        for frame in &self.frames {
            let line = serde_json::to_string(frame).expect("truth serializes");
            writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_jsonl(path: &Path) -> Result<GroundTruth> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut frames = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let frame: FrameTruth = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                msg: format!("invalid ground-truth record: {e}"),
            })?;
            frames.push(frame);
        }
        Ok(GroundTruth { frames })
    }
}

/// Symmetric keypoint offsets around the body centroid; the componentwise
/// median of `centroid + offsets` is the centroid itself.
const KEYPOINT_OFFSETS: [[f64; 3]; 9] = [
    [0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0],
    [-0.2, 0.0, 0.0],
    [0.0, 0.2, 0.0],
    [0.0, -0.2, 0.0],
    [0.0, 0.0, 0.35],
    [0.0, 0.0, -0.35],
    [0.1, 0.1, 0.1],
    [-0.1, -0.1, -0.1],
];

/// Synthesizes a scene shaped like stacked radar frames.
///
/// Human returns spread around the moving body, diffuse clutter is uniform in
/// a room-sized box, clutter objects are tight Gaussian blobs placed at least
/// 2.5 m from the body path, and the remaining slots are exact zero-padding.
/// Pure function of the configuration.
pub fn synthesize_scene(config: &SceneConfig) -> Result<(FrameSet, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Body path sampled per frame, used to keep clutter objects clear of it.
    let path: Vec<Point3<f64>> = (0..config.num_frames)
        .map(|f| config.body_position(f as f64 + 0.5))
        .collect();

    let blob_centers: Vec<Point3<f64>> = {
        let mut centers: Vec<Point3<f64>> = Vec::new();
        for _ in 0..config.clutter_blobs {
            let mut best: Option<(f64, Point3<f64>)> = None;
            for _ in 0..1000 {
                let candidate = Point3::new(
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(0.2..1.6),
                );
                let path_clearance = path
                    .iter()
                    .map(|b| xy_dist(b, &candidate))
                    .fold(f64::INFINITY, f64::min);
                let blob_clearance = centers
                    .iter()
                    .map(|c| xy_dist(c, &candidate))
                    .fold(f64::INFINITY, f64::min);
                if path_clearance >= 2.5 && blob_clearance >= 1.2 {
                    best = Some((f64::INFINITY, candidate));
                    break;
                }
                let clearance = path_clearance.min(blob_clearance);
                if best.map_or(true, |(b, _)| clearance > b) {
                    best = Some((clearance, candidate));
                }
            }
            centers.push(best.expect("at least one candidate sampled").1);
        }
        centers
    };

    // Visibility window of each blob on the [0, 1) frame timeline.
    let blob_windows: Vec<(f64, f64)> = (0..config.clutter_blobs)
        .map(|_| {
            if config.transient_clutter {
                let a = rng.gen_range(0.0..0.55);
                (a, a + 0.4)
            } else {
                (0.0, 1.0)
            }
        })
        .collect();

    let mut frames = Vec::with_capacity(config.num_frames);
    let mut truth = Vec::with_capacity(config.num_frames);
    for f in 0..config.num_frames {
        let n_human = rng.gen_range(config.human_points.0..=config.human_points.1);

        // Time-stamped returns; `u` is the position on the frame timeline.
        let mut events: Vec<(f64, u8, Point3<f64>)> = Vec::new();
        for k in 0..n_human {
            let u = (k as f64 + 0.5) / n_human as f64;
            let body = config.body_position(f as f64 + u);
            let p = sample_gaussian_point(&mut rng, body, config.noise_sigma);
            events.push((u, LABEL_HUMAN, p));
        }
        for c in 0..config.clutter_points {
            let u = (c as f64 + 0.5) / config.clutter_points as f64;
            let p = sample_clutter_point(&mut rng);
            events.push((u, LABEL_CLUTTER, p));
        }
        for (center, window) in blob_centers.iter().zip(&blob_windows) {
            for m in 0..config.blob_points {
                let u =
                    window.0 + (m as f64 + 0.5) / config.blob_points as f64 * (window.1 - window.0);
                let p = sample_gaussian_point(&mut rng, *center, BLOB_SIGMA);
                events.push((u, LABEL_CLUTTER, p));
            }
        }
        events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite timeline"));

        // Spread returns evenly over the stacked slots, padding the rest.
        let mut points = vec![Point3::zero(); config.frame_size];
        let mut labels = vec![LABEL_PADDING; config.frame_size];
        let n_active = events.len();
        for (i, (_, label, p)) in events.into_iter().enumerate() {
            let slot = i * config.frame_size / n_active;
            points[slot] = p;
            labels[slot] = label;
        }

        let mid_body = config.body_position(f as f64 + 0.5);
        let mut frame = Frame::new(f as u64, points);
        if config.with_keypoints {
            frame.keypoints = Some(
                KEYPOINT_OFFSETS
                    .iter()
                    .map(|o| Point3::new(mid_body.x + o[0], mid_body.y + o[1], mid_body.z + o[2]))
                    .collect(),
            );
        }
        frames.push(frame);
        truth.push(FrameTruth {
            frame_id: f as u64,
            body_centroid: mid_body,
            origin_labels: labels,
        });
    }

    let num_keypoints = if config.with_keypoints {
        KEYPOINT_OFFSETS.len()
    } else {
        0
    };
    Ok((
        FrameSet {
            frames,
            meta: FrameMeta {
                frame_size: config.frame_size,
                num_keypoints,
                source: "synthetic".into(),
            },
        },
        GroundTruth { frames: truth },
    ))
}

fn xy_dist(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// One standard-normal draw scaled by `sigma` (Box–Muller).
fn sample_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gaussian point around `center`, re-sampled out of the origin exclusion
/// zone so synthetic padding is exactly the sub-threshold set.
fn sample_gaussian_point(
    rng: &mut ChaCha8Rng,
    center: Point3<f64>,
    sigma: f64,
) -> Point3<f64> {
    if sigma == 0.0 {
        return center;
    }
    loop {
        let p = Point3::new(
            center.x + sample_normal(rng, sigma),
            center.y + sample_normal(rng, sigma),
            center.z + sample_normal(rng, sigma),
        );
        if p.squared_norm() > MIN_ACTIVE_NORM_SQ {
            return p;
        }
    }
}

fn sample_clutter_point(rng: &mut ChaCha8Rng) -> Point3<f64> {
    loop {
        let p = Point3::new(
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-4.0..4.0),
            rng.gen_range(0.0..2.0),
        );
        if p.squared_norm() > MIN_ACTIVE_NORM_SQ {
            return p;
        }
    }
}
