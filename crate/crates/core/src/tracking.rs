//! Constant-velocity Kalman filtering of track centroids in the xy-plane,
//! with Euclidean gating.
//!
//! The state is `[x, y, vx, vy]` and the observation is `[x, y]`. The scalar
//! noise parameters expand isotropically: `Q = q·I₄`, `R = r·I₂`,
//! `P₀ = p0·I₄`. An observation farther than `gate` from the prediction is
//! rejected and the filter coasts (filtered = predicted, bit-exactly). The
//! z-coordinate never enters the filter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{xy_distance, KalmanPoint, Real, Track};

/// Filter parameters; all must be positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams<T> {
    /// Process-noise scale.
    pub q: T,
    /// Measurement-noise scale.
    pub r: T,
    /// Initial state-covariance scale.
    pub p0: T,
    /// Euclidean gating threshold, meters.
    pub gate: T,
    /// Time step per segment.
    pub dt: T,
}

impl<T: Real> Default for KalmanParams<T> {
    fn default() -> Self {
        KalmanParams {
            q: T::of(29.41),
            r: T::of(0.081),
            p0: T::of(14.64),
            gate: T::of(2.0),
            dt: T::one(),
        }
    }
}

impl<T: Real> KalmanParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("q", self.q),
            ("r", self.r),
            ("p0", self.p0),
            ("gate", self.gate),
            ("dt", self.dt),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "kalman parameter {name} must be a positive finite number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Filter state: mean vector and 4×4 covariance (symmetric PSD).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState<T> {
    pub state: [T; 4],
    pub covariance: [[T; 4]; 4],
}

impl<T: Real> KalmanState<T> {
    pub fn position(&self) -> [T; 2] {
        [self.state[0], self.state[1]]
    }
}

/// One filtered step of a track.
///
/// `observed_xy` is `None` when the segment had no observation or the
/// observation failed the gate; `gated_out` distinguishes the two.
/// `prediction_error` is the predicted-to-observed distance whenever an
/// observation existed (even a gated-out one) and zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord<T> {
    pub segment_index: usize,
    pub predicted_xy: [T; 2],
    pub observed_xy: Option<[T; 2]>,
    pub filtered_xy: [T; 2],
    pub state_change: T,
    pub prediction_error: T,
    pub gated_out: bool,
}

impl<T: Real> StepRecord<T> {
    /// True when the segment carried an observation, gated in or out.
    pub fn had_observation(&self) -> bool {
        self.observed_xy.is_some() || self.gated_out
    }
}

/// State `[x, y, 0, 0]` with covariance `p0·I₄`.
pub fn kf_init<T: Real>(first_observation: [T; 2], params: &KalmanParams<T>) -> KalmanState<T> {
    let z = T::zero();
    let mut covariance = [[z; 4]; 4];
    for (i, row) in covariance.iter_mut().enumerate() {
        row[i] = params.p0;
    }
    KalmanState {
        state: [first_observation[0], first_observation[1], z, z],
        covariance,
    }
}

/// Constant-velocity prediction: `x' = F·x`, `P' = F·P·Fᵀ + q·I₄`.
pub fn kf_predict<T: Real>(state: &KalmanState<T>, params: &KalmanParams<T>) -> KalmanState<T> {
    let dt = params.dt;
    let f = cv_transition(dt);
    let x = &state.state;
    let predicted = [
        x[0] + x[2] * dt,
        x[1] + x[3] * dt,
        x[2],
        x[3],
    ];
    let mut cov = mat_mul(&f, &mat_mul_transposed(&state.covariance, &f));
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += params.q;
    }
    KalmanState {
        state: predicted,
        covariance: symmetrize(&cov),
    }
}

/// Standard update with `H = [[1,0,0,0],[0,1,0,0]]` and `R = r·I₂`.
/// Returns the updated state and the innovation `z − H·x`.
pub fn kf_update<T: Real>(
    state: &KalmanState<T>,
    observation: [T; 2],
    params: &KalmanParams<T>,
) -> Result<(KalmanState<T>, [T; 2])> {
    let p = &state.covariance;
    // S = H·P·Hᵀ + r·I₂ is the top-left 2×2 block of P plus r.
    let s = [
        [p[0][0] + params.r, p[0][1]],
        [p[1][0], p[1][1] + params.r],
    ];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if !det.is_finite() || det <= T::zero() {
        return Err(Error::Data(format!(
            "singular innovation covariance (det = {det})"
        )));
    }
    let s_inv = [
        [s[1][1] / det, -s[0][1] / det],
        [-s[1][0] / det, s[0][0] / det],
    ];
    // K = P·Hᵀ·S⁻¹; P·Hᵀ is the first two columns of P.
    let mut k = [[T::zero(); 2]; 4];
    for i in 0..4 {
        for j in 0..2 {
            k[i][j] = p[i][0] * s_inv[0][j] + p[i][1] * s_inv[1][j];
        }
    }
    let innovation = [
        observation[0] - state.state[0],
        observation[1] - state.state[1],
    ];
    let mut new_state = state.state;
    for i in 0..4 {
        new_state[i] += k[i][0] * innovation[0] + k[i][1] * innovation[1];
    }
    // P' = (I − K·H)·P; K·H has K's columns in the first two slots.
    let mut ikh = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let kh = if j < 2 { k[i][j] } else { T::zero() };
            ikh[i][j] = if i == j { T::one() - kh } else { -kh };
        }
    }
    let covariance = symmetrize(&mat_mul(&ikh, p));
    Ok((
        KalmanState {
            state: new_state,
            covariance,
        },
        innovation,
    ))
}

/// Filters a track: initializes from the first node's centroid, then for each
/// later segment up to the last node predicts, gates, and either updates or
/// coasts. Returns the track with `kalman_history` populated and the
/// per-step records.
pub fn track_with_kf<T: Real>(
    track: &Track<T>,
    params: &KalmanParams<T>,
) -> Result<(Track<T>, Vec<StepRecord<T>>)> {
    params.validate()?;
    let first = track
        .nodes
        .first()
        .ok_or_else(|| Error::Data("cannot filter an empty track".into()))?;
    let mut state = kf_init(first.observed_centroid().xy(), params);
    let mut history = Vec::new();
    let mut steps = Vec::new();

    for segment in first.segment_index + 1..=track.last_segment() {
        let before = state.state;
        state = kf_predict(&state, params);
        let predicted = state.position();

        let mut observed = None;
        let mut gated_out = false;
        let mut prediction_error = T::zero();
        let mut innovation_mag = T::zero();
        if let Some(node) = track.node_at(segment) {
            let z = node.observed_centroid().xy();
            prediction_error = xy_distance(predicted, z);
            if prediction_error <= params.gate {
                let (updated, innovation) = kf_update(&state, z, params)?;
                state = updated;
                observed = Some(z);
                innovation_mag =
                    (innovation[0] * innovation[0] + innovation[1] * innovation[1]).sqrt();
            } else {
                gated_out = true;
            }
        }

        let filtered = state.position();
        let mut change = T::zero();
        for i in 0..4 {
            let d = state.state[i] - before[i];
            change += d * d;
        }
        steps.push(StepRecord {
            segment_index: segment,
            predicted_xy: predicted,
            observed_xy: observed,
            filtered_xy: filtered,
            state_change: change.sqrt(),
            prediction_error,
            gated_out,
        });
        history.push(KalmanPoint {
            predicted,
            filtered,
            innovation: innovation_mag,
        });
    }

    let mut filtered_track = track.clone();
    filtered_track.kalman_history = Some(history);
    Ok((filtered_track, steps))
}

/// CSV rendering of step records (one row per step), suitable for external
/// plotting of state changes and prediction errors.
pub fn steps_to_csv<T: Real>(steps: &[StepRecord<T>]) -> String {
    let mut out = String::from(
        "segment_index,predicted_x,predicted_y,observed_x,observed_y,filtered_x,filtered_y,state_change,prediction_error\n",
    );
    for s in steps {
        let (ox, oy) = match s.observed_xy {
            Some(o) => (o[0].to_string(), o[1].to_string()),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            s.segment_index,
            s.predicted_xy[0],
            s.predicted_xy[1],
            ox,
            oy,
            s.filtered_xy[0],
            s.filtered_xy[1],
            s.state_change,
            s.prediction_error,
        ));
    }
    out
}

fn cv_transition<T: Real>(dt: T) -> [[T; 4]; 4] {
    let (o, l) = (T::zero(), T::one());
    [
        [l, o, dt, o],
        [o, l, o, dt],
        [o, o, l, o],
        [o, o, o, l],
    ]
}

fn mat_mul<T: Real>(a: &[[T; 4]; 4], b: &[[T; 4]; 4]) -> [[T; 4]; 4] {
    let mut out = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = T::zero();
            for (k, bk) in b.iter().enumerate() {
                acc += a[i][k] * bk[j];
            }
            out[i][j] = acc;
        }
    }
    out
}

/// `a · bᵀ`.
fn mat_mul_transposed<T: Real>(a: &[[T; 4]; 4], b: &[[T; 4]; 4]) -> [[T; 4]; 4] {
    let mut out = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = T::zero();
            for k in 0..4 {
                acc += a[i][k] * b[j][k];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn symmetrize<T: Real>(m: &[[T; 4]; 4]) -> [[T; 4]; 4] {
    let half = T::of(0.5);
    let mut out = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (m[i][j] + m[j][i]) * half;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Cluster, Point3, TrackNode};
    use approx::assert_relative_eq;

    fn params(q: f64, r: f64, p0: f64, gate: f64, dt: f64) -> KalmanParams<f64> {
        KalmanParams { q, r, p0, gate, dt }
    }

    fn track_from_xy(points: &[(f64, f64)]) -> Track<f64> {
        let mut nodes = points.iter().enumerate().map(|(i, &(x, y))| TrackNode {
            segment_index: i,
            cluster: Cluster::new(0, i, vec![Point3::new(x, y, 0.0)], vec![i]),
        });
        let mut track = Track::new(0, nodes.next().unwrap());
        for node in nodes {
            track.push_node(node);
        }
        track
    }

    #[test]
    fn init_sets_state_and_isotropic_covariance() {
        let s = kf_init([1.0, 2.0], &KalmanParams::default());
        assert_eq!(s.state, [1.0, 2.0, 0.0, 0.0]);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 14.64 } else { 0.0 };
                assert_eq!(s.covariance[i][j], expected);
            }
        }
    }

    #[test]
    fn init_at_origin_is_zero_state() {
        let s = kf_init([0.0, 0.0], &KalmanParams::default());
        assert_eq!(s.state, [0.0; 4]);
    }

    #[test]
    fn predict_moves_position_linearly() {
        let mut s = kf_init([1.0, 1.0], &params(1.0, 1.0, 1.0, 2.0, 1.0));
        s.state = [1.0, 1.0, 2.0, -1.0];
        let out = kf_predict(&s, &params(1.0, 1.0, 1.0, 2.0, 1.0));
        assert_eq!(out.position(), [3.0, 0.0]);
        assert_eq!(out.state[2], 2.0);
        assert_eq!(out.state[3], -1.0);
    }

    #[test]
    fn predict_without_process_noise_is_pure_fpft() {
        let p = params(1e-300, 1.0, 2.0, 2.0, 1.0); // q → 0
        let s = kf_init([0.0, 0.0], &p);
        let out = kf_predict(&s, &p);
        // F·(p0·I)·Fᵀ for CV: top-left block p0·(1+dt²) on the diagonal,
        // p0·dt coupling position to velocity.
        assert_relative_eq!(out.covariance[0][0], 4.0, epsilon = 1e-9);
        assert_relative_eq!(out.covariance[0][2], 2.0, epsilon = 1e-9);
        assert_relative_eq!(out.covariance[2][2], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn two_half_steps_match_one_full_step_in_the_mean() {
        let full = params(3.0, 1.0, 2.0, 2.0, 1.0);
        let half = params(3.0, 1.0, 2.0, 2.0, 0.5);
        let mut s = kf_init([1.0, -2.0], &full);
        s.state = [1.0, -2.0, 0.7, 0.3];
        let one = kf_predict(&s, &full);
        let two = kf_predict(&kf_predict(&s, &half), &half);
        assert_relative_eq!(one.state[0], two.state[0], epsilon = 1e-12);
        assert_relative_eq!(one.state[1], two.state[1], epsilon = 1e-12);
        // Covariances intentionally differ (process noise enters per step).
        assert!(one.covariance != two.covariance);
    }

    #[test]
    fn near_zero_measurement_noise_pins_filtered_to_observation() {
        let p = params(29.41, 1e-12, 14.64, 1e9, 1.0);
        let mut state = kf_init([0.0, 0.0], &p);
        for step in 1..=8 {
            state = kf_predict(&state, &p);
            let obs = [step as f64 * 0.7, -(step as f64) * 0.3];
            let (updated, _) = kf_update(&state, obs, &p).unwrap();
            state = updated;
            assert!((state.state[0] - obs[0]).abs() < 1e-6);
            assert!((state.state[1] - obs[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn observation_at_prediction_leaves_position_unchanged() {
        let p = params(2.0, 0.5, 3.0, 2.0, 1.0);
        let mut s = kf_init([1.0, 2.0], &p);
        s.state = [1.0, 2.0, 0.5, 0.5];
        let predicted = kf_predict(&s, &p);
        let (updated, innovation) = kf_update(&predicted, predicted.position(), &p).unwrap();
        assert_eq!(innovation, [0.0, 0.0]);
        assert_eq!(updated.position(), predicted.position());
    }

    #[test]
    fn first_update_gain_is_half_when_p_equals_r() {
        // Closed form for one axis at init (velocities still decoupled):
        // gain = p0 / (p0 + r) = 0.5, so the filtered position is midway.
        let p = params(1.0, 1.0, 1.0, 10.0, 1.0);
        let s = kf_init([0.0, 0.0], &p);
        let (updated, _) = kf_update(&s, [2.0, -4.0], &p).unwrap();
        assert_relative_eq!(updated.state[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(updated.state[1], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_linear_track_converges() {
        let obs: Vec<(f64, f64)> = (0..12).map(|i| (i as f64 * 0.3, i as f64 * 0.2)).collect();
        let track = track_from_xy(&obs);
        let (_, steps) = track_with_kf(&track, &KalmanParams::default()).unwrap();
        // The constant-velocity model is exact on a line: errors must be
        // non-increasing after step 2 and end below 1e-3.
        for w in steps[1..].windows(2) {
            assert!(w[1].prediction_error <= w[0].prediction_error + 1e-12);
        }
        assert!(steps.last().unwrap().prediction_error < 1e-3);
    }

    #[test]
    fn jump_beyond_gate_coasts_bit_exactly() {
        let track = track_from_xy(&[(0.0, 0.0), (0.3, 0.0), (10.3, 0.0)]);
        let (_, steps) = track_with_kf(&track, &KalmanParams::default()).unwrap();
        let jump = &steps[1];
        assert!(jump.gated_out);
        assert_eq!(jump.observed_xy, None);
        assert_eq!(
            jump.filtered_xy[0].to_bits(),
            jump.predicted_xy[0].to_bits()
        );
        assert_eq!(
            jump.filtered_xy[1].to_bits(),
            jump.predicted_xy[1].to_bits()
        );
        assert!(jump.prediction_error > 2.0);
    }

    #[test]
    fn state_change_settles_after_second_step() {
        // Smooth synthetic track: a large velocity correction at step 2,
        // then monotone settling.
        let obs: Vec<(f64, f64)> = (0..6).map(|i| (1.0 + i as f64 * 0.4, 2.0)).collect();
        let track = track_from_xy(&obs);
        let (filtered, steps) = track_with_kf(&track, &KalmanParams::default()).unwrap();
        assert!(steps[0].state_change > steps[2].state_change);
        for w in steps[1..].windows(2) {
            assert!(w[1].state_change <= w[0].state_change + 1e-9);
        }
        let history = filtered.kalman_history.as_ref().unwrap();
        assert_eq!(history.len(), steps.len());
    }

    #[test]
    fn gap_in_nodes_coasts_and_keeps_tracking() {
        let mut track = track_from_xy(&[(0.0, 0.0), (0.4, 0.0)]);
        track.push_node(TrackNode {
            segment_index: 4,
            cluster: Cluster::new(0, 4, vec![Point3::new(1.6, 0.0, 0.0)], vec![9]),
        });
        let (_, steps) = track_with_kf(&track, &KalmanParams::default()).unwrap();
        assert_eq!(steps.len(), 4);
        assert!(!steps[1].had_observation());
        assert_eq!(steps[1].prediction_error, 0.0);
        assert!(steps[3].observed_xy.is_some());
    }

    #[test]
    fn empty_track_errors() {
        let track: Track<f64> = Track {
            track_id: 0,
            nodes: Vec::new(),
            kalman_history: None,
        };
        assert!(track_with_kf(&track, &KalmanParams::default()).is_err());
    }

    #[test]
    fn csv_export_includes_blank_observation_columns() {
        let track = track_from_xy(&[(0.0, 0.0), (0.3, 0.0), (10.3, 0.0)]);
        let (_, steps) = track_with_kf(&track, &KalmanParams::default()).unwrap();
        let csv = steps_to_csv(&steps);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("segment_index,"));
        assert!(lines[2].contains(",,"), "gated step leaves observed blank");
    }
}
