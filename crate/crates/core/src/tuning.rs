//! Bayesian optimization of the Kalman noise parameters `(q, r, p0)`,
//! minimizing the mean prediction error over a sample of frames.
//!
//! The surrogate is a Gaussian process with a squared-exponential kernel,
//! per-dimension length scales from the median heuristic on normalized
//! inputs, fixed observation noise, and no hyperparameter marginalization.
//! The expected-improvement acquisition is maximized by multistart
//! coordinate descent on the unit cube. Everything is deterministic under
//! the configured seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::association::build_tracks;
use crate::clustering::{cluster_segment, DbscanConfig};
use crate::error::{Error, Result};
use crate::ingest::FrameSet;
use crate::segmentation::{segment_frame, SegmentationConfig};
use crate::tracking::{track_with_kf, KalmanParams};
use crate::types::{Frame, Real};

/// Search configuration. `iterations` counts every objective evaluation,
/// including the `initial_samples` space-filling ones.
#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig<T> {
    /// Per-parameter `(low, high)` boxes.
    pub bounds: Vec<(T, T)>,
    pub iterations: usize,
    pub initial_samples: usize,
    pub seed: u64,
    pub acquisition: Acquisition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Acquisition {
    #[default]
    ExpectedImprovement,
}

impl<T: Real> BoConfig<T> {
    pub fn new(bounds: Vec<(T, T)>, seed: u64) -> Self {
        BoConfig {
            bounds,
            iterations: 30,
            initial_samples: 5,
            seed,
            acquisition: Acquisition::ExpectedImprovement,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::InvalidConfig("bounds must be non-empty".into()));
        }
        for &(low, high) in &self.bounds {
            if !(low < high) || !low.is_finite() || !high.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "bound ({low}, {high}) must satisfy low < high"
                )));
            }
        }
        if self.initial_samples == 0 || self.iterations < self.initial_samples {
            return Err(Error::InvalidConfig(
                "iterations must be >= initial_samples >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Default search boxes for `(q, r, p0)`, wide enough to contain the shipped
/// defaults.
pub fn default_kf_bounds<T: Real>() -> Vec<(T, T)> {
    vec![
        (T::of(0.01), T::of(100.0)),
        (T::of(0.001), T::of(10.0)),
        (T::of(0.01), T::of(100.0)),
    ]
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BoEvaluation<T> {
    pub params: Vec<T>,
    pub value: T,
}

/// Full evaluation history plus the best point found.
#[derive(Debug, Clone, PartialEq)]
pub struct BoTrace<T> {
    pub evaluations: Vec<BoEvaluation<T>>,
    pub best_params: Vec<T>,
    pub best_value: T,
}

impl<T: Real> BoTrace<T> {
    /// Running minimum of the evaluation values; non-increasing by
    /// construction.
    pub fn best_so_far(&self) -> Vec<T> {
        let mut best = T::infinity();
        self.evaluations
            .iter()
            .map(|e| {
                if e.value < best {
                    best = e.value;
                }
                best
            })
            .collect()
    }

    /// CSV rendering with one row per evaluation.
    pub fn to_csv(&self, param_names: &[&str]) -> String {
        let mut out = format!("iteration,{},objective,best_so_far\n", param_names.join(","));
        for (i, (eval, best)) in self.evaluations.iter().zip(self.best_so_far()).enumerate() {
            let params = eval
                .params
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!("{},{},{},{}\n", i + 1, params, eval.value, best));
        }
        out
    }
}

/// Minimizes `objective` over the configured box.
///
/// Evaluates `initial_samples` Latin-hypercube points, then repeatedly fits
/// the GP surrogate to all finite evaluations and evaluates the
/// expected-improvement maximizer. An objective returning NaN is recorded as
/// +∞ and skipped by the surrogate. Identical seeds give identical traces.
pub fn bayes_optimize<T: Real>(
    mut objective: impl FnMut(&[T]) -> T,
    config: &BoConfig<T>,
) -> Result<BoTrace<T>> {
    config.validate()?;
    let dims = config.bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut unit_points: Vec<Vec<T>> = Vec::with_capacity(config.iterations);
    let mut evaluations: Vec<BoEvaluation<T>> = Vec::with_capacity(config.iterations);
    let mut values: Vec<T> = Vec::with_capacity(config.iterations);

    let evaluate = |unit: Vec<T>,
                        unit_points: &mut Vec<Vec<T>>,
                        evaluations: &mut Vec<BoEvaluation<T>>,
                        values: &mut Vec<T>,
                        objective: &mut dyn FnMut(&[T]) -> T| {
        let params = denormalize(&unit, &config.bounds);
        let raw = objective(&params);
        let value = if raw.is_nan() { T::infinity() } else { raw };
        unit_points.push(unit);
        values.push(value);
        evaluations.push(BoEvaluation { params, value });
    };

    for unit in latin_hypercube(&mut rng, config.initial_samples, dims) {
        evaluate(
            unit,
            &mut unit_points,
            &mut evaluations,
            &mut values,
            &mut objective,
        );
    }

    for _ in config.initial_samples..config.iterations {
        let finite: Vec<(Vec<T>, T)> = unit_points
            .iter()
            .zip(&values)
            .filter(|(_, v)| v.is_finite())
            .map(|(x, v)| (x.clone(), *v))
            .collect();
        let next = match GaussianProcess::fit(&finite) {
            Some(gp) => {
                let incumbent = finite
                    .iter()
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .map(|(x, _)| x.clone())
                    .unwrap();
                maximize_expected_improvement(&gp, &incumbent, dims, &mut rng)
            }
            // Too few usable points for a surrogate: fall back to uniform.
            None => (0..dims).map(|_| T::of(rng.gen::<f64>())).collect(),
        };
        evaluate(
            next,
            &mut unit_points,
            &mut evaluations,
            &mut values,
            &mut objective,
        );
    }

    let best_index = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .expect("at least one evaluation");
    Ok(BoTrace {
        best_params: evaluations[best_index].params.clone(),
        best_value: evaluations[best_index].value,
        evaluations,
    })
}

fn denormalize<T: Real>(unit: &[T], bounds: &[(T, T)]) -> Vec<T> {
    unit.iter()
        .zip(bounds)
        .map(|(&u, &(low, high))| low + u * (high - low))
        .collect()
}

/// Latin hypercube sample of `n` points in `[0,1]^dims`: each dimension gets
/// an independent permutation of `n` strata with a uniform draw inside each.
fn latin_hypercube<T: Real>(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> Vec<Vec<T>> {
    let mut points = vec![vec![T::zero(); dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        for (i, point) in points.iter_mut().enumerate() {
            let offset: f64 = rng.gen();
            point[d] = T::of((strata[i] as f64 + offset) / n as f64);
        }
    }
    points
}

/// GP with squared-exponential kernel on normalized inputs and standardized
/// targets.
struct GaussianProcess<T> {
    x: Vec<Vec<T>>,
    lengthscales: Vec<T>,
    chol: Vec<Vec<T>>,
    alpha: Vec<T>,
    #[cfg_attr(not(test), allow(dead_code))]
    y_mean: T,
    #[cfg_attr(not(test), allow(dead_code))]
    y_std: T,
    noise: T,
    /// Standardized incumbent best, for expected improvement.
    best_standardized: T,
}

impl<T: Real> GaussianProcess<T> {
    const NOISE: f64 = 1e-6;

    fn fit(data: &[(Vec<T>, T)]) -> Option<GaussianProcess<T>> {
        if data.len() < 2 {
            return None;
        }
        let n = data.len();
        let dims = data[0].0.len();
        let x: Vec<Vec<T>> = data.iter().map(|(p, _)| p.clone()).collect();
        let raw_y: Vec<T> = data.iter().map(|(_, v)| *v).collect();

        let y_mean = raw_y.iter().copied().sum::<T>() / T::from_usize(n).unwrap();
        let var = raw_y
            .iter()
            .map(|&v| (v - y_mean) * (v - y_mean))
            .sum::<T>()
            / T::from_usize(n).unwrap();
        let y_std = var.sqrt().max(T::of(1e-12));
        let y: Vec<T> = raw_y.iter().map(|&v| (v - y_mean) / y_std).collect();

        let lengthscales = median_heuristic_lengthscales(&x, dims);
        let noise = T::of(Self::NOISE);

        let mut k = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            for j in 0..n {
                k[i][j] = kernel(&x[i], &x[j], &lengthscales);
                if i == j {
                    k[i][j] += noise;
                }
            }
        }
        // Escalate jitter until the Cholesky succeeds; duplicated points can
        // make K numerically singular.
        let mut jitter = noise;
        let chol = loop {
            if let Some(c) = cholesky(&k) {
                break c;
            }
            jitter = jitter * T::of(10.0);
            if jitter > T::of(1.0) {
                return None;
            }
            for (i, row) in k.iter_mut().enumerate() {
                row[i] += jitter;
            }
        };
        let alpha = cholesky_solve(&chol, &y);
        let best_standardized = y
            .iter()
            .copied()
            .fold(T::infinity(), |acc, v| if v < acc { v } else { acc });

        Some(GaussianProcess {
            x,
            lengthscales,
            chol,
            alpha,
            y_mean,
            y_std,
            noise,
            best_standardized,
        })
    }

    /// Posterior mean and variance in standardized target units.
    fn predict(&self, point: &[T]) -> (T, T) {
        let n = self.x.len();
        let k_star: Vec<T> = (0..n)
            .map(|i| kernel(&self.x[i], point, &self.lengthscales))
            .collect();
        let mean = k_star
            .iter()
            .zip(&self.alpha)
            .map(|(&k, &a)| k * a)
            .sum::<T>();
        let v = forward_substitute(&self.chol, &k_star);
        let prior = T::one() + self.noise;
        let explained = v.iter().map(|&vi| vi * vi).sum::<T>();
        let variance = (prior - explained).max(T::zero());
        (mean, variance)
    }

    /// Expected improvement below the incumbent best at `point`.
    fn expected_improvement(&self, point: &[T]) -> T {
        let (mean, variance) = self.predict(point);
        let sigma = variance.sqrt();
        if sigma < T::of(1e-12) {
            return T::zero();
        }
        let gap = self.best_standardized - mean;
        let u = gap / sigma;
        gap * normal_cdf(u) + sigma * normal_pdf(u)
    }

    #[cfg(test)]
    fn predict_value(&self, point: &[T]) -> T {
        let (mean, _) = self.predict(point);
        mean * self.y_std + self.y_mean
    }
}

fn kernel<T: Real>(a: &[T], b: &[T], lengthscales: &[T]) -> T {
    let mut acc = T::zero();
    for ((&ai, &bi), &l) in a.iter().zip(b).zip(lengthscales) {
        let d = (ai - bi) / l;
        acc += d * d;
    }
    (-acc * T::of(0.5)).exp()
}

/// Per-dimension median of pairwise absolute differences, clamped away from
/// degenerate values.
fn median_heuristic_lengthscales<T: Real>(x: &[Vec<T>], dims: usize) -> Vec<T> {
    let n = x.len();
    (0..dims)
        .map(|d| {
            let mut diffs: Vec<T> = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    diffs.push((x[i][d] - x[j][d]).abs());
                }
            }
            diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = if diffs.is_empty() {
                T::zero()
            } else if diffs.len() % 2 == 1 {
                diffs[diffs.len() / 2]
            } else {
                (diffs[diffs.len() / 2 - 1] + diffs[diffs.len() / 2]) * T::of(0.5)
            };
            median.max(T::of(0.05)).min(T::of(1.0))
        })
        .collect()
}

fn cholesky<T: Real>(a: &[Vec<T>]) -> Option<Vec<Vec<T>>> {
    let n = a.len();
    let mut l = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= T::zero() || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn forward_substitute<T: Real>(l: &[Vec<T>], b: &[T]) -> Vec<T> {
    let n = l.len();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for j in 0..i {
            sum -= l[i][j] * y[j];
        }
        y[i] = sum / l[i][i];
    }
    y
}

/// Solves `L·Lᵀ·x = b`.
fn cholesky_solve<T: Real>(l: &[Vec<T>], b: &[T]) -> Vec<T> {
    let n = l.len();
    let y = forward_substitute(l, b);
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for j in i + 1..n {
            sum -= l[j][i] * x[j];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// Abramowitz-Stegun 7.1.26 rational approximation of the standard normal
/// CDF; absolute error below 1.5e-7, ample for acquisition ranking.
fn normal_cdf<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    let z = x.abs() / T::of(std::f64::consts::SQRT_2);
    let t = T::one() / (T::one() + T::of(0.3275911) * z);
    let poly = t
        * (T::of(0.254829592)
            + t * (T::of(-0.284496736)
                + t * (T::of(1.421413741) + t * (T::of(-1.453152027) + t * T::of(1.061405429)))));
    let erf = T::one() - poly * (-z * z).exp();
    if x >= T::zero() {
        half * (T::one() + erf)
    } else {
        half * (T::one() - erf)
    }
}

fn normal_pdf<T: Real>(x: T) -> T {
    let inv_sqrt_tau = T::of(1.0 / (std::f64::consts::TAU).sqrt());
    inv_sqrt_tau * (-x * x * T::of(0.5)).exp()
}

const ACQUISITION_STARTS: usize = 64;

/// Multistart coordinate descent of the EI surface over the unit cube;
/// derivative-free and deterministic given the RNG state.
fn maximize_expected_improvement<T: Real>(
    gp: &GaussianProcess<T>,
    incumbent: &[T],
    dims: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<T> {
    let mut starts: Vec<Vec<T>> = vec![incumbent.to_vec()];
    for _ in 1..ACQUISITION_STARTS {
        starts.push((0..dims).map(|_| T::of(rng.gen::<f64>())).collect());
    }

    let mut best_point = incumbent.to_vec();
    let mut best_value = T::neg_infinity();
    for start in starts {
        let (point, value) = coordinate_descent(gp, start);
        if value > best_value {
            best_value = value;
            best_point = point;
        }
    }
    best_point
}

fn coordinate_descent<T: Real>(gp: &GaussianProcess<T>, mut point: Vec<T>) -> (Vec<T>, T) {
    let dims = point.len();
    let mut value = gp.expected_improvement(&point);
    for _ in 0..6 {
        let mut improved = false;
        for d in 0..dims {
            let (coord, coord_value) = line_search(gp, &point, d);
            if coord_value > value + T::of(1e-15) {
                point[d] = coord;
                value = coord_value;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (point, value)
}

/// Coarse grid on [0,1] followed by two local refinements around the best
/// cell.
fn line_search<T: Real>(gp: &GaussianProcess<T>, point: &[T], dim: usize) -> (T, T) {
    fn scan<T: Real>(
        gp: &GaussianProcess<T>,
        probe: &mut [T],
        dim: usize,
        center: T,
        radius: T,
        steps: usize,
        best: &mut (T, T),
    ) {
        for s in 0..=steps {
            let coord = (center - radius
                + radius * T::of(2.0) * T::from_usize(s).unwrap() / T::from_usize(steps).unwrap())
            .max(T::zero())
            .min(T::one());
            probe[dim] = coord;
            let v = gp.expected_improvement(probe);
            if v > best.1 {
                *best = (coord, v);
            }
        }
    }

    let mut probe = point.to_vec();
    let mut best = (point[dim], gp.expected_improvement(&probe));
    scan(gp, &mut probe, dim, T::of(0.5), T::of(0.5), 32, &mut best);
    let center = best.0;
    scan(gp, &mut probe, dim, center, T::of(1.0 / 32.0), 16, &mut best);
    let center = best.0;
    scan(gp, &mut probe, dim, center, T::of(1.0 / 512.0), 16, &mut best);
    (best.0, best.1)
}

/// Mean per-step Kalman prediction error over the given frames.
///
/// Runs segmentation, clustering, and association, then filters every track;
/// steps that carried an observation (gated in or out) contribute their
/// predicted-to-observed distance. Deterministic given the frame sample and
/// parameters.
pub fn kf_objective(
    frames: &[&Frame<f64>],
    params: &KalmanParams<f64>,
    segmentation: &SegmentationConfig<f64>,
    dbscan: &DbscanConfig<f64>,
) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Data("objective needs at least one frame".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for frame in frames {
        let segments = segment_frame(frame, segmentation)?;
        let clusters: Vec<_> = segments
            .iter()
            .map(|s| cluster_segment(s, dbscan).clusters)
            .collect();
        let tracks = build_tracks(&clusters, None);
        for track in &tracks {
            let (_, steps) = track_with_kf(track, params)?;
            for step in steps {
                if step.had_observation() {
                    total += step.prediction_error;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::NoTracks);
    }
    Ok(total / count as f64)
}

/// Uniform fixed-size frame sample used by the tuning objective; sorted by
/// position to keep evaluation order stable.
pub fn sample_frames(set: &FrameSet, max_frames: usize, seed: u64) -> Vec<&Frame<f64>> {
    let n = set.frames.len();
    if n <= max_frames {
        return set.frames.iter().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut indices = rand::seq::index::sample(&mut rng, n, max_frames).into_vec();
    indices.sort_unstable();
    indices.into_iter().map(|i| &set.frames[i]).collect()
}

/// End-to-end tuning driver: samples frames, minimizes the objective over
/// `(q, r, p0)`, and returns the trace plus the best parameters (gate and dt
/// taken from `base`).
pub fn tune_kf(
    set: &FrameSet,
    base: &KalmanParams<f64>,
    segmentation: &SegmentationConfig<f64>,
    dbscan: &DbscanConfig<f64>,
    config: &BoConfig<f64>,
    sample_size: usize,
) -> Result<(BoTrace<f64>, KalmanParams<f64>)> {
    if set.is_empty() {
        return Err(Error::Data("cannot tune on an empty frame set".into()));
    }
    if config.bounds.len() != 3 {
        return Err(Error::InvalidConfig(
            "kalman tuning needs exactly 3 bounds: q, r, p0".into(),
        ));
    }
    let frames = sample_frames(set, sample_size, config.seed);
    let objective = |p: &[f64]| {
        let params = KalmanParams {
            q: p[0],
            r: p[1],
            p0: p[2],
            ..*base
        };
        kf_objective(&frames, &params, segmentation, dbscan).unwrap_or(f64::NAN)
    };
    let trace = bayes_optimize(objective, config)?;
    let best = KalmanParams {
        q: trace.best_params[0],
        r: trace.best_params[1],
        p0: trace.best_params[2],
        ..*base
    };
    Ok((trace, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synthesize_scene, SceneConfig, Trajectory};

    fn quadratic_config(seed: u64, iterations: usize) -> BoConfig<f64> {
        BoConfig {
            iterations,
            ..BoConfig::new(vec![(0.0, 10.0); 3], seed)
        }
    }

    fn quadratic(p: &[f64]) -> f64 {
        p.iter().map(|&x| (x - 3.0) * (x - 3.0)).sum()
    }

    #[test]
    fn gp_interpolates_observations() {
        let data: Vec<(Vec<f64>, f64)> = vec![
            (vec![0.0, 0.0], 1.0),
            (vec![1.0, 0.0], 2.0),
            (vec![0.0, 1.0], 3.0),
            (vec![0.5, 0.5], 2.2),
        ];
        let gp = GaussianProcess::fit(&data).unwrap();
        for (x, y) in &data {
            assert!((gp.predict_value(x) - y).abs() < 1e-2);
        }
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0f64) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.0f64) - 0.8413447).abs() < 1e-6);
        assert!((normal_cdf(-2.0f64) - 0.0227501).abs() < 1e-6);
    }

    #[test]
    fn constant_objective_returns_that_constant() {
        let trace = bayes_optimize(|_| 4.25, &quadratic_config(1, 12)).unwrap();
        assert_eq!(trace.best_value, 4.25);
        assert_eq!(trace.evaluations.len(), 12);
    }

    #[test]
    fn best_so_far_is_non_increasing() {
        let trace = bayes_optimize(quadratic, &quadratic_config(7, 20)).unwrap();
        let curve = trace.best_so_far();
        for w in curve.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn evaluations_respect_bounds() {
        let config = BoConfig {
            iterations: 18,
            ..BoConfig::new(vec![(0.5, 2.0), (-1.0, 1.0), (10.0, 20.0)], 3)
        };
        let trace = bayes_optimize(quadratic, &config).unwrap();
        for eval in &trace.evaluations {
            for (p, (low, high)) in eval.params.iter().zip(&config.bounds) {
                assert!(p >= low && p <= high);
            }
        }
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let a = bayes_optimize(quadratic, &quadratic_config(42, 20)).unwrap();
        let b = bayes_optimize(quadratic, &quadratic_config(42, 20)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quadratic_bowl_is_found() {
        let trace = bayes_optimize(quadratic, &quadratic_config(0, 15)).unwrap();
        // 5% of the objective range on the box (max 147 at (10,10,10)).
        assert!(
            trace.best_value <= 0.05 * 147.0,
            "best {} after 15 evaluations",
            trace.best_value
        );
    }

    #[test]
    fn nan_objective_is_recorded_as_infinite() {
        let trace = bayes_optimize(
            |p| if p[0] > 5.0 { f64::NAN } else { quadratic(p) },
            &quadratic_config(9, 16),
        )
        .unwrap();
        assert!(trace
            .evaluations
            .iter()
            .all(|e| e.value.is_infinite() || e.value.is_finite()));
        assert!(trace.best_value.is_finite());
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let config = BoConfig::new(vec![(1.0, 1.0)], 0);
        assert!(bayes_optimize(|_: &[f64]| 0.0, &config).is_err());
    }

    #[test]
    fn trace_csv_shape() {
        let trace = bayes_optimize(quadratic, &quadratic_config(5, 10)).unwrap();
        let csv = trace.to_csv(&["q", "r", "p0"]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], "iteration,q,r,p0,objective,best_so_far");
    }

    #[test]
    fn objective_near_zero_on_noiseless_linear_scene() {
        let (set, _) = synthesize_scene(&SceneConfig {
            num_frames: 4,
            human_points: (200, 200),
            clutter_points: 0,
            clutter_blobs: 0,
            noise_sigma: 0.0,
            trajectory: Trajectory::Linear,
            speed: 0.4,
            seed: 2,
            ..SceneConfig::default()
        })
        .unwrap();
        let frames: Vec<&Frame<f64>> = set.frames.iter().collect();
        let value = kf_objective(
            &frames,
            &KalmanParams::default(),
            &SegmentationConfig::default(),
            &DbscanConfig::default(),
        )
        .unwrap();
        assert!(value < 0.05, "objective {value} on a noiseless line");
    }

    #[test]
    fn objective_is_deterministic() {
        let (set, _) = synthesize_scene(&SceneConfig {
            num_frames: 3,
            seed: 8,
            ..SceneConfig::default()
        })
        .unwrap();
        let frames: Vec<&Frame<f64>> = set.frames.iter().collect();
        let args = (
            KalmanParams::default(),
            SegmentationConfig::default(),
            DbscanConfig::default(),
        );
        let a = kf_objective(&frames, &args.0, &args.1, &args.2).unwrap();
        let b = kf_objective(&frames, &args.0, &args.1, &args.2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_measurement_noise_hurts_on_noisy_scene() {
        let (set, _) = synthesize_scene(&SceneConfig {
            num_frames: 6,
            human_points: (150, 220),
            noise_sigma: 0.15,
            speed: 0.5,
            trajectory: Trajectory::Sinusoidal,
            seed: 4,
            ..SceneConfig::default()
        })
        .unwrap();
        let frames: Vec<&Frame<f64>> = set.frames.iter().collect();
        let tuned = kf_objective(
            &frames,
            &KalmanParams::default(),
            &SegmentationConfig::default(),
            &DbscanConfig::default(),
        )
        .unwrap();
        let stiff = kf_objective(
            &frames,
            &KalmanParams {
                r: 1e6,
                ..KalmanParams::default()
            },
            &SegmentationConfig::default(),
            &DbscanConfig::default(),
        )
        .unwrap();
        assert!(
            stiff > tuned,
            "ignoring measurements ({stiff}) must beat-nothing vs tuned ({tuned})"
        );
    }

    #[test]
    fn no_tracks_is_an_error() {
        // A frame of pure padding yields no clusters anywhere.
        let frame = Frame::new(0, vec![crate::types::Point3::zero(); 100]);
        let frames = vec![&frame];
        let err = kf_objective(
            &frames,
            &KalmanParams::default(),
            &SegmentationConfig::default(),
            &DbscanConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "objective undefined: no tracks");
    }

    #[test]
    fn frame_sampling_is_stable_and_bounded() {
        let (set, _) = synthesize_scene(&SceneConfig {
            num_frames: 12,
            human_points: (60, 80),
            seed: 1,
            ..SceneConfig::default()
        })
        .unwrap();
        let a = sample_frames(&set, 5, 33);
        let b = sample_frames(&set, 5, 33);
        assert_eq!(a.len(), 5);
        let ids: Vec<u64> = a.iter().map(|f| f.frame_id).collect();
        let ids_b: Vec<u64> = b.iter().map(|f| f.frame_id).collect();
        assert_eq!(ids, ids_b);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
}
