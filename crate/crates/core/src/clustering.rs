//! Vertically-weighted DBSCAN over a segment's filtered points.
//!
//! The metric scales the squared z-difference by a weight `alpha`, so
//! `alpha = 1` is plain Euclidean distance and smaller values make the
//! clustering more tolerant of height differences. Neighborhoods are
//! inclusive (`distance <= eps`) and a point counts itself, matching the
//! original DBSCAN conventions.

use std::collections::VecDeque;

use crate::types::{Cluster, Point3, Real, Segment};

/// DBSCAN parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanConfig<T> {
    /// Neighborhood radius.
    pub eps: T,
    /// Minimum neighborhood size (including the point itself) for a core
    /// point.
    pub min_samples: usize,
    /// Vertical weight on the squared z-difference, in `[0, 1]`.
    pub alpha: T,
}

impl<T: Real> Default for DbscanConfig<T> {
    fn default() -> Self {
        DbscanConfig {
            eps: T::of(0.4),
            min_samples: 6,
            alpha: T::of(0.25),
        }
    }
}

/// Noise label in a `ClusterLabeling`.
pub const NOISE: i64 = -1;

/// Per-point labels (−1 = noise) plus the materialized clusters.
///
/// Cluster ids are contiguous from 0 and ordered by first appearance in the
/// input; `clusters[id]` holds exactly the points bearing label `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterLabeling<T: Copy> {
    pub labels: Vec<i64>,
    pub clusters: Vec<Cluster<T>>,
}

impl<T: Real> ClusterLabeling<T> {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }
}

/// Distance with the squared z-difference scaled by `alpha`:
/// `sqrt((px−qx)² + (py−qy)² + alpha·(pz−qz)²)`.
pub fn weighted_distance<T: Real>(p: &Point3<T>, q: &Point3<T>, alpha: T) -> T {
    weighted_distance_sq(p, q, alpha).sqrt()
}

fn weighted_distance_sq<T: Real>(p: &Point3<T>, q: &Point3<T>, alpha: T) -> T {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    let dz = p.z - q.z;
    dx * dx + dy * dy + alpha * dz * dz
}

/// DBSCAN under the weighted metric.
///
/// Clusters are maximal sets of density-connected points; non-core points
/// unreachable from any core point are noise. The result is deterministic:
/// clusters are created in input scan order and a border point reachable from
/// several clusters goes to the cluster created first. Returned cluster
/// indices refer to positions in `points`.
pub fn dbscan<T: Real>(points: &[Point3<T>], config: &DbscanConfig<T>) -> ClusterLabeling<T> {
    let labels = dbscan_labels(points, config);
    build_labeling(points, labels, 0, None)
}

/// DBSCAN over one segment; cluster indices refer to the parent frame.
pub fn cluster_segment<T: Real>(
    segment: &Segment<T>,
    config: &DbscanConfig<T>,
) -> ClusterLabeling<T> {
    let labels = dbscan_labels(&segment.points, config);
    build_labeling(
        &segment.points,
        labels,
        segment.segment_index,
        Some(&segment.indices),
    )
}

/// The cluster with the most points; ties go to the lowest cluster id.
/// `None` when everything is noise.
pub fn largest_cluster<T: Real>(labeling: &ClusterLabeling<T>) -> Option<&Cluster<T>> {
    labeling.clusters.iter().max_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then(b.label.cmp(&a.label)) // prefer the lower id on ties
    })
}

fn dbscan_labels<T: Real>(points: &[Point3<T>], config: &DbscanConfig<T>) -> Vec<i64> {
    let n = points.len();
    let eps_sq = config.eps * config.eps;
    let min_samples = config.min_samples;

    // Brute-force neighbor lists; segments hold at most a few hundred points.
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if weighted_distance_sq(&points[i], &points[j], config.alpha) <= eps_sq {
                neighbors[i].push(j as u32);
            }
        }
    }

    const UNVISITED: i64 = -2;
    let mut labels = vec![UNVISITED; n];
    let mut cluster_id: i64 = 0;
    for start in 0..n {
        if labels[start] != UNVISITED {
            continue;
        }
        if neighbors[start].len() < min_samples {
            labels[start] = NOISE;
            continue;
        }
        // Core point: breadth-first expansion in index order.
        labels[start] = cluster_id;
        let mut queue: VecDeque<u32> = neighbors[start].iter().copied().collect();
        while let Some(q) = queue.pop_front() {
            let q = q as usize;
            if labels[q] == NOISE {
                labels[q] = cluster_id; // border point claimed by this cluster
            }
            if labels[q] != UNVISITED {
                continue;
            }
            labels[q] = cluster_id;
            if neighbors[q].len() >= min_samples {
                queue.extend(neighbors[q].iter().copied());
            }
        }
        cluster_id += 1;
    }

    relabel_by_first_appearance(labels)
}

/// Renumbers cluster ids so they are contiguous from 0 in order of first
/// appearance in the label array.
fn relabel_by_first_appearance(labels: Vec<i64>) -> Vec<i64> {
    let mut mapping: Vec<Option<i64>> = vec![None; labels.len()];
    let mut next = 0i64;
    labels
        .into_iter()
        .map(|l| {
            if l == NOISE {
                return NOISE;
            }
            let slot = l as usize;
            if mapping[slot].is_none() {
                mapping[slot] = Some(next);
                next += 1;
            }
            mapping[slot].unwrap()
        })
        .collect()
}

fn build_labeling<T: Real>(
    points: &[Point3<T>],
    labels: Vec<i64>,
    segment_index: usize,
    frame_indices: Option<&[usize]>,
) -> ClusterLabeling<T> {
    let num_clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0)) as usize;
    let mut members: Vec<(Vec<Point3<T>>, Vec<usize>)> = vec![Default::default(); num_clusters];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            let idx = frame_indices.map_or(i, |f| f[i]);
            members[l as usize].0.push(points[i]);
            members[l as usize].1.push(idx);
        }
    }
    let clusters = members
        .into_iter()
        .enumerate()
        .map(|(id, (pts, idxs))| Cluster::new(id, segment_index, pts, idxs))
        .collect();
    ClusterLabeling { labels, clusters }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    fn cfg(eps: f64, min_samples: usize, alpha: f64) -> DbscanConfig<f64> {
        DbscanConfig {
            eps,
            min_samples,
            alpha,
        }
    }

    #[test]
    fn weighted_distance_identity() {
        let a = p(1.2, -0.4, 3.3);
        assert_eq!(weighted_distance(&a, &a, 0.25), 0.0);
    }

    #[test]
    fn weighted_distance_scales_z() {
        // sqrt(0.25 * 4) = 1
        assert_relative_eq!(
            weighted_distance(&p(0.0, 0.0, 0.0), &p(0.0, 0.0, 2.0), 0.25),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn alpha_one_is_euclidean() {
        assert_relative_eq!(
            weighted_distance(&p(0.0, 0.0, 0.0), &p(3.0, 4.0, 0.0), 1.0),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn six_coincident_points_form_one_cluster() {
        let points = vec![p(1.0, 1.0, 1.0); 6];
        let out = dbscan(&points, &cfg(0.4, 6, 0.25));
        assert_eq!(out.labels, vec![0; 6]);
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].len(), 6);
    }

    #[test]
    fn five_points_plus_outlier_is_all_noise() {
        // Naive neighbor counting: the coincident group has 5 neighbors each,
        // the outlier 1, so nobody reaches min_samples = 6.
        let mut points = vec![p(1.0, 1.0, 1.0); 5];
        points.push(p(11.0, 1.0, 1.0));
        let out = dbscan(&points, &cfg(0.4, 6, 0.25));
        assert_eq!(out.labels, vec![NOISE; 6]);
        assert!(out.clusters.is_empty());
    }

    #[test]
    fn two_separated_groups_form_two_clusters() {
        // Two groups of 10, spread 0.1, separated by 5; checked against the
        // naive reference in the integration suite, frozen here.
        let mut points = Vec::new();
        for i in 0..10 {
            let d = i as f64 * 0.01;
            points.push(p(d, -d, d));
        }
        for i in 0..10 {
            let d = i as f64 * 0.01;
            points.push(p(5.0 + d, d, -d));
        }
        let out = dbscan(&points, &cfg(0.4, 6, 0.25));
        assert_eq!(out.clusters.len(), 2);
        assert_eq!(out.noise_count(), 0);
        assert_eq!(&out.labels[..10], &[0; 10]);
        assert_eq!(&out.labels[10..], &[1; 10]);
    }

    #[test]
    fn empty_input_is_empty_labeling() {
        let out = dbscan::<f64>(&[], &DbscanConfig::default());
        assert!(out.labels.is_empty());
        assert!(out.clusters.is_empty());
    }

    #[test]
    fn cluster_ids_ordered_by_first_appearance() {
        // A border point of the later-scanned group sits first in the input;
        // ids must follow label order in the array, not core scan order.
        let mut points = vec![p(0.6, 0.0, 0.0)]; // border of the group at x≈1
        for _ in 0..5 {
            points.push(p(-0.5, 0.0, 0.0)); // 5 coincident: not core at min 6
        }
        for _ in 0..6 {
            points.push(p(1.0, 0.0, 0.0)); // core group claiming the border
        }
        let out = dbscan(&points, &cfg(0.4, 6, 1.0));
        assert_eq!(out.labels[0], 0, "first labeled point defines cluster 0");
        assert_eq!(&out.labels[1..6], &[NOISE; 5]);
        assert_eq!(&out.labels[6..], &[0; 6]);
    }

    #[test]
    fn largest_cluster_breaks_ties_by_lowest_id() {
        // Sizes 3 / 7 / 7 with ids 0 / 1 / 2: the size-7 tie goes to id 1.
        let mk = |label: usize, n: usize, x: f64| {
            Cluster::new(label, 0, vec![p(x, 0.0, 0.0); n], (0..n).collect())
        };
        let labeling = ClusterLabeling {
            labels: Vec::new(),
            clusters: vec![mk(0, 3, 0.0), mk(1, 7, 10.0), mk(2, 7, 20.0)],
        };
        assert_eq!(largest_cluster(&labeling).unwrap().label, 1);
    }

    #[test]
    fn largest_cluster_of_all_noise_is_none() {
        let out = dbscan(&[p(0.0, 0.0, 0.0)], &cfg(0.4, 6, 0.25));
        assert!(largest_cluster(&out).is_none());
    }

    #[test]
    fn labels_partition_points() {
        let points: Vec<_> = (0..40)
            .map(|i| p((i % 7) as f64 * 0.1, (i % 5) as f64 * 0.1, 0.0))
            .collect();
        let out = dbscan(&points, &cfg(0.3, 4, 0.25));
        assert_eq!(out.labels.len(), points.len());
        let clustered: usize = out.clusters.iter().map(Cluster::len).sum();
        assert_eq!(clustered + out.noise_count(), points.len());
        for c in &out.clusters {
            for &i in &c.indices {
                assert_eq!(out.labels[i], c.label as i64);
            }
        }
    }

    proptest! {
        // Metric properties for alpha > 0: symmetry, non-negativity, and the
        // triangle inequality.
        #[test]
        fn weighted_metric_properties(
            a in (-5f64..5.0, -5f64..5.0, -5f64..5.0),
            b in (-5f64..5.0, -5f64..5.0, -5f64..5.0),
            c in (-5f64..5.0, -5f64..5.0, -5f64..5.0),
            alpha in 0.01f64..1.0,
        ) {
            let (pa, pb, pc) = (p(a.0, a.1, a.2), p(b.0, b.1, b.2), p(c.0, c.1, c.2));
            let ab = weighted_distance(&pa, &pb, alpha);
            let ba = weighted_distance(&pb, &pa, alpha);
            let ac = weighted_distance(&pa, &pc, alpha);
            let cb = weighted_distance(&pc, &pb, alpha);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        // Shrinking alpha never shrinks a neighborhood: more z-tolerance.
        #[test]
        fn smaller_alpha_keeps_neighbors(
            a in (-2f64..2.0, -2f64..2.0, -2f64..2.0),
            b in (-2f64..2.0, -2f64..2.0, -2f64..2.0),
            alpha in 0.1f64..1.0,
            shrink in 0.0f64..1.0,
        ) {
            let (pa, pb) = (p(a.0, a.1, a.2), p(b.0, b.1, b.2));
            let eps = 1.0;
            if weighted_distance(&pa, &pb, alpha) <= eps {
                prop_assert!(weighted_distance(&pa, &pb, alpha * shrink) <= eps);
            }
        }
    }
}
