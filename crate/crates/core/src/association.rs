//! Inter-segment data association: cluster centroids, Euclidean cost
//! matrices, minimum-cost assignment, and track formation.
//!
//! Costs are plain 3-D Euclidean centroid distances; the vertical weighting
//! used for clustering does not apply here.

use crate::error::{Error, Result};
use crate::types::{Cluster, Point3, Real, Track, TrackNode};

/// Componentwise arithmetic mean of a non-empty point list.
pub fn centroid<T: Real>(points: &[Point3<T>]) -> Result<Point3<T>> {
    if points.is_empty() {
        return Err(Error::Data("centroid of an empty point set".into()));
    }
    let n = T::from_usize(points.len()).unwrap();
    let mut sum: Point3<T> = Point3::zero();
    for p in points {
        sum.x += p.x;
        sum.y += p.y;
        sum.z += p.z;
    }
    Ok(Point3::new(sum.x / n, sum.y / n, sum.z / n))
}

/// Pairwise centroid distances between the clusters of two consecutive
/// segments. Rows index the earlier segment, columns the later one.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    costs: Vec<Vec<T>>,
    cols: usize,
}

impl<T: Real> CostMatrix<T> {
    /// Builds a matrix from row-major entries; rows must be equal length.
    pub fn from_rows(costs: Vec<Vec<T>>, cols: usize) -> Result<Self> {
        for row in &costs {
            if row.len() != cols {
                return Err(Error::Data(format!(
                    "ragged cost matrix: expected {} columns, found {}",
                    cols,
                    row.len()
                )));
            }
        }
        Ok(CostMatrix { costs, cols })
    }

    pub fn rows(&self) -> usize {
        self.costs.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.costs[row][col]
    }

    /// Header-less CSV rendering, one row per line.
    pub fn to_csv(&self) -> String {
        self.costs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Unweighted 3-D Euclidean centroid distances between two cluster lists.
/// Either list may be empty.
pub fn cost_matrix<T: Real>(a: &[Cluster<T>], b: &[Cluster<T>]) -> CostMatrix<T> {
    let costs = a
        .iter()
        .map(|ca| b.iter().map(|cb| ca.centroid.distance(&cb.centroid)).collect())
        .collect();
    CostMatrix {
        costs,
        cols: b.len(),
    }
}

/// A partial matching between rows and columns. `pairs` is sorted by row;
/// every row and column appears exactly once across `pairs` and the
/// unmatched lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    /// Sum of the matched entries of `costs`.
    pub fn total_cost<T: Real>(&self, costs: &CostMatrix<T>) -> T {
        self.pairs.iter().map(|&(i, j)| costs.get(i, j)).sum()
    }
}

/// Minimum-total-cost matching of size `min(rows, cols)`.
///
/// Among equal-cost optima the lexicographically smallest pair list is
/// returned, so results are reproducible across runs and implementations.
/// Rectangular matrices are padded internally; padded pairs are reported as
/// unmatched.
pub fn hungarian_assign<T: Real>(costs: &CostMatrix<T>) -> Result<Assignment> {
    let rows = costs.rows();
    let cols = costs.cols();
    for i in 0..rows {
        for j in 0..cols {
            let c = costs.get(i, j);
            if !c.is_finite() || c < T::zero() {
                return Err(Error::Data(format!(
                    "cost matrix: non-finite or negative entry {} at ({}, {})",
                    c, i, j
                )));
            }
        }
    }

    // Walk rows in order, fixing for each the cheapest continuation. Exact
    // cost ties prefer the smaller column, and matching a row is preferred
    // over skipping it, which yields the lexicographically smallest optimal
    // pair list. Matrices here are cluster counts per segment, so the extra
    // sub-solves are cheap.
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut used = vec![false; cols];
    let target = rows.min(cols);
    for i in 0..rows {
        let need = target - pairs.len();
        if need == 0 {
            break;
        }
        let rows_after = rows - i - 1;
        let must_match = rows_after < need;

        let mut best: Option<(T, usize)> = None;
        for j in 0..cols {
            if used[j] {
                continue;
            }
            let mut used_j = used.clone();
            used_j[j] = true;
            let total = costs.get(i, j) + optimal_total(costs, i + 1, &used_j);
            if best.map_or(true, |(bt, _)| total < bt) {
                best = Some((total, j));
            }
        }
        let skip_total = if must_match {
            None
        } else {
            Some(optimal_total(costs, i + 1, &used))
        };

        match (best, skip_total) {
            (Some((bt, _)), Some(st)) if st < bt => {} // skipping row i is strictly cheaper
            (Some((_, bj)), _) => {
                pairs.push((i, bj));
                used[bj] = true;
            }
            (None, _) => {} // no free column left
        }
    }

    let matched_rows: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
    let unmatched_rows = (0..rows).filter(|i| !matched_rows.contains(i)).collect();
    let unmatched_cols = (0..cols).filter(|&j| !used[j]).collect();
    Ok(Assignment {
        pairs,
        unmatched_rows,
        unmatched_cols,
    })
}

/// Optimal total over the submatrix of rows `row_start..` and the columns not
/// yet used.
fn optimal_total<T: Real>(costs: &CostMatrix<T>, row_start: usize, used: &[bool]) -> T {
    let free_cols: Vec<usize> = (0..costs.cols()).filter(|&j| !used[j]).collect();
    let sub: Vec<Vec<T>> = (row_start..costs.rows())
        .map(|i| free_cols.iter().map(|&j| costs.get(i, j)).collect())
        .collect();
    let (r, c) = (sub.len(), free_cols.len());
    if r == 0 || c == 0 {
        return T::zero();
    }
    let matching = solve_padded(&sub, r, c);
    matching.into_iter().map(|(i, j)| sub[i][j]).sum()
}

/// Minimum-cost matching of size `min(r, c)` via square padding; returns the
/// real (row, col) pairs. The pad value never changes which real entries are
/// optimal because every perfect matching on the padded square uses the same
/// number of padded cells.
fn solve_padded<T: Real>(cost: &[Vec<T>], r: usize, c: usize) -> Vec<(usize, usize)> {
    let s = r.max(c);
    let mut max_entry = T::zero();
    for row in cost {
        for &v in row {
            if v > max_entry {
                max_entry = v;
            }
        }
    }
    let sentinel = (max_entry + T::one()) * T::from_usize(s).unwrap();
    let padded: Vec<Vec<T>> = (0..s)
        .map(|i| {
            (0..s)
                .map(|j| if i < r && j < c { cost[i][j] } else { sentinel })
                .collect()
        })
        .collect();
    let row_to_col = solve_square(&padded);
    (0..r)
        .filter(|&i| row_to_col[i] < c)
        .map(|i| (i, row_to_col[i]))
        .collect()
}

/// Shortest-augmenting-path assignment solver with row/column potentials on
/// a square matrix; O(n³). Returns the matched column for every row.
fn solve_square<T: Real>(a: &[Vec<T>]) -> Vec<usize> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = T::infinity();
    let none = usize::MAX;
    let mut u = vec![T::zero(); n]; // row potentials
    let mut v = vec![T::zero(); n + 1]; // column potentials; slot n is virtual
    let mut p = vec![none; n + 1]; // p[j] = row matched to column j

    for i in 0..n {
        p[n] = i;
        let mut j0 = n;
        let mut minv = vec![inf; n + 1];
        let mut way = vec![n; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = n;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let cur = a[i0][j] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    if p[j] != none {
                        u[p[j]] += delta;
                    }
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == none {
                break;
            }
        }
        // Augment along the alternating path back to the virtual column.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == n {
                break;
            }
        }
    }

    let mut row_to_col = vec![none; n];
    for j in 0..n {
        if p[j] != none {
            row_to_col[p[j]] = j;
        }
    }
    row_to_col
}

/// Chains per-segment assignments into tracks.
///
/// Node segment indices are positions in `per_segment_clusters`. A cluster
/// unmatched in segment `t+1` starts a new track; a track unmatched at `t+1`
/// is frozen and never re-joined by raw association (only Kalman coasting
/// bridges gaps). With `max_link_cost` set, assignments above the limit are
/// rejected and treated as unmatched on both sides. Track ids follow creation
/// order.
pub fn build_tracks<T: Real>(
    per_segment_clusters: &[Vec<Cluster<T>>],
    max_link_cost: Option<T>,
) -> Vec<Track<T>> {
    let mut tracks: Vec<Track<T>> = Vec::new();
    let mut tails: Vec<usize> = Vec::new(); // track id per cluster of the previous segment

    for (t, clusters) in per_segment_clusters.iter().enumerate() {
        let mut new_tails = vec![usize::MAX; clusters.len()];
        if t > 0 {
            let prev = &per_segment_clusters[t - 1];
            let cm = cost_matrix(prev, clusters);
            let assignment =
                hungarian_assign(&cm).expect("centroid distances are finite and non-negative");
            for &(i, j) in &assignment.pairs {
                if max_link_cost.map_or(false, |limit| cm.get(i, j) > limit) {
                    continue;
                }
                let id = tails[i];
                tracks[id].push_node(TrackNode {
                    segment_index: t,
                    cluster: clusters[j].clone(),
                });
                new_tails[j] = id;
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

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
        Point3::new(x, y, z)
    }

    fn cluster_at(label: usize, seg: usize, at: Point3<f64>) -> Cluster<f64> {
        Cluster::new(label, seg, vec![at], vec![0])
    }

    fn matrix(rows: Vec<Vec<f64>>) -> CostMatrix<f64> {
        let cols = rows.first().map_or(0, Vec::len);
        CostMatrix::from_rows(rows, cols).unwrap()
    }

    #[test]
    fn centroid_midpoint() {
        let c = centroid(&[p(0.0, 0.0, 0.0), p(2.0, 2.0, 2.0)]).unwrap();
        assert_eq!(c, p(1.0, 1.0, 1.0));
    }

    #[test]
    fn centroid_single_point_is_identity() {
        let c = centroid(&[p(4.0, -1.0, 0.5)]).unwrap();
        assert_eq!(c, p(4.0, -1.0, 0.5));
    }

    #[test]
    fn centroid_of_basis_vectors() {
        let c = centroid(&[p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0), p(0.0, 0.0, 1.0)]).unwrap();
        assert_relative_eq!(c.x, 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.y, 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.z, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn centroid_of_empty_errors() {
        assert!(centroid::<f64>(&[]).is_err());
    }

    #[test]
    fn cost_matrix_zero_diagonal() {
        let a = vec![
            cluster_at(0, 0, p(1.0, 2.0, 3.0)),
            cluster_at(1, 0, p(-1.0, 0.0, 4.0)),
        ];
        let cm = cost_matrix(&a, &a);
        assert_eq!(cm.get(0, 0), 0.0);
        assert_eq!(cm.get(1, 1), 0.0);
        assert!(cm.get(0, 1) > 0.0);
    }

    #[test]
    fn cost_matrix_empty_rows() {
        let b = vec![cluster_at(0, 1, p(0.0, 0.0, 0.0))];
        let cm = cost_matrix::<f64>(&[], &b);
        assert_eq!(cm.rows(), 0);
        assert_eq!(cm.cols(), 1);
    }

    #[test]
    fn cost_matrix_is_euclidean() {
        let a = vec![cluster_at(0, 0, p(0.0, 0.0, 0.0))];
        let b = vec![cluster_at(0, 1, p(3.0, 4.0, 0.0))];
        assert_relative_eq!(cost_matrix(&a, &b).get(0, 0), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn hungarian_two_by_two() {
        // Both permutations enumerated: 1+1 = 2 beats 2+2 = 4.
        let asn = hungarian_assign(&matrix(vec![vec![1.0, 2.0], vec![2.0, 1.0]])).unwrap();
        assert_eq!(asn.pairs, vec![(0, 0), (1, 1)]);
        assert!(asn.unmatched_rows.is_empty());
        assert!(asn.unmatched_cols.is_empty());
    }

    #[test]
    fn hungarian_single_entry() {
        let asn = hungarian_assign(&matrix(vec![vec![5.0]])).unwrap();
        assert_eq!(asn.pairs, vec![(0, 0)]);
    }

    #[test]
    fn hungarian_ties_break_lexicographically() {
        let asn = hungarian_assign(&matrix(vec![vec![1.0, 1.0], vec![1.0, 1.0]])).unwrap();
        assert_eq!(asn.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn hungarian_rejects_nan_and_negative() {
        assert!(hungarian_assign(&matrix(vec![vec![f64::NAN]])).is_err());
        assert!(hungarian_assign(&matrix(vec![vec![-0.5]])).is_err());
    }

    #[test]
    fn hungarian_wide_matrix_leaves_columns_unmatched() {
        let asn = hungarian_assign(&matrix(vec![vec![7.0, 1.0, 3.0]])).unwrap();
        assert_eq!(asn.pairs, vec![(0, 1)]);
        assert_eq!(asn.unmatched_cols, vec![0, 2]);
    }

    #[test]
    fn hungarian_tall_matrix_leaves_rows_unmatched() {
        let asn = hungarian_assign(&matrix(vec![vec![5.0], vec![1.0], vec![2.0]])).unwrap();
        assert_eq!(asn.pairs, vec![(1, 0)]);
        assert_eq!(asn.unmatched_rows, vec![0, 2]);
    }

    #[test]
    fn hungarian_empty_matrix() {
        let cm = CostMatrix::<f64>::from_rows(Vec::new(), 3).unwrap();
        let asn = hungarian_assign(&cm).unwrap();
        assert!(asn.pairs.is_empty());
        assert_eq!(asn.unmatched_cols, vec![0, 1, 2]);
    }

    #[test]
    fn single_cluster_chain_forms_one_track() {
        let per_segment: Vec<Vec<Cluster<f64>>> = (0..5)
            .map(|t| vec![cluster_at(0, t, p(t as f64 * 0.1, 0.0, 0.0))])
            .collect();
        let tracks = build_tracks(&per_segment, None);
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].nodes.len(), 5);
        let segs: Vec<_> = tracks[0].nodes.iter().map(|n| n.segment_index).collect();
        assert_eq!(segs, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn unmatched_cluster_starts_new_track() {
        // Segment 0 has {A}; segment 1 has {B, C} with A closer to B.
        let per_segment = vec![
            vec![cluster_at(0, 0, p(0.0, 0.0, 0.0))],
            vec![
                cluster_at(0, 1, p(0.1, 0.0, 0.0)), // B
                cluster_at(1, 1, p(3.0, 0.0, 0.0)), // C
            ],
        ];
        let tracks = build_tracks(&per_segment, None);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].nodes.len(), 2);
        assert_eq!(tracks[0].nodes[1].cluster.centroid, p(0.1, 0.0, 0.0));
        assert_eq!(tracks[1].nodes.len(), 1);
        assert_eq!(tracks[1].first_segment(), 1);
    }

    #[test]
    fn max_link_cost_rejects_expensive_links() {
        let per_segment = vec![
            vec![cluster_at(0, 0, p(0.0, 0.0, 0.0))],
            vec![cluster_at(0, 1, p(10.0, 0.0, 0.0))],
        ];
        let unlimited = build_tracks(&per_segment, None);
        assert_eq!(unlimited.len(), 1);
        let gated = build_tracks(&per_segment, Some(2.0));
        assert_eq!(gated.len(), 2, "rejected link must freeze and spawn");
        assert_eq!(gated[0].nodes.len(), 1);
        assert_eq!(gated[1].first_segment(), 1);
    }

    #[test]
    fn frozen_tracks_are_not_rejoined() {
        // One cluster, then none, then one again: the original track froze at
        // segment 0, so the segment-2 cluster spawns a fresh track.
        let per_segment = vec![
            vec![cluster_at(0, 0, p(0.0, 0.0, 0.0))],
            vec![],
            vec![cluster_at(0, 2, p(0.1, 0.0, 0.0))],
        ];
        let tracks = build_tracks(&per_segment, None);
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].nodes.len(), 1);
        assert_eq!(tracks[1].first_segment(), 2);
    }
}
