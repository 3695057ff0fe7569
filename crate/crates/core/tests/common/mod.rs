//! Shared oracles for the integration and acceptance suites. These stay
//! independent of the library's implementation paths: the DBSCAN reference
//! clusters cores by flood fill and attaches borders by minimum cluster id,
//! and the assignment oracle enumerates injections outright.

use radarpipe::association::CostMatrix;
use radarpipe::types::Point3;

/// Naive O(n²) DBSCAN reference under the weighted metric.
///
/// Core points are found by direct neighbor counting (self included,
/// `distance <= eps`), clusters are connected components of the core-core
/// reachability graph, and every border point joins the lowest-id cluster
/// among the cores that reach it, which is exactly the first-created one.
/// Labels are renumbered by first appearance.
pub fn reference_dbscan(
    points: &[Point3<f64>],
    eps: f64,
    min_samples: usize,
    alpha: f64,
) -> Vec<i64> {
    let n = points.len();
    let eps_sq = eps * eps;
    let near = |a: &Point3<f64>, b: &Point3<f64>| {
        let dx = a.x - b.x;
        let dy = a.y - b.y;
        let dz = a.z - b.z;
        dx * dx + dy * dy + alpha * dz * dz <= eps_sq
    };

    let mut core = vec![false; n];
    for i in 0..n {
        let mut count = 0;
        for j in 0..n {
            if near(&points[i], &points[j]) {
                count += 1;
            }
        }
        core[i] = count >= min_samples;
    }

    let mut labels = vec![-1i64; n];
    let mut next = 0i64;
    for start in 0..n {
        if !core[start] || labels[start] != -1 {
            continue;
        }
        labels[start] = next;
        let mut stack = vec![start];
        while let Some(c) = stack.pop() {
            for j in 0..n {
                if core[j] && labels[j] == -1 && near(&points[c], &points[j]) {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }

    for j in 0..n {
        if core[j] {
            continue;
        }
        let mut best: Option<i64> = None;
        for k in 0..n {
            if core[k] && near(&points[j], &points[k]) {
                best = Some(best.map_or(labels[k], |b: i64| b.min(labels[k])));
            }
        }
        if let Some(label) = best {
            labels[j] = label;
        }
    }

    relabel_first_appearance(labels)
}

pub fn relabel_first_appearance(labels: Vec<i64>) -> Vec<i64> {
    let mut mapping: Vec<Option<i64>> = vec![None; labels.len()];
    let mut next = 0i64;
    labels
        .into_iter()
        .map(|l| {
            if l < 0 {
                return -1;
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

/// Exhaustive minimum over all matchings of size `min(rows, cols)`.
pub fn brute_force_min_total(costs: &CostMatrix<f64>) -> f64 {
    fn recurse(
        costs: &CostMatrix<f64>,
        row: usize,
        matched: usize,
        target: usize,
        used: &mut [bool],
        acc: f64,
        best: &mut f64,
    ) {
        if matched == target {
            if acc < *best {
                *best = acc;
            }
            return;
        }
        if row >= costs.rows() {
            return;
        }
        for j in 0..costs.cols() {
            if !used[j] {
                used[j] = true;
                recurse(
                    costs,
                    row + 1,
                    matched + 1,
                    target,
                    used,
                    acc + costs.get(row, j),
                    best,
                );
                used[j] = false;
            }
        }
        if costs.rows() - row - 1 >= target - matched {
            recurse(costs, row + 1, matched, target, used, acc, best);
        }
    }

    let target = costs.rows().min(costs.cols());
    let mut used = vec![false; costs.cols()];
    let mut best = if target == 0 { 0.0 } else { f64::INFINITY };
    recurse(costs, 0, 0, target, &mut used, 0.0, &mut best);
    best
}

/// Eigenvalues of a symmetric 4×4 matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(m: &[[f64; 4]; 4]) -> [f64; 4] {
    let mut a = *m;
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..4 {
            for q in p + 1..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    [a[0][0], a[1][1], a[2][2], a[3][3]]
}

/// Fraction of human-labeled slots among the non-zero points of a processed
/// frame.
pub fn human_fraction(
    processed: &radarpipe::Frame<f64>,
    origin_labels: &[u8],
) -> Option<(usize, usize)> {
    let mut human = 0usize;
    let mut total = 0usize;
    for (slot, p) in processed.points.iter().enumerate() {
        if *p != Point3::new(0.0, 0.0, 0.0) {
            total += 1;
            human += (origin_labels[slot] == radarpipe::ingest::LABEL_HUMAN) as usize;
        }
    }
    (total > 0).then_some((human, total))
}
