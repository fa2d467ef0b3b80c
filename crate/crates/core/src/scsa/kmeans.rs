//! K-Means with k-means++ seeding and empty-cluster repair.

use rand::Rng;

use crate::numerics::Matrix;

pub const MAX_ITERATIONS: usize = 100;
pub const RELATIVE_TOLERANCE: f64 = 1e-6;

/// Assignment of points to clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPartition {
    pub assignments: Vec<usize>,
    pub num_clusters: usize,
    /// `num_clusters × dim` means of the final assignment.
    pub centroids: Matrix,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_trace: Vec<f64>,
}

impl ClusterPartition {
    /// Member indices of every cluster, ascending within each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }
}

/// Number of clusters for `n` points at a fixed nominal cluster size.
pub fn cluster_count(n: usize, cluster_size: usize) -> usize {
    n.div_ceil(cluster_size.max(1))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Clusters the rows of `points` into `k` nonempty groups.
///
/// Panics if `k` is zero or exceeds the number of points.
pub fn kmeans<R: Rng + ?Sized>(points: &Matrix, k: usize, rng: &mut R) -> ClusterPartition {
    let n = points.rows();
    assert!(k >= 1 && k <= n, "kmeans needs 1 ≤ k ≤ n (k={k}, n={n})");

    if k == 1 {
        let assignments = vec![0; n];
        let centroids = means(points, &assignments, 1);
        let obj = objective(points, &assignments, &centroids);
        return ClusterPartition {
            assignments,
            num_clusters: 1,
            centroids,
            objective_trace: vec![obj],
        };
    }

    let mut centroids = plus_plus_seeds(points, k, rng);
    let mut assignments = vec![0; n];
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (best, dist) = nearest(points.row(i), &centroids);
            assignments[i] = best;
            dists[i] = dist;
        }
        repair_empty(points, &mut assignments, &mut dists, &mut centroids);
        let obj: f64 = dists.iter().sum();
        let converged = trace
            .last()
            .is_some_and(|&prev| prev - obj <= RELATIVE_TOLERANCE * prev.abs());
        trace.push(obj);
        if converged || obj == 0.0 {
            break;
        }
        centroids = means(points, &assignments, k);
    }
    let centroids = means(points, &assignments, k);
    ClusterPartition {
        assignments,
        num_clusters: k,
        centroids,
        objective_trace: trace,
    }
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds<R: Rng + ?Sized>(points: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in closest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, best) in closest.iter_mut().enumerate() {
            *best = best.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

/// Gives every empty cluster the point currently farthest from its own
/// centroid, taken from a cluster that keeps at least one member.
fn repair_empty(points: &Matrix, assignments: &mut [usize], dists: &mut [f64], centroids: &mut Matrix) {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let donor = (0..assignments.len())
            .filter(|&i| sizes[assignments[i]] > 1)
            .fold(None::<usize>, |best, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            })
            .expect("k ≤ n guarantees a cluster with two members");
        sizes[assignments[donor]] -= 1;
        assignments[donor] = c;
        sizes[c] = 1;
        dists[donor] = 0.0;
        centroids.row_mut(c).copy_from_slice(points.row(donor));
    }
}

fn means(points: &Matrix, assignments: &[usize], k: usize) -> Matrix {
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, &v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(c).iter_mut().for_each(|s| *s /= count as f64);
        }
    }
    sums
}

/// Within-cluster sum of squared distances.
pub fn objective(points: &Matrix, assignments: &[usize], centroids: &Matrix) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(points.row(i), centroids.row(a)))
        .sum()
}
