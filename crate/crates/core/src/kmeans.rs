//! Seeded Lloyd's k-means used for semantic document identifiers.
//!
//! Initialization is farthest-point: the first centre is a seeded random
//! point, each further centre is the point farthest from its nearest chosen
//! centre. Assignment ties go to the lower cluster index.

use rand::Rng as _;

use crate::seed;

pub const DEFAULT_MAX_ITERATIONS: usize = 20;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster index for every input point.
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn farthest_point_init(points: &[&[f64]], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(seed);
    let first = rng.random_range(0..points.len());
    let mut centroids = vec![points[first].to_vec()];
    let mut min_d: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let (idx, &d) = min_d
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| {
                if *cur.1 > *best.1 {
                    cur
                } else {
                    best
                }
            });
        if d <= 0.0 {
            // Fewer distinct points than requested clusters.
            break;
        }
        let c = points[idx].to_vec();
        for (m, p) in min_d.iter_mut().zip(points) {
            *m = m.min(squared_distance(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Cluster `points` into at most `k` groups. Returns fewer centroids only
/// when there are fewer distinct points than `k`.
pub fn kmeans(points: &[&[f64]], k: usize, max_iterations: usize, seed: u64) -> KMeans {
    assert!(!points.is_empty() && k >= 1);
    let dim = points[0].len();
    let mut centroids = farthest_point_init(points, k.min(points.len()), seed);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for (c, (sum, count)) in sums.into_iter().zip(counts).enumerate() {
            if count > 0 {
                centroids[c] = sum.into_iter().map(|s| s / count as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    KMeans {
        centroids,
        assignments,
        iterations,
    }
}
