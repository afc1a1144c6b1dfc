//! Weighted k-means with k-means++ seeding.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::scalar::Scalar;

const JITTER: f64 = 1e-4;

fn sq_dist<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum()
}

fn sample<R: Rng, T: Scalar>(weights: &[T], rng: &mut R) -> Option<usize> {
    let w: Vec<f64> = weights.iter().map(|w| w.as_f64()).collect();
    WeightedIndex::new(&w).ok().map(|d| d.sample(rng))
}

/// Merges identical rows, summing their weights. Keeps first-occurrence order.
fn dedup<T: Scalar>(points: &Array2<T>, weights: &[T]) -> (Array2<T>, Vec<T>) {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut merged = Vec::new();
    for (row, &w) in points.outer_iter().zip(weights) {
        let key: Vec<u64> = row.iter().map(|v| v.as_f64().to_bits()).collect();
        match seen.get(&key) {
            Some(&i) => merged[i] += w,
            None => {
                seen.insert(key, rows.len());
                rows.push(row.to_owned());
                merged.push(w);
            }
        }
    }
    let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
    (
        ndarray::stack(Axis(0), &views).expect("rows share a dimension"),
        merged,
    )
}

/// Returns `k` centroids (rows) of the weighted points (rows of `points`).
///
/// With fewer than `k` distinct points, the distinct points are reused
/// cyclically with a small uniform jitter.
pub(crate) fn weighted_kmeans<T: Scalar, R: Rng>(
    points: &Array2<T>,
    weights: &[T],
    k: usize,
    max_iters: usize,
    rng: &mut R,
) -> Array2<T> {
    let (points, weights) = dedup(points, weights);
    let (n, d) = points.dim();

    if n <= k {
        let mut centroids = Array2::zeros((k, d));
        for c in 0..k {
            let mut row = centroids.row_mut(c);
            row.assign(&points.row(c % n));
            if c >= n {
                row.mapv_inplace(|v| v + T::of(rng.gen_range(-JITTER..JITTER)));
            }
        }
        return centroids;
    }

    // k-means++ seeding on weight * squared distance.
    let mut centroids = Array2::zeros((k, d));
    let first = sample(&weights, rng).unwrap_or(0);
    centroids.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<T> = points
        .outer_iter()
        .map(|p| sq_dist(p, centroids.row(0)))
        .collect();
    for c in 1..k {
        let scores: Vec<T> = nearest.iter().zip(&weights).map(|(d, w)| *d * *w).collect();
        let pick = sample(&scores, rng).unwrap_or(c % n);
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, centroids.row(c)));
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, p) in points.outer_iter().enumerate() {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (c, centroid) in centroids.outer_iter().enumerate() {
                let dist = sq_dist(p, centroid);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Array2::<T>::zeros((k, d));
        let mut mass = Array1::<T>::zeros(k);
        for (i, p) in points.outer_iter().enumerate() {
            let c = assignment[i];
            sums.row_mut(c).scaled_add(weights[i], &p);
            mass[c] += weights[i];
        }
        for c in 0..k {
            // Empty clusters keep their previous centroid.
            if mass[c] > T::zero() {
                let m = mass[c];
                centroids.row_mut(c).assign(&sums.row(c).mapv(|v| v / m));
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_cluster_is_weighted_mean() {
        let pts: Array2<f64> = array![[0.0, 0.0], [2.0, 0.0], [0.0, 4.0]];
        let w = [0.5, 0.25, 0.25];
        let c = weighted_kmeans(&pts, &w, 1, 50, &mut ChaCha8Rng::seed_from_u64(0));
        assert!((c[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((c[[0, 1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_distinct_points_jitters_copies() {
        let pts: Array2<f64> = array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]];
        let c = weighted_kmeans(&pts, &[1.0; 3], 4, 50, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(c.nrows(), 4);
        for row in c.outer_iter() {
            assert!((row[0] - 1.0).abs() <= 1e-4 && (row[1] - 2.0).abs() <= 1e-4);
        }
        assert_eq!(c.row(0).to_vec(), vec![1.0, 2.0]);
    }
}
