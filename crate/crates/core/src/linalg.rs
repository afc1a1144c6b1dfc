//! Small dense helpers: symmetric eigendecomposition and 2-D PCA.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (descending) and unit eigenvectors (columns) of a symmetric
/// matrix, by cyclic Jacobi rotations.
pub fn symmetric_eigen<T: Scalar>(matrix: &Array2<T>) -> Result<(Array1<T>, Array2<T>)> {
    let (n, m) = matrix.dim();
    if n != m {
        return Err(Error::invalid(format!("eigen of a {n}x{m} matrix")));
    }
    let mut a = matrix.clone();
    let mut v = Array2::<T>::eye(n);
    let two = T::of(2.0);
    let scale: T = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
    let threshold = T::epsilon() * scale.max(T::min_positive_value());

    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<T>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap().then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).to_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = col.iter().copied().fold(
            T::zero(),
            |acc, x| if x.abs() > acc.abs() { x } else { acc },
        );
        if pivot < T::zero() {
            col.mapv_inplace(|x| -x);
        }
        vectors.column_mut(dst).assign(&col);
    }
    Ok((values, vectors))
}

/// Projects the rows of `points` onto their first two principal components.
/// Returns the `n x 2` coordinates and the numerical rank found (0, 1 or 2);
/// missing components are zero.
pub fn pca_2d<T: Scalar>(points: &Array2<T>) -> Result<(Array2<T>, usize)> {
    let (n, d) = points.dim();
    if n == 0 || d == 0 {
        return Err(Error::invalid("PCA of an empty point set"));
    }
    let mean = points.mean_axis(Axis(0)).expect("non-empty");
    let centered = points - &mean.insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / T::of_usize(n);
    let (values, vectors) = symmetric_eigen(&cov)?;
    let top = values[0].max(T::zero());
    let cutoff = T::of(1e-12) * top.max(T::min_positive_value());
    let rank = values.iter().take(2).filter(|&&l| l > cutoff).count();
    let mut coords = Array2::zeros((n, 2));
    for c in 0..rank {
        coords
            .column_mut(c)
            .assign(&centered.dot(&vectors.column(c)));
    }
    Ok((coords, rank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use ndarray::array;
    use proptest::prelude::*;

    fn symmetric(n: usize, seed: &[f64]) -> Array2<f64> {
        let mut m = Array2::zeros((n, n));
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                m[[i, j]] = seed[k % seed.len()] * (1.0 + k as f64 * 0.1);
                m[[j, i]] = m[[i, j]];
                k += 1;
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_reference_eigenvalues(n in 1usize..7, seed in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let m = symmetric(n, &seed);
            let (values, vectors) = symmetric_eigen(&m).unwrap();
            let reference = DMatrix::from_fn(n, n, |i, j| m[[i, j]]).symmetric_eigen();
            let mut expected: Vec<f64> = reference.eigenvalues.iter().copied().collect();
            expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (a, b) in values.iter().zip(&expected) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
            }
            // A v = lambda v
            let av = m.dot(&vectors);
            for c in 0..n {
                for r in 0..n {
                    prop_assert!((av[[r, c]] - values[c] * vectors[[r, c]]).abs() < 1e-8 * (1.0 + values[c].abs()));
                }
            }
        }
    }

    #[test]
    fn axis_aligned_cloud() {
        let pts: Array2<f64> = array![[-3.0, 0.0], [3.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let (coords, rank) = pca_2d(&pts).unwrap();
        assert_eq!(rank, 2);
        for (row, pt) in coords.outer_iter().zip(pts.outer_iter()) {
            assert!((row[0].abs() - pt[0].abs()).abs() < 1e-12);
            assert!((row[1].abs() - pt[1].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_clouds() {
        let line: Array2<f64> = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let (coords, rank) = pca_2d(&line).unwrap();
        assert_eq!(rank, 1);
        assert!(coords.column(1).iter().all(|&v| v == 0.0));
        assert!(((coords[[2, 0]] - coords[[0, 0]]).abs() - 2.0 * 2f64.sqrt()).abs() < 1e-12);

        let same: Array2<f64> = array![[1.0, 2.0], [1.0, 2.0]];
        let (coords, rank) = pca_2d(&same).unwrap();
        assert_eq!(rank, 0);
        assert!(coords.iter().all(|&v| v == 0.0));
    }
}
