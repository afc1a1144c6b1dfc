//! Entropic optimal transport between discrete measures.
//!
//! The solver works in the log domain so that small regularization strengths do
//! not underflow, and finishes with a rounding pass that projects the iterate onto
//! the transport polytope, so the returned plan satisfies both marginals to
//! floating-point precision even when the iteration budget runs out.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T>(Array1<T>);

impl<T: Scalar> Histogram<T> {
    pub fn new(weights: Array1<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("histogram must have at least one entry"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::invalid(
                "histogram weights must be finite and non-negative",
            ));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::mass_tolerance(weights.len()) {
            return Err(Error::invalid(format!(
                "histogram weights sum to {total}, expected 1"
            )));
        }
        Ok(Histogram(weights))
    }

    pub fn from_vec(weights: Vec<T>) -> Result<Self> {
        Self::new(Array1::from(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("uniform histogram needs at least one atom"));
        }
        Ok(Histogram(Array1::from_elem(n, T::one() / T::of_usize(n))))
    }

    pub fn weights(&self) -> &Array1<T> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Pairwise ground costs; finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T>(Array2<T>);

impl<T: Scalar> CostMatrix<T> {
    pub fn new(entries: Array2<T>) -> Result<Self> {
        if entries.iter().any(|c| c.is_nan()) {
            return Err(Error::invalid("cost matrix contains NaN"));
        }
        if entries.iter().any(|c| !c.is_finite() || *c < T::zero()) {
            return Err(Error::invalid(
                "cost entries must be finite and non-negative",
            ));
        }
        Ok(CostMatrix(entries))
    }

    pub fn entries(&self) -> &Array2<T> {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn transposed(&self) -> Self {
        CostMatrix(self.0.t().to_owned())
    }

    pub fn mean(&self) -> T {
        let n = self.0.len();
        if n == 0 {
            return T::zero();
        }
        self.0.iter().copied().sum::<T>() / T::of_usize(n)
    }
}

/// A coupling between two histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan<T>(Array2<T>);

impl<T: Scalar> TransportPlan<T> {
    pub fn entries(&self) -> &Array2<T> {
        &self.0
    }

    pub fn into_entries(self) -> Array2<T> {
        self.0
    }

    pub fn row_sums(&self) -> Array1<T> {
        self.0.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<T> {
        self.0.sum_axis(Axis(0))
    }

    /// Largest absolute deviation of any row or column sum from the given marginals.
    pub fn max_marginal_violation(&self, source: &Histogram<T>, target: &Histogram<T>) -> T {
        let rows = self
            .row_sums()
            .iter()
            .zip(source.weights())
            .map(|(r, a)| (*r - *a).abs())
            .fold(T::zero(), T::max);
        let cols = self
            .col_sums()
            .iter()
            .zip(target.weights())
            .map(|(c, b)| (*c - *b).abs())
            .fold(T::zero(), T::max);
        rows.max(cols)
    }
}

/// Entropic regularization strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epsilon {
    /// Multiple of the mean cost entry of each instance.
    Relative(f64),
    /// Fixed value in cost units.
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    pub epsilon: Epsilon,
    pub max_iters: usize,
    /// Stop once the L1 violation of the row marginal falls below this.
    pub tolerance: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: Epsilon::Relative(0.1),
            max_iters: 200,
            tolerance: 1e-6,
        }
    }
}

impl SinkhornConfig {
    pub fn relative(factor: f64) -> Self {
        SinkhornConfig {
            epsilon: Epsilon::Relative(factor),
            ..Default::default()
        }
    }

    pub fn absolute(value: f64) -> Self {
        SinkhornConfig {
            epsilon: Epsilon::Absolute(value),
            ..Default::default()
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let eps = match self.epsilon {
            Epsilon::Relative(v) | Epsilon::Absolute(v) => v,
        };
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {eps}"
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornResult<T> {
    /// Sharp transport cost `<plan, cost>`, entropy excluded.
    pub distance: T,
    /// Entropic objective `<plan, cost> + epsilon * KL(plan | source x target)`.
    /// Its derivative with respect to the cost matrix is the plan.
    pub regularized_cost: T,
    pub plan: TransportPlan<T>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Regularization strength actually used for this instance.
    pub epsilon: T,
    /// `KL(plan | source x target)`.
    pub entropy_kl: T,
    /// d(epsilon)/d(cost[i][j]); nonzero only for relative epsilon.
    epsilon_sensitivity: T,
}

/// Squared Euclidean distances between the columns of two `d x n` and `d x m` point sets.
pub fn ground_cost_matrix<T: Scalar>(
    source: ArrayView2<T>,
    target: ArrayView2<T>,
) -> Result<CostMatrix<T>> {
    if source.nrows() != target.nrows() {
        return Err(Error::invalid(format!(
            "point dimension mismatch: {} vs {}",
            source.nrows(),
            target.nrows()
        )));
    }
    if source.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("point coordinates must be finite"));
    }
    let src = source.t().as_standard_layout().into_owned();
    let tgt = target.t().as_standard_layout().into_owned();
    let mut cost = Array2::zeros((src.nrows(), tgt.nrows()));
    for (i, x) in src.outer_iter().enumerate() {
        for (j, y) in tgt.outer_iter().enumerate() {
            let mut acc = T::zero();
            for (a, b) in x.iter().zip(y.iter()) {
                let diff = *a - *b;
                acc += diff * diff;
            }
            cost[[i, j]] = acc;
        }
    }
    CostMatrix::new(cost)
}

fn log_sum_exp<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let total: T = values.map(|v| (v - max).exp()).sum();
    max + total.ln()
}

/// Log-domain Sinkhorn with final marginal rounding.
pub fn sinkhorn<T: Scalar>(
    cost: &CostMatrix<T>,
    source: &Histogram<T>,
    target: &Histogram<T>,
    config: &SinkhornConfig,
) -> Result<SinkhornResult<T>> {
    config.validate()?;
    let (n, m) = cost.shape();
    if n != source.len() || m != target.len() {
        return Err(Error::invalid(format!(
            "cost is {n}x{m} but histograms have lengths {} and {}",
            source.len(),
            target.len()
        )));
    }

    let mean = cost.mean();
    let (epsilon, epsilon_sensitivity) = match config.epsilon {
        Epsilon::Absolute(v) => (T::of(v), T::zero()),
        // An all-zero cost has no scale; any epsilon yields the product coupling.
        Epsilon::Relative(f) if mean <= T::zero() => (T::of(f), T::zero()),
        Epsilon::Relative(f) => (T::of(f) * mean, T::of(f) / T::of_usize(n * m)),
    };

    // Zero-weight atoms carry no mass; solve on the support only.
    let rows: Vec<usize> = (0..n)
        .filter(|&i| source.weights()[i] > T::zero())
        .collect();
    let cols: Vec<usize> = (0..m)
        .filter(|&j| target.weights()[j] > T::zero())
        .collect();
    let a: Vec<T> = rows.iter().map(|&i| source.weights()[i]).collect();
    let b: Vec<T> = cols.iter().map(|&j| target.weights()[j]).collect();
    let log_a: Vec<T> = a.iter().map(|v| v.ln()).collect();
    let log_b: Vec<T> = b.iter().map(|v| v.ln()).collect();
    let (rn, cn) = (rows.len(), cols.len());

    let scaled = Array2::from_shape_fn((rn, cn), |(i, j)| {
        cost.entries()[[rows[i], cols[j]]] / epsilon
    });

    // Potentials are kept divided by epsilon.
    let mut f = vec![T::zero(); rn];
    let mut g = vec![T::zero(); cn];
    let row_lse = |g: &[T], out: &mut Vec<T>| {
        out.clear();
        for i in 0..rn {
            let row = scaled.row(i);
            out.push(log_sum_exp(
                g.iter().zip(row.iter()).map(|(gj, k)| *gj - *k),
            ));
        }
    };

    let tol = T::of(config.tolerance);
    let mut lse_rows = Vec::with_capacity(rn);
    row_lse(&g, &mut lse_rows);
    let mut converged = false;
    let mut iterations_used = 0;
    for it in 1..=config.max_iters {
        for i in 0..rn {
            f[i] = log_a[i] - lse_rows[i];
        }
        for j in 0..cn {
            let col = scaled.column(j);
            let lse = log_sum_exp(f.iter().zip(col.iter()).map(|(fi, k)| *fi - *k));
            g[j] = log_b[j] - lse;
        }
        row_lse(&g, &mut lse_rows);
        let violation: T = (0..rn)
            .map(|i| ((f[i] + lse_rows[i]).exp() - a[i]).abs())
            .sum();
        iterations_used = it;
        if violation <= tol {
            converged = true;
            break;
        }
    }

    let mut plan = Array2::from_shape_fn((rn, cn), |(i, j)| (f[i] + g[j] - scaled[[i, j]]).exp());
    round_to_marginals(&mut plan, &a, &b);

    let mut entropy_kl = T::zero();
    for ((i, j), p) in plan.indexed_iter() {
        if *p > T::zero() {
            entropy_kl += *p * (p.ln() - log_a[i] - log_b[j]);
        }
    }
    // KL is non-negative; clamp rounding noise.
    let entropy_kl = entropy_kl.max(T::zero());

    let mut full = Array2::zeros((n, m));
    for (ci, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            full[[i, j]] = plan[[ci, cj]];
        }
    }
    let distance: T = full
        .iter()
        .zip(cost.entries().iter())
        .map(|(p, c)| *p * *c)
        .sum();

    Ok(SinkhornResult {
        distance,
        regularized_cost: distance + epsilon * entropy_kl,
        plan: TransportPlan(full),
        iterations_used,
        converged,
        epsilon,
        entropy_kl,
        epsilon_sensitivity,
    })
}

/// Projects a positive matrix onto the set of couplings with marginals `a` and `b`.
fn round_to_marginals<T: Scalar>(plan: &mut Array2<T>, a: &[T], b: &[T]) {
    let rows = plan.sum_axis(Axis(1));
    for (i, mut row) in plan.outer_iter_mut().enumerate() {
        if rows[i] > a[i] {
            let s = a[i] / rows[i];
            row.mapv_inplace(|v| v * s);
        }
    }
    let cols = plan.sum_axis(Axis(0));
    for (j, mut col) in plan.axis_iter_mut(Axis(1)).enumerate() {
        if cols[j] > b[j] {
            let s = b[j] / cols[j];
            col.mapv_inplace(|v| v * s);
        }
    }
    let err_r: Vec<T> = plan
        .sum_axis(Axis(1))
        .iter()
        .zip(a)
        .map(|(r, a)| (*a - *r).max(T::zero()))
        .collect();
    let err_c: Vec<T> = plan
        .sum_axis(Axis(0))
        .iter()
        .zip(b)
        .map(|(c, b)| (*b - *c).max(T::zero()))
        .collect();
    let mass: T = err_r.iter().copied().sum();
    if mass > T::zero() {
        for ((i, j), v) in plan.indexed_iter_mut() {
            *v += err_r[i] * err_c[j] / mass;
        }
    }
}

/// Exact optimal transport cost between two uniform measures of equal size,
/// by enumerating every permutation. Only intended as a reference for tiny
/// instances.
pub fn exact_ot_uniform<T: Scalar>(cost: &CostMatrix<T>) -> Result<T> {
    let (n, m) = cost.shape();
    if n != m {
        return Err(Error::invalid(format!("cost must be square, got {n}x{m}")));
    }
    if n == 0 {
        return Err(Error::invalid("empty cost matrix"));
    }
    if n > 8 {
        return Err(Error::invalid(format!(
            "refusing to enumerate {n}! permutations (limit n <= 8)"
        )));
    }
    let c = cost.entries();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = T::infinity();
    permute(&mut perm, 0, &mut |p| {
        let total: T = p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
        best = best.min(total);
    });
    Ok(best / T::of_usize(n))
}

fn permute(perm: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

/// Derivative of a Sinkhorn value with respect to the cost matrix.
#[derive(Debug, Clone)]
pub struct CostGradient<T> {
    pub gradient: Array2<T>,
    pub warning: Option<String>,
}

/// Gradient of `regularized_cost` with respect to each cost entry.
///
/// By the envelope theorem this is the optimal plan. With a relative epsilon the
/// regularizer itself moves with the cost, which adds `KL * d(epsilon)/d(cost)`
/// uniformly to every entry.
pub fn sinkhorn_cost_gradient<T: Scalar>(result: &SinkhornResult<T>) -> CostGradient<T> {
    let shift = result.entropy_kl * result.epsilon_sensitivity;
    let gradient = result.plan.entries().mapv(|p| p + shift);
    let warning = (!result.converged).then(|| {
        format!(
            "sinkhorn stopped after {} iterations without reaching tolerance",
            result.iterations_used
        )
    });
    CostGradient { gradient, warning }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tight(eps: Epsilon) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: eps,
            max_iters: 100_000,
            tolerance: 1e-13,
        }
    }

    fn random_cost(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CostMatrix<f64> {
        CostMatrix::new(Array2::from_shape_fn((n, m), |_| rng.gen::<f64>())).unwrap()
    }

    #[test]
    fn ground_cost_trivial_pairs() {
        let s = array![[0.0], [0.0]];
        assert_eq!(
            ground_cost_matrix(s.view(), s.view()).unwrap().entries()[[0, 0]],
            0.0
        );
        let t = array![[3.0], [4.0]];
        assert_eq!(
            ground_cost_matrix(s.view(), t.view()).unwrap().entries()[[0, 0]],
            25.0
        );
    }

    #[test]
    fn ground_cost_matches_naive_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 300;
        let s: Array2<f64> = Array2::from_shape_fn((d, 3), |_| rng.gen_range(-1.0..1.0));
        let t: Array2<f64> = Array2::from_shape_fn((d, 2), |_| rng.gen_range(-1.0..1.0));
        let cost = ground_cost_matrix(s.view(), t.view()).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut oracle = 0.0f64;
                for k in 0..d {
                    oracle += (s[[k, i]] - t[[k, j]]).powi(2);
                }
                let got = cost.entries()[[i, j]];
                assert!((got - oracle).abs() <= 1e-10 * oracle);
            }
        }
    }

    #[test]
    fn ground_cost_dimension_mismatch() {
        let s = Array2::<f64>::zeros((2, 1));
        let t = Array2::<f64>::zeros((3, 1));
        assert!(matches!(
            ground_cost_matrix(s.view(), t.view()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_cost_gives_zero_distance() {
        let cost = CostMatrix::new(Array2::<f64>::zeros((3, 2))).unwrap();
        let a = Histogram::from_vec(vec![0.2, 0.3, 0.5]).unwrap();
        let b = Histogram::from_vec(vec![0.6, 0.4]).unwrap();
        let r = sinkhorn(&cost, &a, &b, &SinkhornConfig::default()).unwrap();
        assert_eq!(r.distance, 0.0);
        assert!(r.plan.max_marginal_violation(&a, &b) < 1e-12);
    }

    #[test]
    fn single_atom_forced_coupling() {
        let cost = CostMatrix::new(array![[2.5f64]]).unwrap();
        let h = Histogram::uniform(1).unwrap();
        let r = sinkhorn(&cost, &h, &h, &SinkhornConfig::default()).unwrap();
        assert_eq!(r.plan.entries(), &array![[1.0]]);
        assert_eq!(r.distance, 2.5);
        assert!(r.converged);
        let g = sinkhorn_cost_gradient(&r);
        assert!((g.gradient[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nan_cost_is_rejected() {
        assert!(CostMatrix::new(array![[f64::NAN, 1.0]]).is_err());
        assert!(CostMatrix::new(array![[-1.0f64]]).is_err());
    }

    #[test]
    fn histogram_validation() {
        assert!(Histogram::from_vec(vec![0.5, 0.4]).is_err());
        assert!(Histogram::from_vec(vec![1.5, -0.5]).is_err());
        assert!(Histogram::<f64>::from_vec(vec![]).is_err());
        assert!(Histogram::from_vec(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(SinkhornConfig::absolute(0.0).validate().is_err());
        assert!(SinkhornConfig::default()
            .with_max_iters(0)
            .validate()
            .is_err());
        assert!(SinkhornConfig::default()
            .with_tolerance(-1.0)
            .validate()
            .is_err());
        assert!(SinkhornConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_weight_atoms_are_stripped() {
        let cost = CostMatrix::new(array![[1.0f64, 4.0], [2.0, 0.5], [9.0, 9.0]]).unwrap();
        let a = Histogram::from_vec(vec![0.5, 0.5, 0.0]).unwrap();
        let b = Histogram::from_vec(vec![0.5, 0.5]).unwrap();
        let r = sinkhorn(&cost, &a, &b, &SinkhornConfig::default()).unwrap();
        assert!(r.plan.entries().row(2).iter().all(|v| *v == 0.0));
        assert!(r.distance.is_finite());
        assert!(r.plan.max_marginal_violation(&a, &b) < 1e-12);
    }

    #[test]
    fn exact_oracle_examples() {
        let c = |m: Array2<f64>| CostMatrix::new(m).unwrap();
        assert_eq!(exact_ot_uniform(&c(array![[5.0]])).unwrap(), 5.0);
        assert_eq!(
            exact_ot_uniform(&c(array![[0.0, 1.0], [1.0, 0.0]])).unwrap(),
            0.0
        );
        let three = c(array![[1.0, 2.0, 3.0], [2.0, 1.0, 3.0], [3.0, 2.0, 1.0]]);
        assert_eq!(exact_ot_uniform(&three).unwrap(), 1.0);
        assert!(exact_ot_uniform(&c(Array2::zeros((9, 9)))).is_err());
        assert!(exact_ot_uniform(&c(Array2::zeros((2, 3)))).is_err());
    }

    #[test]
    fn sinkhorn_close_to_exact_at_small_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cost = random_cost(&mut rng, 4, 4);
        let h = Histogram::uniform(4).unwrap();
        let cfg = SinkhornConfig::relative(0.001).with_max_iters(100_000);
        let r = sinkhorn(&cost, &h, &h, &cfg).unwrap();
        let exact = exact_ot_uniform(&cost).unwrap();
        assert!(
            (r.distance - exact).abs() <= 0.02 * exact,
            "{} vs {exact}",
            r.distance
        );
    }

    #[test]
    fn plan_is_regularized_cost_gradient() {
        // Central differences of the entropic objective, re-solving per perturbation.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cost = random_cost(&mut rng, 3, 3);
        let a = Histogram::from_vec(vec![0.2, 0.5, 0.3]).unwrap();
        let b = Histogram::uniform(3).unwrap();
        for cfg in [
            tight(Epsilon::Absolute(0.1 * cost.mean())),
            tight(Epsilon::Relative(0.1)),
            tight(Epsilon::Relative(0.5)),
        ] {
            let r = sinkhorn(&cost, &a, &b, &cfg).unwrap();
            let g = sinkhorn_cost_gradient(&r);
            assert!(g.warning.is_none());
            let h = 1e-4;
            for i in 0..3 {
                for j in 0..3 {
                    let mut up = cost.entries().clone();
                    up[[i, j]] += h;
                    let mut dn = cost.entries().clone();
                    dn[[i, j]] -= h;
                    let fu = sinkhorn(&CostMatrix::new(up).unwrap(), &a, &b, &cfg)
                        .unwrap()
                        .regularized_cost;
                    let fd = sinkhorn(&CostMatrix::new(dn).unwrap(), &a, &b, &cfg)
                        .unwrap()
                        .regularized_cost;
                    let fdiff = (fu - fd) / (2.0 * h);
                    assert!(
                        (fdiff - g.gradient[[i, j]]).abs() < 1e-3,
                        "{cfg:?} ({i},{j}): fd {fdiff} vs {}",
                        g.gradient[[i, j]]
                    );
                }
            }
        }
    }

    #[test]
    fn absolute_epsilon_gradient_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cost = random_cost(&mut rng, 4, 3);
        let a = Histogram::uniform(4).unwrap();
        let b = Histogram::from_vec(vec![0.1, 0.6, 0.3]).unwrap();
        let r = sinkhorn(&cost, &a, &b, &SinkhornConfig::absolute(0.05)).unwrap();
        let total: f64 = sinkhorn_cost_gradient(&r).gradient.sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_converged_gradient_carries_warning() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cost = random_cost(&mut rng, 5, 5);
        let h = Histogram::uniform(5).unwrap();
        let cfg = SinkhornConfig::relative(0.001).with_max_iters(1);
        let r = sinkhorn(&cost, &h, &h, &cfg).unwrap();
        assert!(!r.converged);
        assert!(r.plan.max_marginal_violation(&h, &h) < 1e-12);
        assert!(sinkhorn_cost_gradient(&r).warning.is_some());
    }

    #[test]
    fn f32_solver_runs() {
        let cost = CostMatrix::new(array![[0.0f32, 1.0], [1.0, 0.0]]).unwrap();
        let h = Histogram::<f32>::uniform(2).unwrap();
        let r = sinkhorn(&cost, &h, &h, &SinkhornConfig::relative(0.05)).unwrap();
        assert!(r.distance < 1e-3);
    }

    #[test]
    fn error_to_exact_shrinks_with_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let cost = random_cost(&mut rng, n, n);
            let h = Histogram::uniform(n).unwrap();
            let exact = exact_ot_uniform(&cost).unwrap();
            let gaps: Vec<f64> = [1.0, 0.1, 0.01]
                .iter()
                .map(|&f| {
                    let r = sinkhorn(&cost, &h, &h, &tight(Epsilon::Relative(f))).unwrap();
                    (r.distance - exact).abs()
                })
                .collect();
            assert!(
                gaps[1] <= gaps[0] + 1e-9 && gaps[2] <= gaps[1] + 1e-9,
                "{gaps:?}"
            );
        }
    }

    fn histogram_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.05f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn marginals_hold_and_distance_recomputes(
            (n, m) in (1usize..7, 1usize..7),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost = random_cost(&mut rng, n, m);
            let raw_a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let raw_b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sa: f64 = raw_a.iter().sum();
            let sb: f64 = raw_b.iter().sum();
            let a = Histogram::from_vec(raw_a.iter().map(|x| x / sa).collect()).unwrap();
            let b = Histogram::from_vec(raw_b.iter().map(|x| x / sb).collect()).unwrap();
            let cfg = SinkhornConfig::default();
            let r = sinkhorn(&cost, &a, &b, &cfg).unwrap();
            prop_assert!(r.plan.max_marginal_violation(&a, &b) <= cfg.tolerance);
            prop_assert!(r.plan.entries().iter().all(|p| *p >= 0.0));
            let recomputed: f64 = (r.plan.entries() * cost.entries()).sum();
            prop_assert!((recomputed - r.distance).abs() <= 1e-9);
            prop_assert!(r.distance >= 0.0);
            prop_assert!(r.regularized_cost >= r.distance);
        }

        #[test]
        fn symmetric_under_transpose(
            w in (2usize..6).prop_flat_map(|n| (histogram_strategy(n), histogram_strategy(n + 1))),
            seed in any::<u64>(),
        ) {
            let (wa, wb) = w;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost = random_cost(&mut rng, wa.len(), wb.len());
            let a = Histogram::from_vec(wa).unwrap();
            let b = Histogram::from_vec(wb).unwrap();
            let cfg = tight(Epsilon::Relative(0.1));
            let fwd = sinkhorn(&cost, &a, &b, &cfg).unwrap();
            let bwd = sinkhorn(&cost.transposed(), &b, &a, &cfg).unwrap();
            prop_assert!((fwd.distance - bwd.distance).abs() <= 1e-9);
        }

        #[test]
        fn identical_measures_have_zero_distance(
            (n, seed) in (1usize..7, any::<u64>()),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points = Array2::from_shape_fn((3, n), |_| rng.gen_range(-2.0..2.0));
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let w = Histogram::from_vec(raw.iter().map(|x| x / s).collect()).unwrap();
            let cost = ground_cost_matrix(points.view(), points.view()).unwrap();
            // Regularization well below the closest pair keeps the entropic plan diagonal.
            let min_off = cost
                .entries()
                .indexed_iter()
                .filter(|((i, j), _)| i != j)
                .map(|(_, c)| *c)
                .fold(f64::INFINITY, f64::min);
            let eps = if min_off.is_finite() { min_off / 50.0 } else { 1.0 };
            let cfg = SinkhornConfig::absolute(eps).with_max_iters(10_000);
            let r = sinkhorn(&cost, &w, &w, &cfg).unwrap();
            prop_assert!(r.distance <= 1e-6, "distance {}", r.distance);
        }
    }
}
