use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Moment estimates for Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps_hat: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(num_params: usize) -> Self {
        AdamState {
            first_moment: vec![T::zero(); num_params],
            second_moment: vec![T::zero(); num_params],
            step_count: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps_hat: T::of(1e-8),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::invalid(format!(
            "adam shapes disagree: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    state.step_count += 1;
    let t = i32::try_from(state.step_count).unwrap_or(i32::MAX);
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        let m = b1 * state.first_moment[i] + (T::one() - b1) * g;
        let v = b2 * state.second_moment[i] + (T::one() - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.eps_hat);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = vec![0.0f64];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.1).unwrap();
        assert!((p[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((p[0] + 0.09999999).abs() < 1e-8);
    }

    #[test]
    fn step_opposes_gradient_sign() {
        let grads = [3.0, -0.5, 1e-3, -7.0];
        let mut p = vec![0.0; 4];
        let mut s = AdamState::new(4);
        adam_step(&mut p, &grads, &mut s, 0.1).unwrap();
        for (x, g) in p.iter().zip(grads) {
            assert!(x * g < 0.0);
        }
        assert!(s.second_moment.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::<f64>::new(2);
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut s, 0.1).is_err());
    }
}
