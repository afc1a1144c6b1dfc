//! Contrastive losses over the distances from one document to every class anchor.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Triplet,
    #[serde(rename = "infonce")]
    InfoNce,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "triplet" => Ok(LossKind::Triplet),
            "infonce" => Ok(LossKind::InfoNce),
            other => Err(format!(
                "unknown loss '{other}' (expected triplet or infonce)"
            )),
        }
    }
}

/// Sum over negative classes of `max(W_pos - W_neg + margin, 0)`.
pub fn triplet_loss<T: Scalar>(dists: &[T], label: usize, margin: T) -> T {
    let pos = dists[label];
    dists
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != label)
        .map(|(_, &neg)| (pos - neg + margin).max(T::zero()))
        .sum()
}

fn log_softmax_denominator<T: Scalar>(dists: &[T], tau: T) -> T {
    let max = dists
        .iter()
        .map(|&w| -w / tau)
        .fold(T::neg_infinity(), T::max);
    let total: T = dists.iter().map(|&w| (-w / tau - max).exp()).sum();
    max + total.ln()
}

/// Cross-entropy of the softmax over `-W / tau`, positive anchor included in
/// the denominator.
pub fn infonce_loss<T: Scalar>(dists: &[T], label: usize, tau: T) -> T {
    dists[label] / tau + log_softmax_denominator(dists, tau)
}

/// Loss value, its derivative with respect to each distance, and a per-document
/// diagnostic (active hinges for triplet, softmax entropy for InfoNCE).
#[derive(Debug, Clone)]
pub struct LossEval<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub diagnostic: T,
}

pub fn triplet_eval<T: Scalar>(dists: &[T], label: usize, margin: T) -> LossEval<T> {
    let mut grad = vec![T::zero(); dists.len()];
    let mut active = 0usize;
    for k in (0..dists.len()).filter(|&k| k != label) {
        if dists[label] - dists[k] + margin > T::zero() {
            active += 1;
            grad[label] += T::one();
            grad[k] -= T::one();
        }
    }
    LossEval {
        value: triplet_loss(dists, label, margin),
        grad,
        diagnostic: T::of_usize(active),
    }
}

pub fn infonce_eval<T: Scalar>(dists: &[T], label: usize, tau: T) -> LossEval<T> {
    let lse = log_softmax_denominator(dists, tau);
    let probs: Vec<T> = dists.iter().map(|&w| (-w / tau - lse).exp()).collect();
    let grad = probs
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let indicator = if k == label { T::one() } else { T::zero() };
            (indicator - s) / tau
        })
        .collect();
    let entropy = probs
        .iter()
        .filter(|&&s| s > T::zero())
        .map(|&s| -s * s.ln())
        .sum();
    LossEval {
        value: dists[label] / tau + lse,
        grad,
        diagnostic: entropy,
    }
}
