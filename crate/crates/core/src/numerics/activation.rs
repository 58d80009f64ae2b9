//! Output activations and losses. Scores are produced in `f64` from `f32`
//! logits so that normalization holds to double precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor used by both cross-entropy losses.
pub const PROB_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Softmax,
}

impl Activation {
    /// Sigmoid for exactly two output neurons, softmax above that.
    pub fn for_arity(output_neurons: usize) -> Option<Self> {
        match output_neurons {
            2 => Some(Activation::Sigmoid),
            n if n > 2 => Some(Activation::Softmax),
            _ => None,
        }
    }

    pub fn apply(self, logits: &[f32]) -> Vec<f64> {
        match self {
            Activation::Sigmoid => sigmoid(logits),
            Activation::Softmax => softmax(logits),
        }
    }

    /// Loss paired with this activation and its gradient with respect to the
    /// logits, for a sample whose true output index is `target`.
    pub fn loss_and_grad(self, logits: &[f32], target: usize) -> (f64, Vec<f32>) {
        let probs = self.apply(logits);
        let onehot = one_hot(logits.len(), target);
        match self {
            Activation::Softmax => {
                let loss = cross_entropy_unchecked(&probs, &onehot);
                let grad = if probs[target] < PROB_EPSILON {
                    vec![0.0; logits.len()]
                } else {
                    probs
                        .iter()
                        .zip(&onehot)
                        .map(|(p, t)| (p - t) as f32)
                        .collect()
                };
                (loss, grad)
            }
            Activation::Sigmoid => {
                let loss = binary_cross_entropy(&probs, &onehot);
                let n = logits.len() as f64;
                let grad = probs
                    .iter()
                    .zip(&onehot)
                    .map(|(&p, &t)| {
                        if (PROB_EPSILON..=1.0 - PROB_EPSILON).contains(&p) {
                            ((p - t) / n) as f32
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (loss, grad)
            }
        }
    }
}

pub fn one_hot(len: usize, index: usize) -> Vec<f64> {
    (0..len).map(|i| if i == index { 1.0 } else { 0.0 }).collect()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&z| (z as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(logits: &[f32]) -> Vec<f64> {
    logits.iter().map(|&z| sigmoid_scalar(z as f64)).collect()
}

fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-sum_i t_i ln(clamp(p_i, eps, 1))` for a one-hot `target`.
pub fn categorical_cross_entropy(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::Contract(format!(
            "prediction has {} entries, target {}",
            predicted.len(),
            target.len()
        )));
    }
    let ones = target.iter().filter(|&&t| t == 1.0).count();
    let zeros = target.iter().filter(|&&t| t == 0.0).count();
    if ones != 1 || ones + zeros != target.len() {
        return Err(Error::Contract(format!("target {target:?} is not one-hot")));
    }
    let sum: f64 = predicted.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "prediction sums to {sum}, expected 1"
        )));
    }
    Ok(cross_entropy_unchecked(predicted, target))
}

fn cross_entropy_unchecked(predicted: &[f64], target: &[f64]) -> f64 {
    let loss: f64 = predicted
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.clamp(PROB_EPSILON, 1.0).ln())
        .sum();
    // -0.0 for a perfect prediction
    loss.max(0.0)
}

/// Mean over neurons of `-[t ln p + (1-t) ln(1-p)]`, with `p` clamped to
/// `[eps, 1-eps]`.
pub fn binary_cross_entropy(predicted: &[f64], target: &[f64]) -> f64 {
    let n = predicted.len().max(1) as f64;
    predicted
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}
