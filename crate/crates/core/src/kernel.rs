//! Gaussian kernel weights on the normalized time axis.
//!
//! Weights are peak-normalized: `w_j = exp(-(t_j - t_e)^2 / (2 b^2))`, so a
//! timestamp at the estimation point gets weight 1. The usual density
//! prefactor is constant across observations and cancels in any weighted
//! least-squares loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWeights {
    pub est_point: f64,
    pub bandwidth: f64,
    pub weights: Vec<f64>,
    /// Sum of the weights: the effective amount of data used at `est_point`.
    pub n_util: f64,
}

#[inline]
pub fn gaussian_weight(t: f64, est_point: f64, bandwidth: f64) -> f64 {
    let d = t - est_point;
    (-(d * d) / (2.0 * bandwidth * bandwidth)).exp()
}

pub fn kernel_weights(est_point: f64, times: &[f64], bandwidth: f64) -> Result<KernelWeights> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if times.is_empty() {
        return Err(Error::invalid("no timestamps"));
    }
    let weights: Vec<f64> = times.iter().map(|&t| gaussian_weight(t, est_point, bandwidth)).collect();
    let n_util = weights.iter().sum();
    Ok(KernelWeights { est_point, bandwidth, weights, n_util })
}

pub fn effective_sample_size(w: &KernelWeights) -> f64 {
    w.weights.iter().sum()
}

/// `n` equally spaced estimation points on [0, 1] (a single point sits at 0.5).
pub fn equispaced_points(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}
