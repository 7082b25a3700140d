//! Reconstruction error measures.

use crate::error::{domain, mismatch, Result};

/// Mean over signals of `||est_k - truth_k||² / ||truth_k||²`.
pub fn nmse(estimate: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimate.is_empty()
        || estimate.len() != truth.len()
        || estimate.iter().zip(truth).any(|(a, b)| a.len() != b.len())
    {
        return Err(mismatch("estimate and truth differ in shape"));
    }
    let mut acc = 0.0;
    for (a, b) in estimate.iter().zip(truth) {
        let den: f64 = b.iter().map(|y| y * y).sum();
        if den == 0.0 {
            return Err(domain("nmse is undefined for an all-zero reference signal"));
        }
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        acc += num / den;
    }
    Ok(acc / truth.len() as f64)
}
