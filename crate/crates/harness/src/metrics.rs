//! Reconstruction quality measures.

pub use dcs_core::metrics::nmse;

use crate::error::{Error, Result};

/// `10 log10(peak^2 / MSE)`; an exact match gives `f64::INFINITY`.
pub fn psnr(estimate: &[f64], truth: &[f64], peak: f64) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(Error::Mismatch(format!(
            "psnr over {} and {} values",
            estimate.len(),
            truth.len()
        )));
    }
    let mse = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// CSV rendering; the exact-match sentinel prints as `inf`.
pub fn format_psnr(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}
