//! Reconstruction quality against ground truth on the full grid.

use serde::{Deserialize, Serialize};

use crate::predictive::{canonical_sum, DrawPredictions};
use crate::{Error, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub step: usize,
    pub mse: f64,
    pub nlpd: f64,
}

fn check_lengths(expected: usize, actual: usize) -> Result<()> {
    if expected == 0 || expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Mean squared error of the predictive mean.
pub fn mse(mean: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), mean.len())?;
    Ok(mean.iter().zip(truth).map(|(m, f)| (m - f).powi(2)).sum::<f64>() / truth.len() as f64)
}

/// Negative log predictive density per grid point: each ensemble member
/// contributes `N(f_i | m_ij, v_ij)` with `v_ij` its latent variance plus its
/// noise variance, and the members are mixed with equal weight.
pub fn nlpd(preds: &DrawPredictions, truth: &[f64]) -> Result<f64> {
    check_lengths(truth.len(), preds.n_points)?;
    let n = preds.n_draws;
    if n == 0 {
        return Err(Error::Model("NLPD needs at least one posterior draw".into()));
    }
    let mut logs = vec![0.0; n];
    let mut total = Vec::with_capacity(truth.len());
    for (i, f) in truth.iter().enumerate() {
        let means = preds.point_means(i);
        for (j, l) in logs.iter_mut().enumerate() {
            let v = preds.predictive_var(i, j);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Model(format!("predictive variance {v} at point {i}, draw {j}")));
            }
            *l = -HALF_LOG_2PI - 0.5 * v.ln() - 0.5 * (f - means[j]).powi(2) / v;
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut shifted: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let lse = max + (canonical_sum(&mut shifted) / n as f64).ln();
        total.push(-lse);
    }
    Ok(canonical_sum(&mut total) / truth.len() as f64)
}
