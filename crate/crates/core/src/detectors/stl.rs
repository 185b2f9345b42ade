//! Classical moving-average decomposition with residual thresholding.
//!
//! This is the moving-average + per-phase-mean simplification of STL rather
//! than the full loess procedure; the residual test is the same.

use crate::error::{Error, Result};
use crate::series::AnomalyMask;
use crate::stats;

use super::DetectionResult;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
}

/// Centred moving average of width `period` (a 2 x period average for even
/// periods). The ends are filled with the nearest defined value.
fn centered_moving_average(values: &[f64], period: usize) -> Vec<f64> {
    let n = values.len();
    let half = period / 2;
    let mut trend = vec![f64::NAN; n];
    if period == 1 {
        return values.to_vec();
    }
    for i in half..n.saturating_sub(half) {
        trend[i] = if period % 2 == 1 {
            values[i - half..=i + half].iter().sum::<f64>() / period as f64
        } else {
            let inner: f64 = values[i + 1 - half..i + half].iter().sum();
            (inner + 0.5 * (values[i - half] + values[i + half])) / period as f64
        };
    }
    let first = trend[half];
    let last = trend[n - 1 - half];
    trend[..half].fill(first);
    trend[n - half..].fill(last);
    trend
}

pub fn decompose(values: &[f64], period: usize) -> Result<Decomposition> {
    if period == 0 {
        return Err(Error::param("period", "must be positive"));
    }
    if 2 * period > values.len() {
        return Err(Error::param(
            "period",
            format!("2 * {period} exceeds window length {}", values.len()),
        ));
    }
    let trend = centered_moving_average(values, period);
    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (i, (v, t)) in values.iter().zip(&trend).enumerate() {
        sums[i % period] += v - t;
        counts[i % period] += 1;
    }
    let phase: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let offset = stats::mean(&phase);
    let seasonal: Vec<f64> = (0..values.len()).map(|i| phase[i % period] - offset).collect();
    let residual = values
        .iter()
        .zip(&trend)
        .zip(&seasonal)
        .map(|((v, t), s)| v - t - s)
        .collect();
    Ok(Decomposition {
        trend,
        seasonal,
        residual,
    })
}

/// Flags `|residual| > residual_k * std(residual)`. Residuals that are zero up
/// to rounding flag nothing.
pub fn stl_detect(values: &[f64], period: usize, residual_k: f64) -> Result<DetectionResult> {
    if !(residual_k > 0.0) {
        return Err(Error::param("residual_k", "must be positive"));
    }
    let d = decompose(values, period)?;
    let spread = stats::std_dev(&d.residual);
    let floor = 1e-9 * (1.0 + stats::std_dev(values));
    let mut mask = AnomalyMask::empty(values.len());
    if spread > floor {
        for (i, r) in d.residual.iter().enumerate() {
            if r.abs() > residual_k * spread {
                mask.set(i);
            }
        }
    }
    Ok(DetectionResult::new(mask, Some(d.residual)))
}
