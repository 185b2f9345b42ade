use crate::error::{Error, Result};
use crate::series::{AnomalyMask, CONSTANT_STD};
use crate::stats;

use super::DetectionResult;

/// Robustly centred, noise-scaled values.
///
/// The scale is the MAD of first differences divided by sqrt(2), which a level
/// shift barely moves; when it vanishes the population standard deviation is
/// used instead. The centre is a skipped median: points further than 2.5
/// scales from the current centre are dropped and the median retaken, so a
/// shifted segment covering a minority of the window does not drag it.
fn standardize(values: &[f64]) -> Vec<f64> {
    let diffs: Vec<f64> = values.windows(2).map(|p| (p[1] - p[0]).abs()).collect();
    let mut scale = 1.4826 * stats::median(&diffs) / std::f64::consts::SQRT_2;
    if scale < CONSTANT_STD {
        scale = stats::std_dev(values);
    }
    if scale < CONSTANT_STD {
        return vec![0.0; values.len()];
    }
    let mut center = stats::median(values);
    for _ in 0..3 {
        let kept: Vec<f64> = values.iter().copied().filter(|v| (v - center).abs() <= 2.5 * scale).collect();
        if kept.is_empty() {
            break;
        }
        center = stats::median(&kept);
    }
    values.iter().map(|v| (v - center) / scale).collect()
}

/// Two-sided CUSUM:
/// `S+ = max(0, S+ + z - drift)`, `S- = max(0, S- - z - drift)`.
///
/// When an accumulator exceeds `h` the run of points since it last sat at zero
/// is flagged and that accumulator restarts from zero. The trace holds
/// `max(S+, S-)` before any restart.
pub fn cusum_detect(values: &[f64], h: f64, drift: f64) -> Result<DetectionResult> {
    if !(h > 0.0) {
        return Err(Error::param("h", "must be positive"));
    }
    if !(drift >= 0.0) {
        return Err(Error::param("drift", "must be nonnegative"));
    }
    let z = standardize(values);
    let mut mask = AnomalyMask::empty(values.len());
    let mut trace = Vec::with_capacity(values.len());
    let (mut up, mut down) = (0.0f64, 0.0f64);
    let (mut up_start, mut down_start) = (0usize, 0usize);
    for (i, &zi) in z.iter().enumerate() {
        up = (up + zi - drift).max(0.0);
        down = (down - zi - drift).max(0.0);
        trace.push(up.max(down));
        if up == 0.0 {
            up_start = i + 1;
        } else if up > h {
            (up_start..=i).for_each(|j| mask.set(j));
            up = 0.0;
            up_start = i + 1;
        }
        if down == 0.0 {
            down_start = i + 1;
        } else if down > h {
            (down_start..=i).for_each(|j| mask.set(j));
            down = 0.0;
            down_start = i + 1;
        }
    }
    Ok(DetectionResult::new(mask, Some(trace)))
}
