use crate::error::{Error, Result};
use crate::series::{zscore, AnomalyMask};

use super::DetectionResult;

/// Sakoe-Chiba banded DTW with squared point cost. Cells with `|i - j| > radius`
/// are unreachable; equal lengths are required.
pub fn dtw_distance(a: &[f64], b: &[f64], radius: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n == 0 {
        return Ok(0.0);
    }
    // two rolling rows over the full width; out-of-band cells stay infinite
    let mut prev = vec![f64::INFINITY; n + 1];
    let mut cur = vec![f64::INFINITY; n + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let lo = i.saturating_sub(radius).max(1);
        let hi = (i + radius).min(n);
        for j in lo..=hi {
            let d = a[i - 1] - b[j - 1];
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = d * d + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[n])
}

/// Shape test against one reference: both sides are z-scored and the whole
/// window is flagged when `distance / length > dist_threshold`.
pub fn dtw_detect(values: &[f64], reference: &[f64], radius: usize, dist_threshold: f64) -> Result<DetectionResult> {
    dtw_detect_any(values, &[reference], radius, dist_threshold)
}

/// Like [`dtw_detect`] but against the closest of several references. With no
/// reference there is nothing to compare against and nothing is flagged.
pub fn dtw_detect_any(values: &[f64], references: &[&[f64]], radius: usize, dist_threshold: f64) -> Result<DetectionResult> {
    if radius == 0 {
        return Err(Error::param("radius", "must be positive"));
    }
    if !(dist_threshold > 0.0) {
        return Err(Error::param("dist_threshold", "must be positive"));
    }
    let n = values.len();
    if references.is_empty() || n == 0 {
        return Ok(DetectionResult::new(AnomalyMask::empty(n), None));
    }
    let w = zscore(values);
    let mut best = f64::INFINITY;
    for r in references {
        best = best.min(dtw_distance(&w, &zscore(r), radius)?);
    }
    let per_point = best / n as f64;
    let mask = if per_point > dist_threshold {
        AnomalyMask::full(n)
    } else {
        AnomalyMask::empty(n)
    };
    Ok(DetectionResult::new(mask, Some(vec![per_point; n])))
}
