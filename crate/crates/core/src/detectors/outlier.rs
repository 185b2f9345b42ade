//! Point outlier detectors: k-sigma, static thresholds, 1-D DBSCAN and LOF.

use crate::error::{Error, Result};
use crate::series::AnomalyMask;
use crate::stats;

use super::DetectionResult;

/// Flags `|x - mean| > k * std`. A constant window flags nothing.
pub fn ksigma_detect(values: &[f64], k: f64) -> Result<DetectionResult> {
    if !(k > 0.0) {
        return Err(Error::param("k", "must be positive"));
    }
    let (m, s) = stats::mean_std(values);
    let mut mask = AnomalyMask::empty(values.len());
    let trace: Vec<f64> = values
        .iter()
        .map(|v| if s > 0.0 { (v - m).abs() / s } else { 0.0 })
        .collect();
    if s > 0.0 {
        for (i, v) in values.iter().enumerate() {
            if (v - m).abs() > k * s {
                mask.set(i);
            }
        }
    }
    Ok(DetectionResult::new(mask, Some(trace)))
}

/// Flags values strictly above `upper` or strictly below `lower`.
pub fn threshold_detect(values: &[f64], upper: f64, lower: f64) -> Result<DetectionResult> {
    if lower > upper {
        return Err(Error::param("lower", format!("{lower} exceeds upper {upper}")));
    }
    let flags = values.iter().map(|&v| v > upper || v < lower).collect();
    Ok(DetectionResult::new(AnomalyMask::from_flags(flags), None))
}

/// 1-D DBSCAN over raw values with `|xi - xj|` as the distance. Noise points
/// (neither core nor within `eps` of a core point) are flagged.
pub fn dbscan_detect(values: &[f64], eps: f64, min_pts: usize) -> Result<DetectionResult> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    if min_pts == 0 {
        return Err(Error::param("min_pts", "must be at least 1"));
    }
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // neighbour counts (self included) via a sliding range over the sorted values
    let mut core = vec![false; n];
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..n {
        while sorted[i] - sorted[lo] > eps {
            lo += 1;
        }
        if hi < i {
            hi = i;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[i] <= eps {
            hi += 1;
        }
        core[i] = hi - lo + 1 >= min_pts;
    }

    let mut mask = AnomalyMask::empty(n);
    let mut last_core: Option<f64> = None;
    let mut next_core = vec![None; n];
    let mut upcoming = None;
    for i in (0..n).rev() {
        if core[i] {
            upcoming = Some(sorted[i]);
        }
        next_core[i] = upcoming;
    }
    for i in 0..n {
        if core[i] {
            last_core = Some(sorted[i]);
            continue;
        }
        let near_prev = last_core.is_some_and(|c| sorted[i] - c <= eps);
        let near_next = next_core[i].is_some_and(|c| c - sorted[i] <= eps);
        if !near_prev && !near_next {
            mask.set(order[i]);
        }
    }
    Ok(DetectionResult::new(mask, None))
}

/// Classical local outlier factor over the 1-D values. The k-distance
/// neighbourhood includes ties, as in the original definition.
pub fn lof_scores(values: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if k >= n {
        return Err(Error::param("k", format!("{k} must be below window length {n}")));
    }
    let mut kdist = vec![0.0; n];
    let mut neighbours: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((values[i] - values[j]).abs(), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        kdist[i] = d[k - 1].0;
        neighbours.push(d.iter().take_while(|(dist, _)| *dist <= kdist[i]).map(|&(_, j)| j).collect());
    }
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let reach: f64 = neighbours[i]
                .iter()
                .map(|&o| kdist[o].max((values[i] - values[o]).abs()))
                .sum::<f64>()
                / neighbours[i].len() as f64;
            // duplicates give zero reach distance
            1.0 / (reach + 1e-10)
        })
        .collect();
    Ok((0..n)
        .map(|i| neighbours[i].iter().map(|&o| lrd[o]).sum::<f64>() / neighbours[i].len() as f64 / lrd[i])
        .collect())
}

/// Flags points whose LOF exceeds `lof_threshold`.
pub fn lof_detect(values: &[f64], k: usize, lof_threshold: f64) -> Result<DetectionResult> {
    let scores = lof_scores(values, k)?;
    let flags = scores.iter().map(|&s| s > lof_threshold).collect();
    Ok(DetectionResult::new(AnomalyMask::from_flags(flags), Some(scores)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spike20() -> Vec<f64> {
        let mut v = vec![0.0; 19];
        v.push(10.0);
        v
    }

    #[test]
    fn ksigma_constant_window() {
        assert_eq!(ksigma_detect(&[4.0; 30], 0.5).unwrap().mask.count(), 0);
    }

    #[test]
    fn ksigma_single_spike() {
        let v = spike20();
        // independent: mean 0.5, population std sqrt(100/20 - 0.25)
        let std = (100.0f64 / 20.0 - 0.25).sqrt();
        assert!((std - 2.1794).abs() < 1e-3);
        assert!(9.5 > 3.0 * std && 9.5 < 5.0 * std);
        assert_eq!(ksigma_detect(&v, 3.0).unwrap().mask.flagged_indices(), vec![19]);
        assert_eq!(ksigma_detect(&v, 5.0).unwrap().mask.count(), 0);
    }

    #[test]
    fn threshold_rules() {
        let r = threshold_detect(&[0.0, 7.0, 1.0], 5.0, -5.0).unwrap();
        assert_eq!(r.mask.flagged_indices(), vec![1]);
        assert_eq!(threshold_detect(&[1.0, -1.0], 5.0, -5.0).unwrap().mask.count(), 0);
        // boundary is inclusive-pass
        let r = threshold_detect(&[0.0, 0.0, 1.0], 0.0, 0.0).unwrap();
        assert_eq!(r.mask.flagged_indices(), vec![2]);
        assert!(threshold_detect(&[0.0], -1.0, 1.0).is_err());
    }

    /// O(n^2) DBSCAN labelling used as an oracle.
    fn dbscan_brute(values: &[f64], eps: f64, min_pts: usize) -> Vec<bool> {
        let n = values.len();
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| (values[i] - values[j]).abs() <= eps).count() >= min_pts)
            .collect();
        (0..n)
            .map(|i| !core[i] && !(0..n).any(|j| core[j] && (values[i] - values[j]).abs() <= eps))
            .collect()
    }

    #[test]
    fn dbscan_examples() {
        assert_eq!(dbscan_detect(&[3.3; 10], 0.1, 3).unwrap().mask.count(), 0);
        let mut v = vec![0.0; 9];
        v.push(100.0);
        let r = dbscan_detect(&v, 1.0, 3).unwrap();
        assert_eq!(r.mask.flags(), &dbscan_brute(&v, 1.0, 3)[..]);
        assert_eq!(r.mask.flagged_indices(), vec![9]);
        assert_eq!(dbscan_detect(&v, 150.0, 3).unwrap().mask.count(), 0);
    }

    /// LOF straight from the definition, without any shortcuts.
    fn lof_brute(values: &[f64], k: usize) -> Vec<f64> {
        let n = values.len();
        let d = |a: usize, b: usize| (values[a] - values[b]).abs();
        let kdist = |p: usize| {
            let mut ds: Vec<f64> = (0..n).filter(|&q| q != p).map(|q| d(p, q)).collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        };
        let nbrs = |p: usize| -> Vec<usize> { (0..n).filter(|&q| q != p && d(p, q) <= kdist(p)).collect() };
        let lrd = |p: usize| {
            let nb = nbrs(p);
            let s: f64 = nb.iter().map(|&o| kdist(o).max(d(p, o))).sum();
            1.0 / (s / nb.len() as f64 + 1e-10)
        };
        (0..n)
            .map(|p| {
                let nb = nbrs(p);
                nb.iter().map(|&o| lrd(o)).sum::<f64>() / nb.len() as f64 / lrd(p)
            })
            .collect()
    }

    #[test]
    fn lof_uniform_spacing_is_near_one() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let got = lof_scores(&v, 2).unwrap();
        let want = lof_brute(&v, 2);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(got.iter().all(|&s| (s - 1.0).abs() < 0.5));
        assert_eq!(lof_detect(&v, 2, 1.5).unwrap().mask.count(), 0);
    }

    #[test]
    fn lof_far_point_flagged() {
        let mut v: Vec<f64> = (0..9).map(|i| i as f64).collect();
        v.push(8.0 + 50.0);
        let got = lof_scores(&v, 3).unwrap();
        let want = lof_brute(&v, 3);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
        assert_eq!(lof_detect(&v, 3, 1.5).unwrap().mask.flagged_indices(), vec![9]);
    }

    #[test]
    fn lof_k_must_be_below_length() {
        assert!(lof_detect(&[1.0, 2.0, 3.0], 3, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn ksigma_affine_invariant(
            values in proptest::collection::vec(-50.0f64..50.0, 5..80),
            a in 0.1f64..20.0,
            b in -100.0f64..100.0,
            k in 1.0f64..4.0,
        ) {
            let scaled: Vec<f64> = values.iter().map(|v| a * v + b).collect();
            let m1 = ksigma_detect(&values, k).unwrap();
            let m2 = ksigma_detect(&scaled, k).unwrap();
            // skip points sitting numerically on the threshold
            let trace = m1.score_trace.unwrap();
            for i in 0..values.len() {
                if (trace[i] - k).abs() > 1e-9 {
                    prop_assert_eq!(m1.mask.flags()[i], m2.mask.flags()[i]);
                }
            }
        }

        #[test]
        fn ksigma_monotone_in_k(values in proptest::collection::vec(-50.0f64..50.0, 2..80), k1 in 0.5f64..4.0, dk in 0.0f64..3.0) {
            let lo = ksigma_detect(&values, k1).unwrap().mask;
            let hi = ksigma_detect(&values, k1 + dk).unwrap().mask;
            for i in 0..values.len() {
                prop_assert!(!hi.flags()[i] || lo.flags()[i]);
            }
        }

        #[test]
        fn dbscan_matches_brute_force(
            values in proptest::collection::vec(-10.0f64..10.0, 1..60),
            eps in 0.05f64..3.0,
            min_pts in 1usize..8,
        ) {
            let got = dbscan_detect(&values, eps, min_pts).unwrap();
            prop_assert_eq!(got.mask.flags(), &dbscan_brute(&values, eps, min_pts)[..]);
            if min_pts == 1 {
                prop_assert_eq!(got.mask.count(), 0);
            }
        }

        #[test]
        fn lof_matches_brute_force(values in proptest::collection::vec(-10.0f64..10.0, 4..25), k in 1usize..4) {
            let got = lof_scores(&values, k).unwrap();
            let want = lof_brute(&values, k);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
    }
}
