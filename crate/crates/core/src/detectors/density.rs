use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::AnomalyMask;
use crate::stats;

use super::DetectionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeMode {
    /// Extreme low density inside the window.
    Outlier,
    /// Second-half points that are unlikely under the first half.
    ChangePoint,
}

fn density_at(x: f64, sample: &[f64], bandwidth: f64) -> f64 {
    let norm = 1.0 / (sample.len() as f64 * bandwidth * (2.0 * PI).sqrt());
    sample
        .iter()
        .map(|s| {
            let u = (x - s) / bandwidth;
            (-0.5 * u * u).exp()
        })
        .sum::<f64>()
        * norm
}

/// Gaussian kernel density detector. A point is flagged when its density is
/// strictly below the `density_quantile` of the reference densities.
pub fn kde_detect(values: &[f64], bandwidth: f64, density_quantile: f64, mode: KdeMode) -> Result<DetectionResult> {
    if !(bandwidth > 0.0) {
        return Err(Error::param("bandwidth", "must be positive"));
    }
    if !(density_quantile > 0.0 && density_quantile < 1.0) {
        return Err(Error::param("density_quantile", "must lie in (0, 1)"));
    }
    let n = values.len();
    let mut mask = AnomalyMask::empty(n);
    match mode {
        KdeMode::Outlier => {
            let dens: Vec<f64> = values.iter().map(|&x| density_at(x, values, bandwidth)).collect();
            let cut = stats::quantile(&dens, density_quantile);
            for (i, &d) in dens.iter().enumerate() {
                if d < cut {
                    mask.set(i);
                }
            }
            Ok(DetectionResult::new(mask, Some(dens)))
        }
        KdeMode::ChangePoint => {
            let half = n / 2;
            if half == 0 {
                return Ok(DetectionResult::new(mask, Some(vec![0.0; n])));
            }
            let reference = &values[..half];
            let self_dens: Vec<f64> = reference.iter().map(|&x| density_at(x, reference, bandwidth)).collect();
            let cut = stats::quantile(&self_dens, density_quantile);
            let mut trace = self_dens;
            for (i, &x) in values.iter().enumerate().skip(half) {
                let d = density_at(x, reference, bandwidth);
                trace.push(d);
                if d < cut {
                    mask.set(i);
                }
            }
            Ok(DetectionResult::new(mask, Some(trace)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_values_flag_nothing() {
        let r = kde_detect(&[1.5; 40], 0.3, 0.05, KdeMode::Outlier).unwrap();
        assert_eq!(r.mask.count(), 0);
    }

    #[test]
    fn isolated_point_has_lowest_density() {
        let mut v = vec![0.0; 20];
        v.push(10.0);
        // direct computation: zeros share 20 kernels, the 10 only its own
        let h = 0.5;
        let k0 = 1.0 / (21.0 * h * (2.0 * PI).sqrt());
        let dens_zero = 20.0 * k0 + k0 * (-0.5f64 * 400.0).exp();
        let dens_ten = k0 + 20.0 * k0 * (-0.5f64 * 400.0).exp();
        assert!(dens_ten < dens_zero);
        let r = kde_detect(&v, h, 0.05, KdeMode::Outlier).unwrap();
        assert_eq!(r.mask.flagged_indices(), vec![20]);
        let trace = r.score_trace.unwrap();
        assert!((trace[0] - dens_zero).abs() < 1e-15);
        assert!((trace[20] - dens_ten).abs() < 1e-15);
    }

    #[test]
    fn level_shift_in_changepoint_mode() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let v: Vec<f64> = (0..200)
            .map(|i| if i < 100 { 0.0 } else { 5.0 } + noise.sample(&mut rng))
            .collect();
        let r = kde_detect(&v, 0.3, 0.05, KdeMode::ChangePoint).unwrap();
        assert!(r.mask.flags()[..100].iter().all(|f| !f));
        let second = r.mask.flags()[100..].iter().filter(|&&f| f).count();
        assert!(second >= 80, "only {second} of 100 flagged");
    }
}
