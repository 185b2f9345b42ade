//! Majority-voting ensemble over a fixed detector pool.

use serde::{Deserialize, Serialize};

use crate::detectors::{run_detector, DetectionResult, DetectorConfig, DetectorContext, DetectorKind};
use crate::error::{Error, Result};
use crate::series::{AnomalyMask, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteRule {
    /// More than half of the detectors agree.
    Absolute,
    /// The point gathers the window's highest (nonzero) agreement.
    Relative,
    /// The flagging detectors carry more than half the total weight.
    Weighted,
}

impl VoteRule {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "absolute" => Some(VoteRule::Absolute),
            "relative" => Some(VoteRule::Relative),
            "weighted" => Some(VoteRule::Weighted),
            _ => None,
        }
    }
}

/// A voting configuration, recorded verbatim in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VotePool {
    pub configs: Vec<DetectorConfig>,
    pub rule: VoteRule,
    pub weights: Option<Vec<f64>>,
}

impl Default for VotePool {
    fn default() -> Self {
        Self::standard()
    }
}

impl VotePool {
    /// One representative configuration per detector family, absolute rule.
    pub fn standard() -> Self {
        use DetectorKind::*;
        let c = |k, p: &[(&str, f64)]| DetectorConfig::new(k, p.iter().copied()).expect("valid pool config");
        VotePool {
            configs: vec![
                c(KSigma, &[("k", 3.0)]),
                c(DbscanOutlier, &[("eps", 0.5), ("min_pts", 5.0)]),
                c(CusumChangePoint, &[("h", 5.0), ("drift", 0.5)]),
                c(StlResidual, &[("period", 24.0), ("residual_k", 3.0)]),
                c(DtwShape, &[("radius", 5.0), ("dist_threshold", 2.0)]),
            ],
            rule: VoteRule::Absolute,
            weights: None,
        }
    }

    pub fn detect(&self, window: &Window, context: &DetectorContext) -> Result<DetectionResult> {
        vote_detect(window, &self.configs, self.rule, self.weights.as_deref(), context)
    }
}

pub fn vote_detect(
    window: &Window,
    configs: &[DetectorConfig],
    rule: VoteRule,
    weights: Option<&[f64]>,
    context: &DetectorContext,
) -> Result<DetectionResult> {
    if configs.is_empty() {
        return Err(Error::Empty("voting pool has no detectors".into()));
    }
    let weights: Vec<f64> = match (rule, weights) {
        (VoteRule::Weighted, None) => return Err(Error::param("weights", "the weighted rule needs weights")),
        (VoteRule::Weighted, Some(w)) => {
            if w.len() != configs.len() {
                return Err(Error::param(
                    "weights",
                    format!("{} weights for {} detectors", w.len(), configs.len()),
                ));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::param("weights", "must be nonnegative with a positive sum"));
            }
            w.to_vec()
        }
        _ => vec![1.0; configs.len()],
    };
    let n = window.len();
    let mut count = vec![0usize; n];
    let mut mass = vec![0.0; n];
    for (cfg, w) in configs.iter().zip(&weights) {
        let r = run_detector(cfg, window, context)?;
        for (i, &f) in r.mask.flags().iter().enumerate() {
            if f {
                count[i] += 1;
                mass[i] += w;
            }
        }
    }
    let total: f64 = weights.iter().sum();
    let top = count.iter().copied().max().unwrap_or(0);
    let flags = (0..n)
        .map(|i| match rule {
            VoteRule::Absolute => 2 * count[i] > configs.len(),
            VoteRule::Relative => count[i] > 0 && count[i] >= top,
            VoteRule::Weighted => 2.0 * mass[i] > total,
        })
        .collect();
    Ok(DetectionResult {
        mask: AnomalyMask::from_flags(flags),
        score_trace: Some(count.iter().map(|&c| c as f64).collect()),
    })
}
