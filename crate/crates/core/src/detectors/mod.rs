//! The candidate detector pool. Every detector is a pure function from a window
//! of raw values (plus run-time parameters) to point-wise anomaly flags.

mod cusum;
mod density;
mod dtw;
mod grid;
mod outlier;
mod stl;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{AnomalyMask, Window};

pub use cusum::cusum_detect;
pub use density::{kde_detect, KdeMode};
pub use dtw::{dtw_detect, dtw_detect_any, dtw_distance};
pub use grid::{default_grid, full_grid, GridSet, ParamGrid};
pub use outlier::{dbscan_detect, ksigma_detect, lof_detect, lof_scores, threshold_detect};
pub use stl::{decompose, stl_detect, Decomposition};

/// Detector identities in registry order. The order is part of the model
/// format: do not reorder, only append.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[serde(rename = "ksigma")]
    KSigma,
    SimpleThreshold,
    DbscanOutlier,
    LofOutlier,
    KernelDensity,
    CusumChangePoint,
    StlResidual,
    DtwShape,
}

/// Bumped whenever the registry order or a parameter schema changes.
pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
    /// Whether `min` itself is allowed.
    pub min_inclusive: bool,
    pub integer: bool,
}

const fn real(name: &'static str, min: f64, max: f64, min_inclusive: bool) -> ParamSpec {
    ParamSpec {
        name,
        min,
        max,
        min_inclusive,
        integer: false,
    }
}

const fn int(name: &'static str, min: f64, max: f64) -> ParamSpec {
    ParamSpec {
        name,
        min,
        max,
        min_inclusive: true,
        integer: true,
    }
}

impl ParamSpec {
    fn check(&self, value: f64) -> std::result::Result<(), String> {
        if !value.is_finite() {
            return Err(format!("{} must be finite", self.name));
        }
        let low_ok = if self.min_inclusive {
            value >= self.min
        } else {
            value > self.min
        };
        if !low_ok || value > self.max {
            let open = if self.min_inclusive { '[' } else { '(' };
            return Err(format!(
                "{} = {value} outside {open}{}, {}]",
                self.name, self.min, self.max
            ));
        }
        if self.integer && value.fract() != 0.0 {
            return Err(format!("{} = {value} must be an integer", self.name));
        }
        Ok(())
    }
}

const BIG: f64 = 1e12;

impl DetectorKind {
    pub const ALL: [DetectorKind; 8] = [
        DetectorKind::KSigma,
        DetectorKind::SimpleThreshold,
        DetectorKind::DbscanOutlier,
        DetectorKind::LofOutlier,
        DetectorKind::KernelDensity,
        DetectorKind::CusumChangePoint,
        DetectorKind::StlResidual,
        DetectorKind::DtwShape,
    ];

    pub fn registry_index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::KSigma => "ksigma",
            DetectorKind::SimpleThreshold => "simple_threshold",
            DetectorKind::DbscanOutlier => "dbscan_outlier",
            DetectorKind::LofOutlier => "lof_outlier",
            DetectorKind::KernelDensity => "kernel_density",
            DetectorKind::CusumChangePoint => "cusum_change_point",
            DetectorKind::StlResidual => "stl_residual",
            DetectorKind::DtwShape => "dtw_shape",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Parameter schema in axis order.
    pub fn schema(self) -> &'static [ParamSpec] {
        const KSIGMA: &[ParamSpec] = &[real("k", 0.0, BIG, false)];
        const THRESHOLD: &[ParamSpec] = &[real("upper", -BIG, BIG, true), real("lower", -BIG, BIG, true)];
        const DBSCAN: &[ParamSpec] = &[real("eps", 0.0, BIG, false), int("min_pts", 1.0, 1e6)];
        const LOF: &[ParamSpec] = &[int("k", 1.0, 1e6), real("lof_threshold", 1.0, BIG, false)];
        const KDE: &[ParamSpec] = &[
            real("bandwidth", 0.0, BIG, false),
            real("density_quantile", 0.0, 1.0, false),
            int("mode", 0.0, 1.0),
        ];
        const CUSUM: &[ParamSpec] = &[real("h", 0.0, BIG, false), real("drift", 0.0, BIG, true)];
        const STL: &[ParamSpec] = &[real("residual_k", 0.0, BIG, false), int("period", 1.0, 1e6)];
        const DTW: &[ParamSpec] = &[int("radius", 1.0, 1e6), real("dist_threshold", 0.0, BIG, false)];
        match self {
            DetectorKind::KSigma => KSIGMA,
            DetectorKind::SimpleThreshold => THRESHOLD,
            DetectorKind::DbscanOutlier => DBSCAN,
            DetectorKind::LofOutlier => LOF,
            DetectorKind::KernelDensity => KDE,
            DetectorKind::CusumChangePoint => CUSUM,
            DetectorKind::StlResidual => STL,
            DetectorKind::DtwShape => DTW,
        }
    }

    /// The parameter that `sensitivity` divides, if any.
    fn primary_threshold(self) -> Option<&'static str> {
        match self {
            DetectorKind::KSigma => Some("k"),
            DetectorKind::CusumChangePoint => Some("h"),
            DetectorKind::StlResidual => Some("residual_k"),
            DetectorKind::DtwShape => Some("dist_threshold"),
            _ => None,
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters shared by every detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonParams {
    /// How many preceding windows are offered as shape references (DTW only).
    pub history_count: usize,
    /// In (0, 1]. The primary threshold is divided by it, so lower values
    /// make a detector less eager to flag.
    pub sensitivity: f64,
}

impl Default for CommonParams {
    fn default() -> Self {
        CommonParams {
            history_count: 3,
            sensitivity: 1.0,
        }
    }
}

impl CommonParams {
    pub fn validate(&self) -> Result<()> {
        if self.history_count == 0 {
            return Err(Error::param("history_count", "must be positive"));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity <= 1.0) {
            return Err(Error::param("sensitivity", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// A detector identity plus a concrete run-time parameter assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub common: CommonParams,
}

impl DetectorConfig {
    pub fn new<'a>(kind: DetectorKind, params: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let config = DetectorConfig {
            kind,
            params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            common: CommonParams::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_common(mut self, common: CommonParams) -> Self {
        self.common = common;
        self
    }

    /// Names must match the kind's schema exactly and values must lie in bounds.
    pub fn validate(&self) -> Result<()> {
        let schema = self.kind.schema();
        let schema_err = |reason: String| Error::Schema {
            kind: self.kind.name().to_string(),
            reason,
        };
        for name in self.params.keys() {
            if !schema.iter().any(|p| p.name == name) {
                return Err(schema_err(format!("unknown parameter `{name}`")));
            }
        }
        for spec in schema {
            let v = self
                .params
                .get(spec.name)
                .ok_or_else(|| schema_err(format!("missing parameter `{}`", spec.name)))?;
            spec.check(*v).map_err(schema_err)?;
        }
        self.common.validate()
    }

    fn get(&self, name: &str) -> f64 {
        self.params[name]
    }

    /// Parameter value after the sensitivity adjustment.
    fn effective(&self, name: &str) -> f64 {
        let v = self.get(name);
        if self.kind.primary_threshold() == Some(name) {
            v / self.common.sensitivity
        } else {
            v
        }
    }
}

impl fmt::Display for DetectorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        for (i, spec) in self.kind.schema().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}={}", spec.name, self.params.get(spec.name).copied().unwrap_or(f64::NAN))?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub mask: AnomalyMask,
    /// Per-point detector statistic, when the detector has one.
    pub score_trace: Option<Vec<f64>>,
}

impl DetectionResult {
    pub(crate) fn new(mask: AnomalyMask, score_trace: Option<Vec<f64>>) -> Self {
        DetectionResult { mask, score_trace }
    }
}

/// Extra inputs some detectors need: preceding windows of the same series,
/// nearest first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorContext {
    pub references: Vec<Vec<f64>>,
}

impl DetectorContext {
    pub fn none() -> Self {
        Self::default()
    }

    /// Up to `max_refs` non-overlapping windows immediately preceding
    /// `values[start..start + len]`, nearest first.
    pub fn preceding(values: &[f64], start: usize, len: usize, max_refs: usize) -> Self {
        let references = (1..=max_refs)
            .map_while(|k| {
                let offset = k * len;
                (offset <= start).then(|| values[start - offset..start - offset + len].to_vec())
            })
            .collect();
        DetectorContext { references }
    }
}

/// Uniform dispatch over the pool. Deterministic for fixed inputs.
pub fn run_detector(config: &DetectorConfig, window: &Window, context: &DetectorContext) -> Result<DetectionResult> {
    config.validate()?;
    let x = &window.values;
    let p = |name: &str| config.effective(name);
    match config.kind {
        DetectorKind::KSigma => ksigma_detect(x, p("k")),
        DetectorKind::SimpleThreshold => threshold_detect(x, p("upper"), p("lower")),
        DetectorKind::DbscanOutlier => dbscan_detect(x, p("eps"), p("min_pts") as usize),
        DetectorKind::LofOutlier => lof_detect(x, p("k") as usize, p("lof_threshold")),
        DetectorKind::KernelDensity => {
            let mode = if p("mode") == 0.0 {
                KdeMode::Outlier
            } else {
                KdeMode::ChangePoint
            };
            kde_detect(x, p("bandwidth"), p("density_quantile"), mode)
        }
        DetectorKind::CusumChangePoint => cusum_detect(x, p("h"), p("drift")),
        DetectorKind::StlResidual => stl_detect(x, p("period") as usize, p("residual_k")),
        DetectorKind::DtwShape => {
            let refs: Vec<&[f64]> = context
                .references
                .iter()
                .take(config.common.history_count)
                .map(Vec::as_slice)
                .collect();
            dtw_detect_any(x, &refs, p("radius") as usize, p("dist_threshold"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_stable() {
        let names: Vec<_> = DetectorKind::ALL.iter().map(|k| k.name()).collect();
        assert_eq!(
            names,
            [
                "ksigma",
                "simple_threshold",
                "dbscan_outlier",
                "lof_outlier",
                "kernel_density",
                "cusum_change_point",
                "stl_residual",
                "dtw_shape"
            ]
        );
        for k in DetectorKind::ALL {
            assert_eq!(DetectorKind::from_name(k.name()), Some(k));
            assert_eq!(DetectorKind::ALL[k.registry_index()], k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn ksigma_on_constant_window_is_empty() {
        let c = DetectorConfig::new(DetectorKind::KSigma, [("k", 3.0)]).unwrap();
        let r = run_detector(&c, &Window::from_values(vec![2.0; 50]), &DetectorContext::none()).unwrap();
        assert_eq!(r.mask.count(), 0);
    }

    #[test]
    fn unknown_parameter_is_a_schema_error() {
        let err = DetectorConfig::new(DetectorKind::KSigma, [("k", 3.0), ("q", 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
        let mut c = DetectorConfig::new(DetectorKind::KSigma, [("k", 3.0)]).unwrap();
        c.params.insert("bogus".into(), 1.0);
        assert!(run_detector(&c, &Window::from_values(vec![0.0; 4]), &DetectorContext::none()).is_err());
    }

    #[test]
    fn out_of_bounds_values_rejected() {
        assert!(DetectorConfig::new(DetectorKind::KSigma, [("k", 0.0)]).is_err());
        assert!(DetectorConfig::new(DetectorKind::DbscanOutlier, [("eps", 0.5), ("min_pts", 2.5)]).is_err());
        assert!(DetectorConfig::new(DetectorKind::LofOutlier, [("k", 3.0), ("lof_threshold", 1.0)]).is_err());
    }

    #[test]
    fn dispatch_is_deterministic() {
        let values: Vec<f64> = (0..120).map(|i| ((i * 37 % 11) as f64).sin() + if i == 60 { 9.0 } else { 0.0 }).collect();
        let w = Window::from_values(values);
        let ctx = DetectorContext::none();
        for grid in full_grid() {
            for c in grid.combos() {
                if c.kind == DetectorKind::StlResidual && c.params["period"] * 2.0 > 120.0 {
                    continue;
                }
                let a = run_detector(c, &w, &ctx).unwrap();
                let b = run_detector(c, &w, &ctx).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.mask.len(), w.len());
            }
        }
    }

    #[test]
    fn sensitivity_divides_primary_threshold() {
        let mut values = vec![0.0; 19];
        values.push(10.0);
        let w = Window::from_values(values);
        let c = DetectorConfig::new(DetectorKind::KSigma, [("k", 3.0)]).unwrap();
        assert_eq!(run_detector(&c, &w, &DetectorContext::none()).unwrap().mask.count(), 1);
        let dull = c.with_common(CommonParams {
            history_count: 1,
            sensitivity: 0.5,
        });
        // effective k = 6 > 9.5 / 2.18
        assert_eq!(run_detector(&dull, &w, &DetectorContext::none()).unwrap().mask.count(), 0);
    }

    #[test]
    fn preceding_context_nearest_first() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let ctx = DetectorContext::preceding(&values, 6, 3, 5);
        assert_eq!(ctx.references, vec![vec![3.0, 4.0, 5.0], vec![0.0, 1.0, 2.0]]);
        assert!(DetectorContext::preceding(&values, 2, 3, 5).references.is_empty());
    }
}
