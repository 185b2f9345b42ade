//! Synthetic labeled series with the five anomaly shapes injected at known
//! positions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSignal {
    Sine,
    Trend,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyType {
    /// A single point far from the rest.
    Outlier,
    /// A small sustained offset that later reverts.
    MeanShift,
    /// The signal switches to a flat level for a while.
    Cliff,
    /// A ramp diverging from the underlying pattern.
    DeviatingTrend,
    /// A segment with a different waveform.
    NewShape,
}

impl AnomalyType {
    pub const ALL: [AnomalyType; 5] = [
        AnomalyType::Outlier,
        AnomalyType::MeanShift,
        AnomalyType::Cliff,
        AnomalyType::DeviatingTrend,
        AnomalyType::NewShape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyType::Outlier => "outlier",
            AnomalyType::MeanShift => "mean_shift",
            AnomalyType::Cliff => "cliff",
            AnomalyType::DeviatingTrend => "deviating_trend",
            AnomalyType::NewShape => "new_shape",
        }
    }
}

/// One injected anomaly. `magnitude` is in units of the clean series' standard
/// deviation (for `NewShape`, a multiple of the base amplitude); `position` is
/// the start as a fraction of the series length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    #[serde(rename = "type")]
    pub kind: AnomalyType,
    pub magnitude: f64,
    pub position: f64,
    pub duration: usize,
}

impl AnomalySpec {
    pub fn new(kind: AnomalyType, magnitude: f64, position: f64, duration: usize) -> Self {
        AnomalySpec {
            kind,
            magnitude,
            position,
            duration,
        }
    }

    pub fn start(&self, length: usize) -> usize {
        (self.position * length as f64).floor() as usize
    }

    fn span(&self, length: usize) -> std::ops::Range<usize> {
        let d = if self.kind == AnomalyType::Outlier { 1 } else { self.duration };
        let s = self.start(length);
        s..s + d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub amplitude: f64,
    pub period: usize,
    pub noise_sigma: f64,
    /// Per-point slope of the `Trend` base.
    pub trend_slope: f64,
    /// Draw a random phase for every series.
    pub random_phase: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            amplitude: 1.0,
            period: 24,
            noise_sigma: 0.1,
            trend_slope: 0.01,
            random_phase: true,
        }
    }
}

/// `n_series` series sharing the base and anomaly layout, each with its own
/// noise draw (and phase). All randomness comes from `seed`.
pub fn generate_synthetic(
    n_series: usize,
    length: usize,
    base: BaseSignal,
    anomalies: &[AnomalySpec],
    seed: u64,
) -> Result<Vec<TimeSeries>> {
    generate_synthetic_with(&SynthConfig::default(), n_series, length, base, anomalies, seed)
}

pub fn generate_synthetic_with(
    config: &SynthConfig,
    n_series: usize,
    length: usize,
    base: BaseSignal,
    anomalies: &[AnomalySpec],
    seed: u64,
) -> Result<Vec<TimeSeries>> {
    validate_specs(anomalies, length)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_series)
        .map(|i| one_series(config, &format!("synth-{seed}-{i}"), length, base, anomalies, &mut rng))
        .collect()
}

fn validate_specs(anomalies: &[AnomalySpec], length: usize) -> Result<()> {
    for (i, a) in anomalies.iter().enumerate() {
        if !(a.position > 0.0 && a.position < 1.0) {
            return Err(Error::param("position", format!("{} outside (0, 1)", a.position)));
        }
        if a.kind != AnomalyType::Outlier && a.duration == 0 {
            return Err(Error::param("duration", "must be positive"));
        }
        let span = a.span(length);
        if span.end > length {
            return Err(Error::param(
                "duration",
                format!("{} anomaly ends at {} past length {length}", a.kind.name(), span.end),
            ));
        }
        for b in &anomalies[..i] {
            let other = b.span(length);
            if span.start < other.end && other.start < span.end {
                return Err(Error::param(
                    "anomalies",
                    format!("{} overlaps {}", a.kind.name(), b.kind.name()),
                ));
            }
        }
    }
    Ok(())
}

fn one_series(
    config: &SynthConfig,
    id: &str,
    length: usize,
    base: BaseSignal,
    anomalies: &[AnomalySpec],
    rng: &mut ChaCha8Rng,
) -> Result<TimeSeries> {
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).map_err(|e| Error::param("noise_sigma", e.to_string()))?;
    let unit = Normal::new(0.0, 1.0).unwrap();
    let phase = if config.random_phase {
        rng.gen_range(0.0..2.0 * PI)
    } else {
        0.0
    };
    let omega = 2.0 * PI / config.period as f64;
    let a = config.amplitude;
    let mut values: Vec<f64> = (0..length)
        .map(|t| {
            let t = t as f64;
            let b = match base {
                BaseSignal::Sine => a * (omega * t + phase).sin(),
                BaseSignal::Trend => config.trend_slope * t,
                BaseSignal::Noise => a * unit.sample(rng),
            };
            b + noise.sample(rng)
        })
        .collect();
    let (level, sigma) = stats::mean_std(&values);
    let mut labels = vec![false; length];
    for spec in anomalies {
        let span = spec.span(length);
        let d = span.len();
        for (k, t) in span.clone().enumerate() {
            labels[t] = true;
            match spec.kind {
                AnomalyType::Outlier | AnomalyType::MeanShift => values[t] += spec.magnitude * sigma,
                AnomalyType::Cliff => values[t] = level + spec.magnitude * sigma + noise.sample(rng),
                AnomalyType::DeviatingTrend => {
                    let frac = if d > 1 { k as f64 / (d - 1) as f64 } else { 1.0 };
                    values[t] += spec.magnitude * sigma * (0.5 + 0.5 * frac);
                }
                AnomalyType::NewShape => {
                    values[t] = -spec.magnitude * a * (2.0 * omega * t as f64 + phase).sin() + noise.sample(rng);
                }
            }
        }
    }
    TimeSeries::from_values(id, values, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outlier_labels_exactly_one_point() {
        let spec = AnomalySpec::new(AnomalyType::Outlier, 8.0, 0.5, 1);
        let s = generate_synthetic(3, 400, BaseSignal::Sine, &[spec], 1).unwrap();
        for series in &s {
            let labels = series.labels.as_ref().unwrap();
            assert_eq!(labels.iter().filter(|&&l| l).count(), 1);
            assert!(labels[200]);
        }
    }

    #[test]
    fn same_seed_same_series() {
        let spec = AnomalySpec::new(AnomalyType::MeanShift, 3.0, 0.3, 40);
        let a = generate_synthetic(4, 300, BaseSignal::Noise, &[spec], 9).unwrap();
        let b = generate_synthetic(4, 300, BaseSignal::Noise, &[spec], 9).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(4, 300, BaseSignal::Noise, &[spec], 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn overlapping_or_overflowing_specs_rejected() {
        let a = AnomalySpec::new(AnomalyType::MeanShift, 3.0, 0.3, 40);
        let b = AnomalySpec::new(AnomalyType::Cliff, 5.0, 0.35, 10);
        assert!(generate_synthetic(1, 300, BaseSignal::Noise, &[a, b], 0).is_err());
        let c = AnomalySpec::new(AnomalyType::Cliff, 5.0, 0.9, 40);
        assert!(generate_synthetic(1, 300, BaseSignal::Noise, &[c], 0).is_err());
    }

    #[test]
    fn labels_stay_inside_spec_ranges() {
        let specs = [
            AnomalySpec::new(AnomalyType::Outlier, 6.0, 0.1, 1),
            AnomalySpec::new(AnomalyType::DeviatingTrend, 2.0, 0.3, 12),
            AnomalySpec::new(AnomalyType::NewShape, 1.0, 0.6, 50),
        ];
        for base in [BaseSignal::Sine, BaseSignal::Trend, BaseSignal::Noise] {
            let s = &generate_synthetic(1, 500, base, &specs, 4).unwrap()[0];
            for (t, &l) in s.labels.as_ref().unwrap().iter().enumerate() {
                if l {
                    assert!(specs.iter().any(|sp| sp.span(500).contains(&t)));
                }
            }
        }
    }
}
