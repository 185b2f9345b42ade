//! The labeled benchmark corpus: series of whole windows, each carrying one
//! anomaly of a known type inside a known window. Window 0 is always clean so
//! shape detectors have a reference.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

use super::synth::{generate_synthetic_with, AnomalySpec, AnomalyType, BaseSignal, SynthConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub series_per_type: usize,
    pub windows_per_series: usize,
    pub window_size: usize,
    pub types: Vec<AnomalyType>,
    pub noise_sigma: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            series_per_type: 20,
            windows_per_series: 3,
            window_size: 200,
            types: AnomalyType::ALL.to_vec(),
            noise_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSeries {
    pub kind: AnomalyType,
    /// Index of the window (at stride `window_size`) holding the anomaly.
    pub anomaly_window: usize,
    pub series: TimeSeries,
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Base signal and anomaly placement (offset inside the window) per type.
fn layout(kind: AnomalyType, w: usize, rng: &mut ChaCha8Rng) -> (BaseSignal, usize, AnomalySpec) {
    let spec = |magnitude, duration| AnomalySpec::new(kind, magnitude, 0.0, duration);
    match kind {
        AnomalyType::Outlier => {
            let off = rng.gen_range(10..w - 10);
            (BaseSignal::Sine, off, spec(signed(rng, 5.0, 7.0), 1))
        }
        AnomalyType::MeanShift => {
            let d = rng.gen_range(w / 5..w * 2 / 5);
            let off = rng.gen_range(w / 10..w - d - w / 10);
            (BaseSignal::Noise, off, spec(signed(rng, 2.5, 3.5), d))
        }
        AnomalyType::Cliff => {
            let off = rng.gen_range(w / 2 + w / 20..w * 3 / 4);
            (BaseSignal::Sine, off, spec(signed(rng, 4.0, 6.0), w - off))
        }
        AnomalyType::DeviatingTrend => {
            let d = rng.gen_range(6..11);
            let off = rng.gen_range(w / 6..w - w / 6 - d);
            (BaseSignal::Sine, off, spec(signed(rng, 2.5, 3.5), d))
        }
        AnomalyType::NewShape => (BaseSignal::Sine, 0, spec(1.0, w)),
    }
}

/// `series_per_type` series per listed type, in type-major order. Sine bases
/// draw their period from {24, 48}, except new-shape series which use 192.
pub fn anomaly_corpus(config: &CorpusConfig, seed: u64) -> Result<Vec<CorpusSeries>> {
    if config.windows_per_series < 2 {
        return Err(Error::param("windows_per_series", "need at least 2 (window 0 stays clean)"));
    }
    if config.window_size < 100 {
        return Err(Error::param("window_size", "must be at least 100"));
    }
    let w = config.window_size;
    let len = w * config.windows_per_series;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &kind in &config.types {
        for i in 0..config.series_per_type {
            // a slow base keeps the frequency-doubled segment out of DTW's warping
            // reach and unlike any ordinary window
            let period = if kind == AnomalyType::NewShape {
                192
            } else {
                *[24, 48].choose(&mut rng).unwrap()
            };
            let synth = SynthConfig {
                period,
                noise_sigma: config.noise_sigma,
                ..SynthConfig::default()
            };
            let anomaly_window = rng.gen_range(1..config.windows_per_series);
            let (base, off, mut spec) = layout(kind, w, &mut rng);
            spec.position = (anomaly_window * w + off) as f64 / len as f64;
            // guard against rounding in the fraction
            while spec.start(len) < anomaly_window * w + off {
                spec.position = f64::from_bits(spec.position.to_bits() + 1);
            }
            let mut series = generate_synthetic_with(&synth, 1, len, base, &[spec], rng.gen())?.remove(0);
            series.id = format!("{}-{i}", kind.name());
            out.push(CorpusSeries {
                kind,
                anomaly_window,
                series,
            });
        }
    }
    Ok(out)
}
