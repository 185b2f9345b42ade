//! Time-series containers, sliding windows and per-window normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Below this sample standard deviation a window is treated as constant.
pub const CONSTANT_STD: f64 = 1e-8;

/// A timestamped univariate series with optional point-wise anomaly labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    pub labels: Option<Vec<bool>>,
}

impl TimeSeries {
    /// Validates and builds a series. Timestamps must be strictly increasing,
    /// all sequences must have equal length and every value must be finite.
    pub fn new(
        id: impl Into<String>,
        timestamps: Vec<i64>,
        values: Vec<f64>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let id = id.into();
        let invalid = |reason: String| Error::InvalidSeries {
            id: id.clone(),
            reason,
        };
        if timestamps.len() != values.len() {
            return Err(invalid(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(invalid(format!(
                    "{} labels but {} values",
                    l.len(),
                    values.len()
                )));
            }
        }
        if let Some(i) = timestamps.windows(2).position(|p| p[1] <= p[0]) {
            return Err(invalid(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at index {i}")));
        }
        Ok(TimeSeries {
            id,
            timestamps,
            values,
            labels,
        })
    }

    /// A series with timestamps `0, 1, 2, ...`.
    pub fn from_values(
        id: impl Into<String>,
        values: Vec<f64>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let timestamps = (0..values.len() as i64).collect();
        Self::new(id, timestamps, values, labels)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.is_some()
    }
}

/// A fixed-length slice of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub parent_id: String,
    pub start_index: usize,
    pub values: Vec<f64>,
    pub labels: Vec<bool>,
    pub normalized: bool,
}

impl Window {
    /// An unlabeled, unnormalized window not attached to any series.
    pub fn from_values(values: Vec<f64>) -> Self {
        let labels = vec![false; values.len()];
        Window {
            parent_id: String::new(),
            start_index: 0,
            values,
            labels,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Point-wise anomaly flags emitted by a detector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnomalyMask {
    flags: Vec<bool>,
}

impl AnomalyMask {
    pub fn empty(len: usize) -> Self {
        AnomalyMask {
            flags: vec![false; len],
        }
    }

    pub fn full(len: usize) -> Self {
        AnomalyMask {
            flags: vec![true; len],
        }
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        AnomalyMask { flags }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn set(&mut self, i: usize) {
        self.flags[i] = true;
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// Cuts a series into windows at offsets `0, stride, 2*stride, ...`.
/// A trailing partial window is dropped. Unlabeled series yield all-false labels.
pub fn slide_windows(series: &TimeSeries, window_size: usize, stride: usize) -> Result<Vec<Window>> {
    if window_size == 0 {
        return Err(Error::param("window_size", "must be positive"));
    }
    if stride == 0 {
        return Err(Error::param("stride", "must be positive"));
    }
    if window_size > series.len() {
        return Err(Error::SeriesTooShort {
            id: series.id.clone(),
            len: series.len(),
            window: window_size,
        });
    }
    let windows = (0..=series.len() - window_size)
        .step_by(stride)
        .map(|start| {
            let end = start + window_size;
            let labels = match &series.labels {
                Some(l) => l[start..end].to_vec(),
                None => vec![false; window_size],
            };
            Window {
                parent_id: series.id.clone(),
                start_index: start,
                values: series.values[start..end].to_vec(),
                labels,
                normalized: false,
            }
        })
        .collect();
    Ok(windows)
}

/// Z-scores a window. Constant windows (std below [`CONSTANT_STD`]) map to zeros.
pub fn normalize_window(w: &Window) -> Window {
    let mut out = w.clone();
    out.values = zscore(&w.values);
    out.normalized = true;
    out
}

pub(crate) fn zscore(values: &[f64]) -> Vec<f64> {
    let (m, s) = stats::mean_std(values);
    if s < CONSTANT_STD {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| (v - m) / s).collect()
    }
}
