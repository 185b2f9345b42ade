//! Point-wise confusion counts and the derived metric table
//! (precision, recall, false positive rate, F1 and the false-alarm `error`).

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::AnomalyMask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> MetricReport {
        compute_metrics(self)
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = ConfusionCounts>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
    pub error: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "precision,recall,fpr,f1,error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.precision, self.recall, self.fpr, self.f1, self.error
        )
    }
}

/// Counts point-wise agreement between predicted flags and ground truth.
pub fn score_mask(predicted: &AnomalyMask, truth: &[bool]) -> Result<ConfusionCounts> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in predicted.flags().iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Every 0/0 case evaluates to 0.
pub fn compute_metrics(c: &ConfusionCounts) -> MetricReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MetricReport {
        precision,
        recall,
        fpr: ratio(c.fp, c.fp + c.tn),
        f1,
        error: ratio(c.fp, c.tp + c.fp + c.fn_),
    }
}
