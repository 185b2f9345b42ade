//! Supervision by exhaustive search: every grid combo is run on every labeled
//! window and the best one becomes that window's label.

use serde::{Deserialize, Serialize};

use crate::detectors::{run_detector, DetectorContext, GridSet};
use crate::error::{Error, Result};
use crate::metrics::{score_mask, ConfusionCounts};
use crate::series::{normalize_window, slide_windows, TimeSeries, Window};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComboScore {
    pub combo_index: usize,
    pub detector_class: usize,
    pub param_index: usize,
    pub counts: ConfusionCounts,
    pub window_score: f64,
}

impl ComboScore {
    pub fn error(&self) -> f64 {
        self.counts.metrics().error
    }
}

/// F1 when the window holds an anomaly, `1 / (1 + fp)` otherwise.
pub fn window_score(counts: &ConfusionCounts, has_anomaly: bool) -> f64 {
    if has_anomaly {
        counts.metrics().f1
    } else {
        1.0 / (1.0 + counts.fp as f64)
    }
}

/// One score per combo, in flat combo order.
pub fn sweep_window(window: &Window, grids: &GridSet, context: &DetectorContext) -> Result<Vec<ComboScore>> {
    let has_anomaly = window.anomaly_count() > 0;
    grids
        .iter_combos()
        .map(|(flat, class, param, config)| {
            let result = run_detector(config, window, context)?;
            let counts = score_mask(&result.mask, &window.labels)?;
            Ok(ComboScore {
                combo_index: flat,
                detector_class: class,
                param_index: param,
                counts,
                window_score: window_score(&counts, has_anomaly),
            })
        })
        .collect()
}

/// Highest score; ties go to the lower error, then the lower combo index.
/// Independent of the order of `scores`.
pub fn select_best(scores: &[ComboScore]) -> Result<ComboScore> {
    scores
        .iter()
        .copied()
        .min_by(|a, b| {
            b.window_score
                .total_cmp(&a.window_score)
                .then(a.error().total_cmp(&b.error()))
                .then(a.combo_index.cmp(&b.combo_index))
        })
        .ok_or_else(|| Error::Empty("no combo scores to select from".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedExample {
    /// Normalized network input; labels carried through.
    pub window: Window,
    /// The window as the detectors saw it.
    pub raw_values: Vec<f64>,
    pub detector_label: usize,
    pub param_label: usize,
    pub provenance: ComboScore,
}

impl SupervisedExample {
    pub fn from_raw(raw: &Window, best: ComboScore) -> Self {
        SupervisedExample {
            window: normalize_window(raw),
            raw_values: raw.values.clone(),
            detector_label: best.detector_class,
            param_label: best.param_index,
            provenance: best,
        }
    }

    /// The raw window with its labels.
    pub fn raw_window(&self) -> Window {
        Window {
            values: self.raw_values.clone(),
            normalized: false,
            ..self.window.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub examples: Vec<SupervisedExample>,
    pub window_size: usize,
    pub grids: GridSet,
    /// Examples per detector class.
    pub class_counts: Vec<usize>,
    /// Examples per flat combo index.
    pub combo_counts: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(examples: Vec<SupervisedExample>, window_size: usize, grids: GridSet) -> Result<Self> {
        let mut class_counts = vec![0; grids.num_detectors()];
        let mut combo_counts = vec![0; grids.total_combos()];
        let widths = grids.widths();
        for (i, e) in examples.iter().enumerate() {
            if e.window.len() != window_size {
                return Err(Error::LengthMismatch {
                    expected: window_size,
                    actual: e.window.len(),
                });
            }
            if e.detector_label >= widths.len() || e.param_label >= widths[e.detector_label] {
                return Err(Error::LabelOutOfRange(format!(
                    "example {i}: ({}, {}) outside the grid",
                    e.detector_label, e.param_label
                )));
            }
            class_counts[e.detector_label] += 1;
            combo_counts[grids.flat_index(e.detector_label, e.param_label)] += 1;
        }
        Ok(LabeledDataset {
            examples,
            window_size,
            grids,
            class_counts,
            combo_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `n / (classes_present * n_c)` per class, 0 for absent classes.
    pub fn inverse_frequency_weights(&self) -> Vec<f64> {
        let present = self.class_counts.iter().filter(|&&c| c > 0).count().max(1);
        let n = self.len() as f64;
        self.class_counts
            .iter()
            .map(|&c| if c == 0 { 0.0 } else { n / (present * c) as f64 })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let examples = indices.iter().map(|&i| self.examples[i].clone()).collect();
        Self::new(examples, self.window_size, self.grids.clone())
    }
}

/// Largest `history_count` used by any combo.
pub(crate) fn max_history(grids: &GridSet) -> usize {
    grids.iter_combos().map(|(_, _, _, c)| c.common.history_count).max().unwrap_or(1)
}

/// Windows every series, sweeps each window and keeps the best combo.
/// Preceding windows of the same series are offered as shape references.
pub fn build_dataset(series: &[TimeSeries], window_size: usize, stride: usize, grids: &GridSet) -> Result<LabeledDataset> {
    if window_size < grids.min_window() {
        return Err(Error::param(
            "window_size",
            format!("{window_size} is below the grid minimum {}", grids.min_window()),
        ));
    }
    let history = max_history(grids);
    let mut examples = Vec::new();
    for s in series {
        if !s.is_labeled() {
            return Err(Error::InvalidSeries {
                id: s.id.clone(),
                reason: "oracle labeling needs ground truth".into(),
            });
        }
        for w in slide_windows(s, window_size, stride)? {
            let context = DetectorContext::preceding(&s.values, w.start_index, window_size, history);
            let best = select_best(&sweep_window(&w, grids, &context)?)?;
            examples.push(SupervisedExample::from_raw(&w, best));
        }
    }
    let data = LabeledDataset::new(examples, window_size, grids.clone())?;
    if data.class_counts.iter().filter(|&&c| c > 0).count() == 1 {
        log::warn!("every example carries the same detector label");
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic, AnomalySpec, AnomalyType, BaseSignal};
    use crate::detectors::DetectorKind;
    use proptest::prelude::*;

    fn score(combo: usize, tp: u64, fp: u64, fn_: u64, s: f64) -> ComboScore {
        ComboScore {
            combo_index: combo,
            detector_class: 0,
            param_index: combo,
            counts: ConfusionCounts::new(tp, fp, fn_, 0),
            window_score: s,
        }
    }

    #[test]
    fn window_score_rules() {
        assert_eq!(window_score(&ConfusionCounts::new(3, 0, 0, 10), true), 1.0);
        assert_eq!(window_score(&ConfusionCounts::new(0, 0, 3, 10), true), 0.0);
        assert_eq!(window_score(&ConfusionCounts::new(0, 0, 0, 10), false), 1.0);
        assert_eq!(window_score(&ConfusionCounts::new(0, 4, 0, 6), false), 0.2);
    }

    #[test]
    fn selection_tie_breaks() {
        let a = score(0, 1, 0, 0, 0.5);
        let b = score(1, 1, 0, 0, 0.9);
        assert_eq!(select_best(&[a, b]).unwrap().combo_index, 1);
        // equal scores, error 0.2 vs 0
        let c = score(2, 4, 1, 0, 1.0);
        let d = score(3, 4, 0, 0, 1.0);
        assert_eq!(select_best(&[c, d]).unwrap().combo_index, 3);
        let e = score(5, 1, 0, 0, 1.0);
        let f = score(4, 1, 0, 0, 1.0);
        assert_eq!(select_best(&[e, f]).unwrap().combo_index, 4);
        assert!(select_best(&[]).is_err());
    }

    #[test]
    fn default_grid_sweeps_29() {
        let s = &generate_synthetic(1, 200, BaseSignal::Sine, &[], 3).unwrap()[0];
        let w = &slide_windows(s, 200, 200).unwrap()[0];
        let scores = sweep_window(w, &GridSet::default(), &DetectorContext::none()).unwrap();
        assert_eq!(scores.len(), 29);
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(&s.window_score)));
    }

    #[test]
    fn dataset_counts_and_reproduction() {
        let spec = AnomalySpec::new(AnomalyType::Outlier, 6.0, 0.55, 1);
        let series = generate_synthetic(1, 400, BaseSignal::Sine, &[spec], 5).unwrap();
        let grids = GridSet::default();
        let data = build_dataset(&series, 200, 100, &grids).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.class_counts.iter().sum::<usize>(), 3);
        // re-running the chosen combo reproduces the stored counts
        for e in &data.examples {
            let raw = e.raw_window();
            let ctx = DetectorContext::preceding(&series[0].values, raw.start_index, 200, 3);
            let cfg = grids.config(e.detector_label, e.param_label);
            let r = run_detector(cfg, &raw, &ctx).unwrap();
            assert_eq!(score_mask(&r.mask, &raw.labels).unwrap(), e.provenance.counts);
        }
        let again = build_dataset(&series, 200, 100, &grids).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn outlier_corpus_labels_outlier_detectors() {
        let spec = AnomalySpec::new(AnomalyType::Outlier, 6.0, 0.5, 1);
        let series = generate_synthetic(10, 200, BaseSignal::Sine, &[spec], 11).unwrap();
        let grids = GridSet::default();
        let data = build_dataset(&series, 200, 200, &grids).unwrap();
        let outlier_family = [DetectorKind::KSigma, DetectorKind::DbscanOutlier];
        let hits = data
            .examples
            .iter()
            .filter(|e| outlier_family.contains(&grids.grid(e.detector_label).kind()))
            .count();
        assert!(hits * 2 > data.len(), "{:?}", data.class_counts);
    }

    #[test]
    fn inverse_weights() {
        let s = &generate_synthetic(1, 200, BaseSignal::Sine, &[], 3).unwrap()[0];
        let w = &slide_windows(s, 200, 200).unwrap()[0];
        let mk = |c: usize| SupervisedExample::from_raw(w, ComboScore { detector_class: c, ..score(0, 0, 0, 0, 1.0) });
        let data = LabeledDataset::new(vec![mk(0), mk(0), mk(0), mk(1)], 200, GridSet::default()).unwrap();
        let wts = data.inverse_frequency_weights();
        assert!((wts[0] - 4.0 / 6.0).abs() < 1e-12);
        assert!((wts[1] - 2.0).abs() < 1e-12);
        assert_eq!(wts[2], 0.0);
    }

    proptest! {
        #[test]
        fn selection_is_permutation_invariant(
            raw in proptest::collection::vec((0u64..4, 0u64..4, 0u64..4, 0usize..4), 1..12),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let scores: Vec<ComboScore> = raw
                .iter()
                .enumerate()
                .map(|(i, &(tp, fp, fn_, s))| score(i, tp, fp, fn_, s as f64 / 4.0))
                .collect();
            let mut shuffled = scores.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(select_best(&scores).unwrap(), select_best(&shuffled).unwrap());
        }
    }
}
