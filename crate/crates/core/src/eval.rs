//! End-to-end scoring on labeled series. Series are cut into consecutive,
//! non-overlapping windows; each window is detected on its raw values with the
//! preceding windows as shape references, and counts are pooled point-wise.

use serde::{Deserialize, Serialize};

use crate::baseline::VotePool;
use crate::detectors::{run_detector, DetectorConfig, DetectorContext, GridSet};
use crate::error::{Error, Result};
use crate::metrics::{score_mask, ConfusionCounts, MetricReport};
use crate::net::ModelBundle;
use crate::series::{slide_windows, TimeSeries, Window};

/// What produces the masks.
#[derive(Debug, Clone, Copy)]
pub enum Scorer<'a> {
    /// The network picks a configuration per window.
    Adaptive(&'a ModelBundle),
    Fixed(&'a DetectorConfig),
    Vote(&'a VotePool),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub counts: ConfusionCounts,
    pub metrics: MetricReport,
    pub windows: usize,
    /// Flat combo index chosen per window (adaptive scoring only).
    pub chosen: Vec<usize>,
}

pub const DEFAULT_HISTORY: usize = 3;

struct Prepared {
    windows: Vec<Window>,
    contexts: Vec<DetectorContext>,
}

fn prepare(series: &[TimeSeries], window_size: usize, history: usize) -> Result<Prepared> {
    let mut windows = Vec::new();
    let mut contexts = Vec::new();
    for s in series {
        if !s.is_labeled() {
            return Err(Error::InvalidSeries {
                id: s.id.clone(),
                reason: "evaluation needs ground truth".into(),
            });
        }
        for w in slide_windows(s, window_size, window_size)? {
            contexts.push(DetectorContext::preceding(&s.values, w.start_index, window_size, history));
            windows.push(w);
        }
    }
    Ok(Prepared { windows, contexts })
}

pub fn evaluate_series(scorer: Scorer<'_>, series: &[TimeSeries], window_size: usize) -> Result<EvalResult> {
    evaluate_series_with(scorer, series, window_size, DEFAULT_HISTORY)
}

pub fn evaluate_series_with(scorer: Scorer<'_>, series: &[TimeSeries], window_size: usize, history: usize) -> Result<EvalResult> {
    let prep = prepare(series, window_size, history)?;
    let mut counts = ConfusionCounts::default();
    let mut chosen = Vec::new();
    match scorer {
        Scorer::Adaptive(bundle) => {
            let preds = bundle.predict_batch(&prep.windows)?;
            for ((w, ctx), pred) in prep.windows.iter().zip(&prep.contexts).zip(preds) {
                let r = run_detector(&pred.config, w, ctx)?;
                counts += score_mask(&r.mask, &w.labels)?;
                chosen.push(pred.combo_index);
            }
        }
        Scorer::Fixed(cfg) => {
            for (w, ctx) in prep.windows.iter().zip(&prep.contexts) {
                counts += score_mask(&run_detector(cfg, w, ctx)?.mask, &w.labels)?;
            }
        }
        Scorer::Vote(pool) => {
            for (w, ctx) in prep.windows.iter().zip(&prep.contexts) {
                counts += score_mask(&pool.detect(w, ctx)?.mask, &w.labels)?;
            }
        }
    }
    Ok(EvalResult {
        counts,
        metrics: counts.metrics(),
        windows: prep.windows.len(),
        chosen,
    })
}

/// Pooled counts of every combo in flat order.
pub fn evaluate_all_combos(grids: &GridSet, series: &[TimeSeries], window_size: usize) -> Result<Vec<ConfusionCounts>> {
    let prep = prepare(series, window_size, DEFAULT_HISTORY)?;
    let mut out = vec![ConfusionCounts::default(); grids.total_combos()];
    for (w, ctx) in prep.windows.iter().zip(&prep.contexts) {
        for (flat, _, _, cfg) in grids.iter_combos() {
            out[flat] += score_mask(&run_detector(cfg, w, ctx)?.mask, &w.labels)?;
        }
    }
    Ok(out)
}

/// Flat index and counts of the combo with the highest pooled F1 (lowest
/// index on ties).
pub fn best_single_combo(per_combo: &[ConfusionCounts]) -> Option<(usize, ConfusionCounts)> {
    let mut best: Option<(usize, ConfusionCounts)> = None;
    for (i, c) in per_combo.iter().enumerate() {
        if best.is_none_or(|(_, b)| c.metrics().f1 > b.metrics().f1) {
            best = Some((i, *c));
        }
    }
    best
}
