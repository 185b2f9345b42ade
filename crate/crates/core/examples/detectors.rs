//! Each detector family against the anomaly type it is meant for. For every
//! family the best configuration in the full grid is reported per type.

use atsdln::data::{anomaly_corpus, AnomalyType, CorpusConfig};
use atsdln::detectors::{run_detector, DetectorContext, GridSet};
use atsdln::metrics::{score_mask, ConfusionCounts};
use atsdln::series::slide_windows;

fn main() -> atsdln::Result<()> {
    let corpus = anomaly_corpus(&CorpusConfig::default(), 42)?;
    let grids = GridSet::full();
    for kind in AnomalyType::ALL {
        println!("{}", kind.name());
        let mut per_combo = vec![ConfusionCounts::default(); grids.total_combos()];
        for c in corpus.iter().filter(|c| c.kind == kind) {
            let windows = slide_windows(&c.series, 200, 200)?;
            let w = &windows[c.anomaly_window];
            let ctx = DetectorContext::preceding(&c.series.values, w.start_index, 200, 3);
            for (flat, _, _, cfg) in grids.iter_combos() {
                per_combo[flat] += score_mask(&run_detector(cfg, w, &ctx)?.mask, &w.labels)?;
            }
        }
        for (class, grid) in grids.grids().iter().enumerate() {
            let (f1, cfg) = (0..grid.len())
                .map(|p| (per_combo[grids.flat_index(class, p)].metrics().f1, grids.config(class, p)))
                .fold((f64::NEG_INFINITY, None), |best, (f1, cfg)| if f1 > best.0 { (f1, Some(cfg)) } else { best });
            println!("  {:<20} f1 {:.3}  {}", grid.kind().name(), f1, cfg.unwrap());
        }
    }
    Ok(())
}
