//! Sweep all 29 combos over a corpus and write the table and bar charts.

use atsdln::bench::combo_sweep;
use atsdln::data::{anomaly_corpus, CorpusConfig};
use atsdln::detectors::GridSet;
use atsdln::report::write_sweep_report;

fn main() -> atsdln::Result<()> {
    let corpus = anomaly_corpus(&CorpusConfig { series_per_type: 5, ..CorpusConfig::default() }, 3)?;
    let series: Vec<_> = corpus.into_iter().map(|c| c.series).collect();
    let rows = combo_sweep(&GridSet::default(), &series, 200)?;
    for r in &rows {
        println!("{:>2} {:<40} f1 {:.3} error {:.3}", r.combo_index, r.params, r.metrics.f1, r.metrics.error);
    }
    let dir = std::env::temp_dir().join("atsdln-report");
    for path in write_sweep_report(&rows, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
