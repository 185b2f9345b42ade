//! Label windows by exhaustive search over the 29-combo grid, show how the
//! winners spread over detectors, and persist the dataset.

use std::collections::BTreeMap;

use atsdln::data::{anomaly_corpus, read_dataset, write_dataset, CorpusConfig};
use atsdln::detectors::GridSet;
use atsdln::oracle::build_dataset;

fn main() -> atsdln::Result<()> {
    let corpus = anomaly_corpus(&CorpusConfig::default(), 42)?;
    let series: Vec<_> = corpus.iter().map(|c| c.series.clone()).collect();
    let grids = GridSet::default();
    let data = build_dataset(&series, 200, 200, &grids)?;

    println!("{} windows, {} combos", data.len(), grids.total_combos());
    for (class, grid) in grids.grids().iter().enumerate() {
        println!("  {:<20} {:>4} windows", grid.kind().name(), data.class_counts[class]);
    }

    // which combo wins, by the anomaly type of the window's series
    let mut by_type: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    let kind_of: BTreeMap<&str, &str> = corpus.iter().map(|c| (c.series.id.as_str(), c.kind.name())).collect();
    for e in &data.examples {
        if e.window.anomaly_count() > 0 {
            *by_type.entry(kind_of[e.window.parent_id.as_str()]).or_default().entry(e.provenance.combo_index).or_default() += 1;
        }
    }
    for (kind, wins) in &by_type {
        let top = wins.iter().max_by_key(|(_, n)| **n).unwrap();
        println!("  {kind:<16} most often {} ({} of {})", grids.iter_combos().nth(*top.0).unwrap().3, top.1, wins.values().sum::<usize>());
    }
    let distinct = data.combo_counts.iter().filter(|&&n| n > 0).count();
    println!("{distinct} distinct combos win at least one window");

    let dir = std::env::temp_dir().join("atsdln-oracle-dataset");
    write_dataset(&data, &dir)?;
    assert_eq!(read_dataset(&dir)?.examples.len(), data.len());
    println!("dataset written to {}", dir.display());
    Ok(())
}
