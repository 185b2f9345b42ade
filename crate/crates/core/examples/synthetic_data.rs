//! Generate the labeled corpus, write it as S5-style CSV, read it back, and
//! round-trip a small UCR-style classification file.

use atsdln::data::{anomaly_corpus, read_s5, read_ucr, write_s5, write_ucr, class_count, AnomalyType, CorpusConfig, UcrExample};
use atsdln::transfer::{shape_source, SourceShape};

fn main() -> atsdln::Result<()> {
    let dir = std::env::temp_dir().join("atsdln-synthetic-data");
    std::fs::create_dir_all(&dir).unwrap();

    let config = CorpusConfig {
        series_per_type: 2,
        ..CorpusConfig::default()
    };
    let corpus = anomaly_corpus(&config, 7)?;
    for c in &corpus {
        let labels = c.series.labels.as_ref().unwrap();
        let first = labels.iter().position(|&l| l).unwrap();
        let count = labels.iter().filter(|&&l| l).count();
        println!(
            "{:<20} {:>3} points  anomaly in window {}  labeled {:>3} from index {}",
            c.series.id,
            c.series.len(),
            c.anomaly_window,
            count,
            first
        );
    }

    let sample = corpus.iter().find(|c| c.kind == AnomalyType::Cliff).unwrap();
    let path = dir.join(format!("{}.csv", sample.series.id));
    write_s5(&sample.series, &path)?;
    let back = read_s5(&path)?;
    assert_eq!(back, sample.series);
    println!("\nS5 round trip ok: {}", path.display());

    // a classification corpus in UCR layout: class first, then the values
    let source: Vec<UcrExample> = shape_source(&[SourceShape::Sine, SourceShape::Square], 3, 32, 1);
    let ucr = dir.join("shapes.tsv");
    write_ucr(&source, &ucr)?;
    let parsed = read_ucr(&ucr)?;
    println!("UCR round trip: {} series, {} classes", parsed.len(), class_count(&parsed));
    Ok(())
}
