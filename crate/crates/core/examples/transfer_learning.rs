//! Pretrain the backbone on a waveform classification task, transplant it, and
//! compare with a cold start.
//!
//! `cargo run --release --example transfer_learning -- [seed]`

use atsdln::bench::{label_split, pretrain_synthetic, transfer_pair, Protocol, SourceConfig, Split};
use atsdln::detectors::GridSet;

fn main() -> atsdln::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let protocol = Protocol::default();
    let source = SourceConfig::default();
    let grids = GridSet::default();

    let pre = pretrain_synthetic(&protocol, &source, &grids, seed)?;
    println!(
        "source accuracy {:.3} after {} epochs ({} classes)",
        pre.final_accuracy(),
        pre.accuracy_log.len(),
        pre.backbone.source_classes.len()
    );

    let split = Split::new(&protocol, seed)?;
    let data = label_split(&protocol, &split, &grids)?;
    let (cold, warm) = transfer_pair(&protocol, &source, &data, &split.test_series(), seed)?;
    for (name, run) in [("cold start", &cold), ("transferred", &warm)] {
        println!(
            "{name:<12} held-out F1 {:.4}  epochs to 0.8 train accuracy {:?}",
            run.test.metrics.f1,
            run.outcome.epochs_to_train_accuracy(0.8)
        );
    }
    Ok(())
}
