//! The three wirings of the parameter head, trained on identical data.
//!
//! `cargo run --release --example ablation -- [seed]`

use atsdln::bench::{label_split, train_and_score, Protocol, Split};
use atsdln::detectors::GridSet;
use atsdln::net::Variant;

fn main() -> atsdln::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let protocol = Protocol::default();
    let split = Split::new(&protocol, seed)?;
    let data = label_split(&protocol, &split, &GridSet::default())?;
    let test = split.test_series();
    for variant in [Variant::Ns, Variant::Ssr, Variant::Atsdln] {
        let run = train_and_score(&protocol, &data, &test, variant, seed, None)?;
        let log = run.outcome.log.last().unwrap();
        println!(
            "{:<7} params {:>7}  epochs {:>3}  val joint F1 {:.3}  held-out F1 {:.4}",
            variant.name(),
            run.bundle.model.params().values().map(|t| t.len()).sum::<usize>(),
            log.epoch,
            run.outcome.log[run.outcome.best_epoch - 1].val_joint_f1,
            run.test.metrics.f1
        );
    }
    Ok(())
}
