//! Train the selection network on oracle labels and compare it with every
//! single fixed combo and with the voting pool on held-out series.
//!
//! `cargo run --release --example train_selector -- [seed]`

use atsdln::baseline::VotePool;
use atsdln::bench::{best_row, combo_sweep, label_split, train_and_score, Protocol, Split};
use atsdln::eval::{evaluate_series, Scorer};
use atsdln::net::Variant;

fn main() -> atsdln::Result<()> {
    env_logger::init();
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let protocol = Protocol::default();
    let split = Split::new(&protocol, seed)?;
    let grids = atsdln::detectors::GridSet::default();
    let data = label_split(&protocol, &split, &grids)?;
    println!("{} training windows, detector classes {:?}", data.len(), data.class_counts);

    let test = split.test_series();
    let run = train_and_score(&protocol, &data, &test, Variant::Atsdln, seed, None)?;
    println!(
        "trained {} epochs, best checkpoint at epoch {}",
        run.outcome.log.len(),
        run.outcome.best_epoch
    );

    let sweep = combo_sweep(&grids, &test, protocol.window_size)?;
    let best = best_row(&sweep).unwrap();
    let vote = evaluate_series(Scorer::Vote(&VotePool::standard()), &test, protocol.window_size)?;
    println!("held-out F1");
    println!("  adaptive            {:.4}", run.test.metrics.f1);
    println!("  best single combo   {:.4}  {}", best.metrics.f1, best.params);
    println!("  voting pool         {:.4}", vote.metrics.f1);
    Ok(())
}
