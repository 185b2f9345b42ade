//! The majority-vote ensemble under each rule, and across window sizes.

use atsdln::baseline::{VotePool, VoteRule};
use atsdln::bench::window_size_study;
use atsdln::data::{anomaly_corpus, CorpusConfig};
use atsdln::eval::{evaluate_series, Scorer};

fn main() -> atsdln::Result<()> {
    let corpus = anomaly_corpus(&CorpusConfig { series_per_type: 10, ..CorpusConfig::default() }, 42)?;
    let series: Vec<_> = corpus.into_iter().map(|c| c.series).collect();

    for rule in [VoteRule::Absolute, VoteRule::Relative, VoteRule::Weighted] {
        let pool = VotePool {
            rule,
            weights: (rule == VoteRule::Weighted).then(|| vec![2.0, 1.0, 2.0, 1.0, 1.0]),
            ..VotePool::standard()
        };
        let r = evaluate_series(Scorer::Vote(&pool), &series, 200)?;
        println!("{rule:?}: precision {:.3} recall {:.3} f1 {:.4}", r.metrics.precision, r.metrics.recall, r.metrics.f1);
    }

    println!("\nabsolute rule by window size");
    for (w, r) in window_size_study(&VotePool::standard(), &series, &[50, 100, 150, 200])? {
        println!("  {w:>3}: f1 {:.4}  ({} windows)", r.metrics.f1, r.windows);
    }
    Ok(())
}
