//! Save a model, load it back, and run adaptive detection on a fresh series.

use atsdln::bench::{label_split, Protocol, Split};
use atsdln::detectors::{DetectorContext, GridSet};
use atsdln::net::{train, ModelBundle, TrainConfig, Variant};
use atsdln::series::slide_windows;

fn main() -> atsdln::Result<()> {
    let protocol = Protocol {
        train_series_per_type: 4,
        test_series_per_type: 1,
        ..Protocol::default()
    };
    let split = Split::new(&protocol, 5)?;
    let grids = GridSet::default();
    let data = label_split(&protocol, &split, &grids)?;
    let config = TrainConfig { max_epochs: 5, ..TrainConfig::default() };
    let outcome = train(&data, protocol.spec(&grids, Variant::Atsdln), &config)?;
    let bundle = ModelBundle::new(outcome.model, grids)?;

    let path = std::env::temp_dir().join("atsdln-model.json");
    bundle.save(&path)?;
    let loaded = ModelBundle::load(&path)?;
    assert_eq!(loaded.to_json(), bundle.to_json());
    println!("saved and reloaded {} ({} bytes)", path.display(), std::fs::metadata(&path).unwrap().len());

    let series = &split.test[0].series;
    for w in slide_windows(series, 200, 200)? {
        let ctx = DetectorContext::preceding(&series.values, w.start_index, 200, 3);
        let (result, pred) = loaded.detect_adaptive(&w, &ctx)?;
        println!(
            "window at {:>3}: {} flags {} points (p = {:.2})",
            w.start_index,
            pred.config,
            result.mask.count(),
            pred.p[pred.detector_class]
        );
    }
    Ok(())
}
