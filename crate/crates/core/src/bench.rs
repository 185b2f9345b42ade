//! The synthetic benchmark protocol shared by the comparison experiments:
//! corpus split, training, held-out scoring, the per-combo sweep and the
//! window-size study.

use serde::{Deserialize, Serialize};

use crate::baseline::VotePool;
use crate::data::{anomaly_corpus, CorpusConfig, CorpusSeries};
use crate::detectors::GridSet;
use crate::error::{Error, Result};
use crate::eval::{best_single_combo, evaluate_all_combos, evaluate_series, EvalResult, Scorer};
use crate::metrics::{ConfusionCounts, MetricReport};
use crate::net::{train_model, ArchitectureSpec, FreezeSchedule, Model, ModelBundle, TrainConfig, TrainOutcome, Variant};
use crate::oracle::{build_dataset, LabeledDataset};
use crate::series::TimeSeries;
use crate::transfer::{pretrain_backbone, shape_source, transplant, BackboneWeights, PretrainOutcome, SourceShape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub train_series_per_type: usize,
    pub test_series_per_type: usize,
    /// The test corpus is drawn with `seed + test_seed_offset`.
    pub test_seed_offset: u64,
    pub window_size: usize,
    pub train_stride: usize,
    /// Scale-down filters 32/64/32 instead of 128/256/128.
    pub desk: bool,
    pub train: TrainConfig,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            train_series_per_type: 20,
            test_series_per_type: 10,
            test_seed_offset: 10_000,
            window_size: 200,
            train_stride: 100,
            desk: true,
            train: TrainConfig {
                max_epochs: 60,
                early_stop_patience: 15,
                ..TrainConfig::default()
            },
        }
    }
}

impl Protocol {
    pub fn spec(&self, grids: &GridSet, variant: Variant) -> ArchitectureSpec {
        if self.desk {
            ArchitectureSpec::desk(grids, self.window_size, variant)
        } else {
            ArchitectureSpec::standard(grids, self.window_size, variant)
        }
    }

    fn corpus(&self, per_type: usize, seed: u64) -> Result<Vec<CorpusSeries>> {
        let cfg = CorpusConfig {
            series_per_type: per_type,
            window_size: self.window_size,
            ..CorpusConfig::default()
        };
        anomaly_corpus(&cfg, seed)
    }
}

/// Training and held-out series for one seed.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<CorpusSeries>,
    pub test: Vec<CorpusSeries>,
}

impl Split {
    pub fn new(protocol: &Protocol, seed: u64) -> Result<Self> {
        Ok(Split {
            train: protocol.corpus(protocol.train_series_per_type, seed)?,
            test: protocol.corpus(protocol.test_series_per_type, seed + protocol.test_seed_offset)?,
        })
    }

    pub fn train_series(&self) -> Vec<TimeSeries> {
        self.train.iter().map(|c| c.series.clone()).collect()
    }

    pub fn test_series(&self) -> Vec<TimeSeries> {
        self.test.iter().map(|c| c.series.clone()).collect()
    }
}

/// Oracle-labeled training windows of a split.
pub fn label_split(protocol: &Protocol, split: &Split, grids: &GridSet) -> Result<LabeledDataset> {
    build_dataset(&split.train_series(), protocol.window_size, protocol.train_stride, grids)
}

/// One trained network and its held-out score.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub variant: Variant,
    pub seed: u64,
    pub bundle: ModelBundle,
    pub outcome: TrainOutcome,
    pub test: EvalResult,
}

/// Trains `variant` (optionally from a pretrained backbone) and scores it on
/// the split's test series. The protocol's train seed is replaced by `seed`.
pub fn train_and_score(
    protocol: &Protocol,
    data: &LabeledDataset,
    test: &[TimeSeries],
    variant: Variant,
    seed: u64,
    backbone: Option<&BackboneWeights>,
) -> Result<TrainedRun> {
    let grids = &data.grids;
    let mut model = Model::new(protocol.spec(grids, variant), seed)?;
    if let Some(b) = backbone {
        model = transplant(b, model)?;
    }
    let config = TrainConfig {
        seed,
        ..protocol.train.clone()
    };
    let outcome = train_model(model, data, &config)?;
    let bundle = ModelBundle::new(outcome.model.clone(), grids.clone())?;
    let test = evaluate_series(Scorer::Adaptive(&bundle), test, protocol.window_size)?;
    Ok(TrainedRun {
        variant,
        seed,
        bundle,
        outcome,
        test,
    })
}

/// Pretraining source used by the transfer experiment: four waveform classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub per_class: usize,
    /// Source series length before resampling to the window size.
    pub length: usize,
    pub train: TrainConfig,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            per_class: 100,
            length: 256,
            train: TrainConfig {
                max_epochs: 30,
                validation_fraction: 0.0,
                ..TrainConfig::default()
            },
        }
    }
}

pub fn pretrain_synthetic(protocol: &Protocol, source: &SourceConfig, grids: &GridSet, seed: u64) -> Result<PretrainOutcome> {
    let examples = shape_source(&SourceShape::ALL, source.per_class, source.length, seed);
    let config = TrainConfig {
        seed,
        ..source.train.clone()
    };
    pretrain_backbone(&examples, &protocol.spec(grids, Variant::Atsdln), &config)
}

/// Cold-start and transferred runs for one seed. The transferred run keeps
/// the protocol's freeze schedule unless it is `Never`, in which case the
/// backbone is frozen for the first 10 epochs.
pub fn transfer_pair(
    protocol: &Protocol,
    source: &SourceConfig,
    data: &LabeledDataset,
    test: &[TimeSeries],
    seed: u64,
) -> Result<(TrainedRun, TrainedRun)> {
    let cold = train_and_score(protocol, data, test, Variant::Atsdln, seed, None)?;
    let pre = pretrain_synthetic(protocol, source, &data.grids, seed)?;
    let mut warm_protocol = protocol.clone();
    if warm_protocol.train.freeze == FreezeSchedule::Never {
        warm_protocol.train.freeze = FreezeSchedule::Epochs(10);
    }
    let warm = train_and_score(&warm_protocol, data, test, Variant::Atsdln, seed, Some(&pre.backbone))?;
    Ok((cold, warm))
}

/// One bar group of the per-combo chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboRow {
    pub combo_index: usize,
    pub detector: String,
    pub params: String,
    pub counts: ConfusionCounts,
    pub metrics: MetricReport,
}

/// Every combo of `grids` run alone over `series`.
pub fn combo_sweep(grids: &GridSet, series: &[TimeSeries], window_size: usize) -> Result<Vec<ComboRow>> {
    let per = evaluate_all_combos(grids, series, window_size)?;
    Ok(grids
        .iter_combos()
        .map(|(flat, _, _, cfg)| ComboRow {
            combo_index: flat,
            detector: cfg.kind.name().to_string(),
            params: cfg.to_string(),
            counts: per[flat],
            metrics: per[flat].metrics(),
        })
        .collect())
}

/// Highest-F1 row of a sweep (lowest index on ties).
pub fn best_row(rows: &[ComboRow]) -> Option<&ComboRow> {
    let counts: Vec<ConfusionCounts> = rows.iter().map(|r| r.counts).collect();
    best_single_combo(&counts).map(|(i, _)| &rows[i])
}

/// Voting-baseline score per window size over the same series.
pub fn window_size_study(pool: &VotePool, series: &[TimeSeries], sizes: &[usize]) -> Result<Vec<(usize, EvalResult)>> {
    if sizes.is_empty() {
        return Err(Error::Empty("window sizes".into()));
    }
    sizes
        .iter()
        .map(|&w| Ok((w, evaluate_series(Scorer::Vote(pool), series, w)?)))
        .collect()
}
