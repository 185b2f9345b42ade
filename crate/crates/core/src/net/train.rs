//! Mini-batch training with a stratified validation split and early stopping
//! on validation joint F1.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers;
use super::model::{is_backbone, is_buffer, joint_loss, ArchitectureSpec, BnMode, Model};
use super::optim::Adam;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::oracle::{LabeledDataset, SupervisedExample};
use crate::stats;

/// When the backbone is held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeSchedule {
    Never,
    /// Frozen for the first `n` epochs.
    Epochs(usize),
    Always,
}

impl FreezeSchedule {
    /// `epoch` counts from 0.
    pub fn frozen(self, epoch: usize) -> bool {
        match self {
            FreezeSchedule::Never => false,
            FreezeSchedule::Epochs(n) => epoch < n,
            FreezeSchedule::Always => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub loss_weight_lambda: f64,
    pub seed: u64,
    /// Share of each detector class held out for validation; 0 trains on
    /// everything and monitors the training set instead.
    pub validation_fraction: f64,
    pub bn_momentum: f64,
    pub freeze: FreezeSchedule,
    /// Weight the detector term by inverse class frequency.
    pub class_weighting: bool,
    /// Score the training set after every epoch (inference mode).
    pub track_train_accuracy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 10,
            loss_weight_lambda: 1.0,
            seed: 0,
            validation_fraction: 0.2,
            bn_momentum: 0.1,
            freeze: FreezeSchedule::Never,
            class_weighting: false,
            track_train_accuracy: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push("learning_rate must be a nonnegative number".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if self.max_epochs == 0 {
            problems.push("max_epochs must be positive".into());
        }
        if !(self.loss_weight_lambda >= 0.0) {
            problems.push("loss_weight_lambda must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            problems.push("validation_fraction must lie in [0, 1)".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            problems.push("bn_momentum must lie in (0, 1]".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_joint_f1: f64,
    pub val_detector_accuracy: f64,
    pub train_detector_accuracy: Option<f64>,
    pub train_joint_accuracy: Option<f64>,
    pub backbone_frozen: bool,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_joint_f1,val_detector_accuracy,train_detector_accuracy,train_joint_accuracy,backbone_frozen";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.val_loss,
            self.val_joint_f1,
            self.val_detector_accuracy,
            opt(self.train_detector_accuracy),
            opt(self.train_joint_accuracy),
            self.backbone_frozen
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best checkpoint by the monitored metric.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl TrainOutcome {
    /// First epoch whose training detector accuracy reaches `level`.
    pub fn epochs_to_train_accuracy(&self, level: f64) -> Option<usize> {
        self.log
            .iter()
            .find(|e| e.train_detector_accuracy.is_some_and(|a| a >= level))
            .map(|e| e.epoch)
    }
}

/// Aggregate scores of a model on a set of examples, inference mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalStats {
    /// Joint loss with the parameter mask of the true detector.
    pub loss: f64,
    pub detector_accuracy: f64,
    pub joint_accuracy: f64,
    pub joint_macro_f1: f64,
    /// Per-class F1 weighted by true support; the early-stopping monitor.
    pub joint_f1: f64,
}

fn class_f1(truth: &[usize], pred: &[usize], c: usize) -> f64 {
    let tp = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p == c).count() as f64;
    let fp = truth.iter().zip(pred).filter(|(&t, &p)| t != c && p == c).count() as f64;
    let fn_ = truth.iter().zip(pred).filter(|(&t, &p)| t == c && p != c).count() as f64;
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

/// Per-class F1 averaged over every class that occurs in `truth` or `pred`.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> f64 {
    let classes: BTreeSet<usize> = truth.iter().chain(pred).copied().collect();
    if classes.is_empty() {
        return 0.0;
    }
    classes.iter().map(|&c| class_f1(truth, pred, c)).sum::<f64>() / classes.len() as f64
}

/// Per-class F1 weighted by each class's share of `truth`.
pub fn weighted_f1(truth: &[usize], pred: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let classes: BTreeSet<usize> = truth.iter().copied().collect();
    let n = truth.len() as f64;
    classes
        .iter()
        .map(|&c| truth.iter().filter(|&&t| t == c).count() as f64 / n * class_f1(truth, pred, c))
        .sum()
}

pub(crate) fn batch_input(examples: &[&SupervisedExample], channels: usize) -> Tensor {
    let len = examples[0].window.values.len();
    let mut data = Vec::with_capacity(examples.len() * channels * len);
    for e in examples {
        for _ in 0..channels {
            data.extend_from_slice(&e.window.values);
        }
    }
    Tensor::new(vec![examples.len(), channels, len], data).unwrap()
}

/// Scores `model` on `examples` in inference mode, batching by `batch_size`.
pub fn evaluate(model: &Model, examples: &[&SupervisedExample], lambda: f64, batch_size: usize) -> Result<EvalStats> {
    if examples.is_empty() {
        return Ok(EvalStats::default());
    }
    let spec = model.spec();
    let widths = &spec.param_widths;
    let (mut loss, mut det_ok, mut joint_ok) = (0.0, 0usize, 0usize);
    let mut truth = Vec::with_capacity(examples.len());
    let mut pred = Vec::with_capacity(examples.len());
    let flat = |d: usize, q: usize| widths[..d].iter().sum::<usize>() + q;
    for chunk in examples.chunks(batch_size.max(1)) {
        let x = batch_input(chunk, spec.channels_in);
        let (out, cache) = model.forward(&x, None, BnMode::Running)?;
        let logits = cache.param_logits();
        let (d, w) = (spec.num_detectors, spec.max_param_width);
        for (i, e) in chunk.iter().enumerate() {
            let p = &out.p.data()[i * d..(i + 1) * d];
            let q_pred = &out.q.data()[i * w..(i + 1) * w];
            let pd = cache.selected[i];
            let pq = stats::argmax(&q_pred[..widths[pd]]);
            let q_true = layers::masked_softmax(&logits.data()[i * w..(i + 1) * w], widths[e.detector_label]);
            loss += -p[e.detector_label].max(f64::MIN_POSITIVE).ln()
                - lambda * q_true[e.param_label].max(f64::MIN_POSITIVE).ln();
            det_ok += usize::from(pd == e.detector_label);
            joint_ok += usize::from(pd == e.detector_label && pq == e.param_label);
            truth.push(flat(e.detector_label, e.param_label));
            pred.push(flat(pd, pq));
        }
    }
    let n = examples.len() as f64;
    Ok(EvalStats {
        loss: loss / n,
        detector_accuracy: det_ok as f64 / n,
        joint_accuracy: joint_ok as f64 / n,
        joint_macro_f1: macro_f1(&truth, &pred),
        joint_f1: weighted_f1(&truth, &pred),
    })
}

/// Per detector class, `round(fraction * n_c)` examples go to validation (at
/// least one stays in training).
pub fn stratified_split(data: &LabeledDataset, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..data.grids.num_detectors() {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.examples[i].detector_label == class).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

pub fn train(data: &LabeledDataset, spec: ArchitectureSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    let model = Model::new(spec, config.seed)?;
    train_model(model, data, config)
}

/// Trains an existing model (for example one carrying a transplanted backbone).
pub fn train_model(mut model: Model, data: &LabeledDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training dataset".into()));
    }
    let spec = model.spec().clone();
    if data.window_size != spec.input_length {
        return Err(Error::LengthMismatch {
            expected: spec.input_length,
            actual: data.window_size,
        });
    }
    if data.grids.widths() != spec.param_widths {
        return Err(Error::Shape(format!(
            "dataset grid widths {:?} do not match the model's {:?}",
            data.grids.widths(),
            spec.param_widths
        )));
    }
    if data.class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        log::warn!("training data holds a single detector class");
    }
    let (train_idx, val_idx) = stratified_split(data, config.validation_fraction, config.seed);
    let train_set: Vec<&SupervisedExample> = train_idx.iter().map(|&i| &data.examples[i]).collect();
    let val_set: Vec<&SupervisedExample> = val_idx.iter().map(|&i| &data.examples[i]).collect();
    let weights = config.class_weighting.then(|| data.inverse_frequency_weights());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, f64, Model, usize)> = None;
    let mut since_best = 0usize;
    for epoch in 0..config.max_epochs {
        let frozen = config.freeze.frozen(epoch);
        let bn_mode = if frozen { BnMode::Running } else { BnMode::Batch };
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&SupervisedExample> = chunk.iter().map(|&i| train_set[i]).collect();
            let x = batch_input(&batch, spec.channels_in);
            let det: Vec<usize> = batch.iter().map(|e| e.detector_label).collect();
            let par: Vec<usize> = batch.iter().map(|e| e.param_label).collect();
            let (out, cache) = model.forward(&x, Some(&det), bn_mode)?;
            let l = joint_loss(&out, &det, &par, &spec.param_widths, config.loss_weight_lambda, weights.as_deref())?;
            if !l.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: bi,
                    detail: format!("detector term {}, parameter term {}", l.detector_term, l.param_term),
                });
            }
            loss_sum += l.loss * batch.len() as f64;
            let mut grads = model.zero_grads();
            model.backward(&cache, &l.d_det_logits, &l.d_param_logits, &mut grads, !frozen);
            adam.step(model.params_mut(), &grads, |n| !is_buffer(n) && !(frozen && is_backbone(n)));
            if !frozen && config.learning_rate > 0.0 {
                model.update_running_stats(&cache, config.bn_momentum);
            }
        }
        let lambda = config.loss_weight_lambda;
        let train_stats = if config.track_train_accuracy || val_set.is_empty() {
            Some(evaluate(&model, &train_set, lambda, config.batch_size)?)
        } else {
            None
        };
        let monitored = if val_set.is_empty() {
            train_stats.unwrap()
        } else {
            evaluate(&model, &val_set, lambda, config.batch_size)?
        };
        let entry = EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: monitored.loss,
            val_joint_f1: monitored.joint_f1,
            val_detector_accuracy: monitored.detector_accuracy,
            train_detector_accuracy: train_stats.map(|s| s.detector_accuracy),
            train_joint_accuracy: train_stats.map(|s| s.joint_accuracy),
            backbone_frozen: frozen,
        };
        log::debug!("{}", entry.csv_row());
        log.push(entry);
        // higher F1 wins; equal F1 falls back to lower loss
        let improved = match &best {
            None => true,
            Some((f1, loss, _, _)) => {
                monitored.joint_f1 > *f1 || (monitored.joint_f1 == *f1 && monitored.loss < *loss)
            }
        };
        if improved {
            best = Some((monitored.joint_f1, monitored.loss, model.clone(), epoch + 1));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.early_stop_patience {
                break;
            }
        }
    }
    let (_, _, model, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}
