//! Backbone pretraining on a time-series classification corpus and transplant
//! into a selection network.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::UcrExample;
use crate::error::{Error, Result};
use crate::net::bundle::{check_probe, decode_params, encode_params, HexTensor, MODEL_FORMAT_VERSION};
use crate::net::model::{backbone_shapes, is_buffer};
use crate::net::{joint_loss, Adam, ArchitectureSpec, BnMode, BundleKind, ConvBlockSpec, Model, Params, Tensor, TrainConfig, Variant};
use crate::series::zscore;
use crate::stats;

/// Linear interpolation of `values` onto `len` evenly spaced points spanning
/// the same interval.
pub fn resample_linear(values: &[f64], len: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("series to resample".into()));
    }
    if len == 0 {
        return Err(Error::param("length", "must be positive"));
    }
    if values.len() == 1 || len == 1 {
        return Ok(vec![values[0]; len]);
    }
    let scale = (values.len() - 1) as f64 / (len - 1) as f64;
    Ok((0..len)
        .map(|i| {
            let x = i as f64 * scale;
            let lo = (x.floor() as usize).min(values.len() - 2);
            let t = x - lo as f64;
            values[lo] * (1.0 - t) + values[lo + 1] * t
        })
        .collect())
}

/// Pretrained convolutional stack, stored under the `backbone.` prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub channels_in: usize,
    pub input_length: usize,
    pub conv_blocks: Vec<ConvBlockSpec>,
    /// Source class labels in the order of the temporary classifier's outputs.
    pub source_classes: Vec<i64>,
    pub params: Params,
}

#[derive(Serialize, Deserialize)]
struct BackboneEnvelope {
    format_version: u32,
    kind: BundleKind,
    channels_in: usize,
    input_length: usize,
    conv_blocks: Vec<ConvBlockSpec>,
    source_classes: Vec<i64>,
    weights: BTreeMap<String, HexTensor>,
}

impl BackboneWeights {
    pub fn to_json(&self) -> String {
        let env = BackboneEnvelope {
            format_version: MODEL_FORMAT_VERSION,
            kind: BundleKind::BackboneOnly,
            channels_in: self.channels_in,
            input_length: self.input_length,
            conv_blocks: self.conv_blocks.clone(),
            source_classes: self.source_classes.clone(),
            weights: encode_params(&self.params),
        };
        serde_json::to_string_pretty(&env).expect("backbone serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        check_probe(text, BundleKind::BackboneOnly)?;
        let env: BackboneEnvelope = serde_json::from_str(text)?;
        let params = decode_params(&env.weights)?;
        let expected = backbone_shapes("backbone", env.channels_in, &env.conv_blocks);
        let wrong: Vec<String> = expected
            .iter()
            .filter(|(n, s)| params.get(n).map(|t| t.shape()) != Some(s.as_slice()))
            .map(|(n, _)| n.clone())
            .chain(params.keys().filter(|n| !expected.iter().any(|(e, _)| e == *n)).cloned())
            .collect();
        if !wrong.is_empty() {
            return Err(Error::IncompatibleTensors { names: wrong });
        }
        Ok(BackboneWeights {
            channels_in: env.channels_in,
            input_length: env.input_length,
            conv_blocks: env.conv_blocks,
            source_classes: env.source_classes,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Pooled features in inference mode, computed by a throwaway model that
    /// carries only this backbone.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut model = Model::new(self.classifier_spec(1), 0)?;
        for (n, t) in &self.params {
            model.params_mut().insert(n.clone(), t.clone());
        }
        model.features(x)
    }

    fn classifier_spec(&self, classes: usize) -> ArchitectureSpec {
        classifier_spec(self.channels_in, self.input_length, &self.conv_blocks, classes)
    }
}

fn classifier_spec(channels_in: usize, input_length: usize, blocks: &[ConvBlockSpec], classes: usize) -> ArchitectureSpec {
    ArchitectureSpec {
        channels_in,
        input_length,
        conv_blocks: blocks.to_vec(),
        detector_head_hidden: 64,
        param_head_hidden: 1,
        num_detectors: classes,
        param_widths: vec![1; classes],
        max_param_width: 1,
        variant: Variant::Ssr,
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub backbone: BackboneWeights,
    /// Source training accuracy after each epoch.
    pub accuracy_log: Vec<f64>,
}

impl PretrainOutcome {
    pub fn final_accuracy(&self) -> f64 {
        self.accuracy_log.last().copied().unwrap_or(0.0)
    }
}

/// Trains `spec`'s backbone under a temporary softmax classifier on the source
/// labels and returns the backbone alone. Every series is resampled to the
/// target window length and z-scored. Training stops after `max_epochs` or
/// once the source set is classified perfectly.
pub fn pretrain_backbone(source: &[UcrExample], spec: &ArchitectureSpec, config: &TrainConfig) -> Result<PretrainOutcome> {
    config.validate()?;
    let classes: Vec<i64> = {
        let mut c: Vec<i64> = source.iter().map(|e| e.class).collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    if classes.len() < 2 {
        return Err(Error::param(
            "source",
            format!("needs at least 2 classes, found {}", classes.len()),
        ));
    }
    let len = spec.input_length;
    let ch = spec.channels_in;
    let inputs: Vec<Vec<f64>> = source
        .iter()
        .map(|e| Ok(zscore(&resample_linear(&e.values, len)?)))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = source.iter().map(|e| classes.binary_search(&e.class).unwrap()).collect();
    let batch = |idx: &[usize]| {
        let mut data = Vec::with_capacity(idx.len() * ch * len);
        for &i in idx {
            for _ in 0..ch {
                data.extend_from_slice(&inputs[i]);
            }
        }
        Tensor::new(vec![idx.len(), ch, len], data).unwrap()
    };

    let cspec = classifier_spec(ch, len, &spec.conv_blocks, classes.len());
    let mut model = Model::new(cspec.clone(), config.seed)?;
    let mut adam = Adam::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..source.len()).collect();
    let all: Vec<usize> = order.clone();
    let mut accuracy_log = Vec::new();
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (out, cache) = model.forward(&batch(chunk), Some(&y), BnMode::Batch)?;
            let zeros = vec![0; y.len()];
            let l = joint_loss(&out, &y, &zeros, &cspec.param_widths, 0.0, None)?;
            if !l.loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: bi,
                    detail: "source classification".into(),
                });
            }
            let mut grads = model.zero_grads();
            model.backward(&cache, &l.d_det_logits, &l.d_param_logits, &mut grads, true);
            adam.step(model.params_mut(), &grads, |n| !is_buffer(n));
            if config.learning_rate > 0.0 {
                model.update_running_stats(&cache, config.bn_momentum);
            }
        }
        let mut correct = 0usize;
        for chunk in all.chunks(config.batch_size.max(64)) {
            let (out, _) = model.forward(&batch(chunk), None, BnMode::Running)?;
            let k = classes.len();
            for (j, &i) in chunk.iter().enumerate() {
                correct += usize::from(stats::argmax(&out.p.data()[j * k..(j + 1) * k]) == labels[i]);
            }
        }
        let acc = correct as f64 / source.len() as f64;
        log::debug!("pretrain epoch {} accuracy {acc}", epoch + 1);
        accuracy_log.push(acc);
        if acc == 1.0 {
            break;
        }
    }
    let params = model
        .params()
        .iter()
        .filter(|(n, _)| n.starts_with("backbone."))
        .map(|(n, t)| (n.clone(), t.clone()))
        .collect();
    Ok(PretrainOutcome {
        backbone: BackboneWeights {
            channels_in: ch,
            input_length: len,
            conv_blocks: spec.conv_blocks.clone(),
            source_classes: classes,
            params,
        },
        accuracy_log,
    })
}

/// Copies the backbone into `model` (both backbones for the unshared variant);
/// heads are left as they are. Every tensor whose shape disagrees is named in
/// the error. Freezing is a training choice, see `TrainConfig::freeze`.
pub fn transplant(backbone: &BackboneWeights, mut model: Model) -> Result<Model> {
    let prefixes = model.spec().backbones();
    let rename = |prefix: &str, name: &str| format!("{prefix}{}", &name["backbone".len()..]);
    let mut wrong = Vec::new();
    for prefix in prefixes {
        for (name, tensor) in &backbone.params {
            let target = rename(prefix, name);
            if model.params().get(&target).map(|t| t.shape()) != Some(tensor.shape()) {
                wrong.push(target);
            }
        }
        let own = format!("{prefix}.");
        wrong.extend(
            model
                .params()
                .keys()
                .filter(|n| n.starts_with(&own) && !backbone.params.contains_key(&format!("backbone{}", &n[prefix.len()..])))
                .cloned(),
        );
    }
    if !wrong.is_empty() {
        return Err(Error::IncompatibleTensors { names: wrong });
    }
    for prefix in prefixes {
        for (name, tensor) in &backbone.params {
            model.params_mut().insert(rename(prefix, name), tensor.clone());
        }
    }
    Ok(model)
}

/// Waveform families for a synthetic pretraining source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceShape {
    Sine,
    Square,
    Sawtooth,
    Triangle,
}

impl SourceShape {
    pub const ALL: [SourceShape; 4] = [SourceShape::Sine, SourceShape::Square, SourceShape::Sawtooth, SourceShape::Triangle];

    fn value(self, phase: f64) -> f64 {
        let u = phase.rem_euclid(1.0);
        match self {
            SourceShape::Sine => (2.0 * PI * u).sin(),
            SourceShape::Square => {
                if u < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            SourceShape::Sawtooth => 2.0 * u - 1.0,
            SourceShape::Triangle => 1.0 - 4.0 * (u - 0.5).abs(),
        }
    }
}

/// A labeled classification corpus: `per_class` noisy series of each shape
/// with random period in [16, 64), phase and amplitude. Class labels are the
/// positions in `shapes`.
pub fn shape_source(shapes: &[SourceShape], per_class: usize, length: usize, seed: u64) -> Vec<UcrExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut out = Vec::with_capacity(shapes.len() * per_class);
    for _ in 0..per_class {
        for (class, &shape) in shapes.iter().enumerate() {
            let period = rng.gen_range(16.0..64.0);
            let phase = rng.gen_range(0.0..1.0);
            let amp = rng.gen_range(0.5..2.0);
            let values = (0..length)
                .map(|t| amp * shape.value(t as f64 / period + phase) + noise.sample(&mut rng))
                .collect();
            out.push(UcrExample {
                class: class as i64,
                values,
            });
        }
    }
    out
}
