//! Versioned JSON model files. Every weight is stored as the lowercase hex of
//! its IEEE-754 bit pattern, 16 characters per value, so a load/save cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchitectureSpec, Model, Params};
use super::tensor::Tensor;
use crate::detectors::{run_detector, DetectionResult, DetectorConfig, DetectorContext, DetectorKind, GridSet};
use crate::error::{Error, Result};
use crate::series::{normalize_window, Window, CONSTANT_STD};
use crate::stats;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    Model,
    BackboneOnly,
}

/// How windows are prepared before they reach the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub method: String,
    pub constant_std: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            method: "per_window_zscore".into(),
            constant_std: CONSTANT_STD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct HexTensor {
    shape: Vec<usize>,
    data: String,
}

impl HexTensor {
    pub(crate) fn encode(t: &Tensor) -> Self {
        let mut data = String::with_capacity(t.len() * 16);
        for v in t.data() {
            data.push_str(&format!("{:016x}", v.to_bits()));
        }
        HexTensor {
            shape: t.shape().to_vec(),
            data,
        }
    }

    pub(crate) fn decode(&self, name: &str) -> Result<Tensor> {
        let bad = |why: &str| Error::Format(format!("tensor `{name}`: {why}"));
        if !self.data.len().is_multiple_of(16) || !self.data.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(bad("data is not lowercase hex in 16-character words"));
        }
        let values = (0..self.data.len() / 16)
            .map(|i| f64::from_bits(u64::from_str_radix(&self.data[i * 16..(i + 1) * 16], 16).unwrap()))
            .collect();
        Tensor::new(self.shape.clone(), values).map_err(|e| bad(&e.to_string()))
    }
}

pub(crate) fn encode_params(params: &Params) -> BTreeMap<String, HexTensor> {
    params.iter().map(|(n, t)| (n.clone(), HexTensor::encode(t))).collect()
}

pub(crate) fn decode_params(weights: &BTreeMap<String, HexTensor>) -> Result<Params> {
    weights.iter().map(|(n, h)| Ok((n.clone(), h.decode(n)?))).collect()
}

#[derive(Deserialize)]
pub(crate) struct Probe {
    pub format_version: u32,
    pub kind: BundleKind,
}

pub(crate) fn check_probe(text: &str, want: BundleKind) -> Result<()> {
    let probe: Probe = serde_json::from_str(text)?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "format_version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            probe.format_version
        )));
    }
    if probe.kind != want {
        return Err(Error::Format(format!("expected a {want:?} file, found {:?}", probe.kind)));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ModelEnvelope {
    format_version: u32,
    kind: BundleKind,
    spec: ArchitectureSpec,
    grids: GridSet,
    fingerprint: String,
    normalization: Normalization,
    weights: BTreeMap<String, HexTensor>,
}

/// One parameter choice for a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub detector_class: usize,
    pub kind: DetectorKind,
    pub param_index: usize,
    /// Flat index over the whole grid set.
    pub combo_index: usize,
    pub config: DetectorConfig,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// A trained network together with the grid its labels came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub model: Model,
    pub grids: GridSet,
    pub normalization: Normalization,
}

impl ModelBundle {
    pub fn new(model: Model, grids: GridSet) -> Result<Self> {
        let spec = model.spec();
        if spec.param_widths != grids.widths() {
            return Err(Error::Shape(format!(
                "model parameter widths {:?} do not match grid widths {:?}",
                spec.param_widths,
                grids.widths()
            )));
        }
        Ok(ModelBundle {
            model,
            grids,
            normalization: Normalization::default(),
        })
    }

    pub fn fingerprint(&self) -> String {
        self.grids.fingerprint()
    }

    pub fn to_json(&self) -> String {
        let env = ModelEnvelope {
            format_version: MODEL_FORMAT_VERSION,
            kind: BundleKind::Model,
            spec: self.model.spec().clone(),
            grids: self.grids.clone(),
            fingerprint: self.fingerprint(),
            normalization: self.normalization.clone(),
            weights: encode_params(self.model.params()),
        };
        serde_json::to_string_pretty(&env).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        check_probe(text, BundleKind::Model)?;
        let env: ModelEnvelope = serde_json::from_str(text)?;
        if env.grids.fingerprint() != env.fingerprint {
            return Err(Error::Format("grid fingerprint does not match the stored grids".into()));
        }
        let model = Model::from_params(env.spec, decode_params(&env.weights)?)?;
        let mut bundle = ModelBundle::new(model, env.grids)?;
        bundle.normalization = env.normalization;
        Ok(bundle)
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

    /// Detector and parameters for each window. Raw windows are normalized
    /// first. The detector is `argmax p` and the parameters `argmax q` under
    /// that detector's mask; ties go to the lower index.
    pub fn predict_batch(&self, windows: &[Window]) -> Result<Vec<Prediction>> {
        let spec = self.model.spec();
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(64) {
            let mut data = Vec::with_capacity(chunk.len() * spec.channels_in * spec.input_length);
            for w in chunk {
                if w.len() != spec.input_length {
                    return Err(Error::LengthMismatch {
                        expected: spec.input_length,
                        actual: w.len(),
                    });
                }
                let norm;
                let values = if w.normalized {
                    &w.values
                } else {
                    norm = normalize_window(w);
                    &norm.values
                };
                for _ in 0..spec.channels_in {
                    data.extend_from_slice(values);
                }
            }
            let x = Tensor::new(vec![chunk.len(), spec.channels_in, spec.input_length], data)?;
            let (heads, cache) = self.model.forward(&x, None, super::model::BnMode::Running)?;
            let (d, wmax) = (spec.num_detectors, spec.max_param_width);
            for i in 0..chunk.len() {
                let class = cache.selected[i];
                let q = heads.q.data()[i * wmax..(i + 1) * wmax].to_vec();
                let param = stats::argmax(&q[..spec.param_widths[class]]);
                out.push(Prediction {
                    detector_class: class,
                    kind: self.grids.grid(class).kind(),
                    param_index: param,
                    combo_index: self.grids.flat_index(class, param),
                    config: self.grids.config(class, param).clone(),
                    p: heads.p.data()[i * d..(i + 1) * d].to_vec(),
                    q,
                });
            }
        }
        Ok(out)
    }

    pub fn predict(&self, window: &Window) -> Result<Prediction> {
        Ok(self.predict_batch(std::slice::from_ref(window))?.remove(0))
    }

    /// Chooses a configuration for the raw window and runs it.
    pub fn detect_adaptive(&self, window: &Window, context: &DetectorContext) -> Result<(DetectionResult, Prediction)> {
        if window.normalized {
            return Err(Error::param("window", "detection needs the raw, unnormalized values"));
        }
        let pred = self.predict(window)?;
        let result = run_detector(&pred.config, window, context)?;
        Ok((result, pred))
    }
}
