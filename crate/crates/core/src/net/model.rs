//! The two-head classifier: convolutional backbone, detector head `p(x)` and a
//! masked parameter head `q(x)` whose valid width follows the chosen detector.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::{self, BatchStats, BnCache, ConvCache};
use super::tensor::Tensor;
use crate::detectors::GridSet;
use crate::error::{Error, Result};

/// How the parameter head is wired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// No sharing: the parameter head has its own backbone.
    Ns,
    /// The backbone output feeds both heads.
    Ssr,
    /// As `Ssr`, plus the detector head's hidden layer feeds the parameter head.
    Atsdln,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Ns, Variant::Ssr, Variant::Atsdln];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ns => "ns",
            Variant::Ssr => "ssr",
            Variant::Atsdln => "atsdln",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name.to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlockSpec {
    pub filters: usize,
    pub kernel_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub channels_in: usize,
    pub input_length: usize,
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub detector_head_hidden: usize,
    pub param_head_hidden: usize,
    pub num_detectors: usize,
    /// Valid parameter-head entries per detector class.
    pub param_widths: Vec<usize>,
    pub max_param_width: usize,
    pub variant: Variant,
}

impl ArchitectureSpec {
    fn with_blocks(grids: &GridSet, input_length: usize, filters: [usize; 3], variant: Variant) -> Self {
        let conv_blocks = filters
            .iter()
            .zip([8, 5, 3])
            .map(|(&filters, kernel_size)| ConvBlockSpec { filters, kernel_size })
            .collect();
        ArchitectureSpec {
            channels_in: 1,
            input_length,
            conv_blocks,
            detector_head_hidden: 64,
            param_head_hidden: 64,
            num_detectors: grids.num_detectors(),
            param_widths: grids.widths(),
            max_param_width: grids.max_width(),
            variant,
        }
    }

    /// Three blocks of 128/256/128 filters with kernels 8/5/3.
    pub fn standard(grids: &GridSet, input_length: usize, variant: Variant) -> Self {
        Self::with_blocks(grids, input_length, [128, 256, 128], variant)
    }

    /// The same shape at 32/64/32 filters.
    pub fn desk(grids: &GridSet, input_length: usize, variant: Variant) -> Self {
        Self::with_blocks(grids, input_length, [32, 64, 32], variant)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.channels_in == 0 {
            problems.push("channels_in must be positive".to_string());
        }
        if self.conv_blocks.is_empty() {
            problems.push("conv_blocks is empty".into());
        }
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.filters == 0 || b.kernel_size == 0 {
                problems.push(format!("conv_blocks[{i}] needs positive filters and kernel_size"));
            }
            if b.kernel_size > self.input_length {
                problems.push(format!("conv_blocks[{i}] kernel {} exceeds input length {}", b.kernel_size, self.input_length));
            }
        }
        if self.detector_head_hidden == 0 || self.param_head_hidden == 0 {
            problems.push("head hidden sizes must be positive".into());
        }
        if self.num_detectors == 0 || self.param_widths.len() != self.num_detectors {
            problems.push(format!(
                "{} parameter widths for {} detectors",
                self.param_widths.len(),
                self.num_detectors
            ));
        }
        if self.param_widths.contains(&0) {
            problems.push("every detector needs at least one parameter combo".into());
        }
        if self.param_widths.iter().copied().max() != Some(self.max_param_width) {
            problems.push("max_param_width must equal the largest parameter width".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config { problems })
        }
    }

    pub fn feature_width(&self) -> usize {
        self.conv_blocks.last().map_or(0, |b| b.filters)
    }

    /// Input width of the parameter head's hidden layer.
    pub fn param_input_width(&self) -> usize {
        match self.variant {
            Variant::Atsdln => self.feature_width() + self.detector_head_hidden,
            Variant::Ns | Variant::Ssr => self.feature_width(),
        }
    }

    /// Backbone name prefixes present in this architecture.
    pub fn backbones(&self) -> &'static [&'static str] {
        match self.variant {
            Variant::Ns => &["backbone", "param_backbone"],
            _ => &["backbone"],
        }
    }

    /// Every tensor name with its shape, in a fixed order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for prefix in self.backbones() {
            out.extend(backbone_shapes(prefix, self.channels_in, &self.conv_blocks));
        }
        let f = self.feature_width();
        let dense = |out: &mut Vec<(String, Vec<usize>)>, name: &str, n_out: usize, n_in: usize| {
            out.push((format!("{name}.weight"), vec![n_out, n_in]));
            out.push((format!("{name}.bias"), vec![n_out]));
        };
        dense(&mut out, "detector_head.hidden", self.detector_head_hidden, f);
        dense(&mut out, "detector_head.out", self.num_detectors, self.detector_head_hidden);
        dense(&mut out, "param_head.hidden", self.param_head_hidden, self.param_input_width());
        dense(&mut out, "param_head.out", self.max_param_width, self.param_head_hidden);
        out
    }
}

pub(crate) fn backbone_shapes(prefix: &str, channels_in: usize, blocks: &[ConvBlockSpec]) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut ch = channels_in;
    for (i, b) in blocks.iter().enumerate() {
        let p = format!("{prefix}.block{i}");
        out.push((format!("{p}.conv.weight"), vec![b.filters, ch, b.kernel_size]));
        out.push((format!("{p}.conv.bias"), vec![b.filters]));
        for s in ["gamma", "beta", "running_mean", "running_var"] {
            out.push((format!("{p}.bn.{s}"), vec![b.filters]));
        }
        ch = b.filters;
    }
    out
}

/// Running statistics are state, not trainable parameters.
pub fn is_buffer(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

pub fn is_backbone(name: &str) -> bool {
    name.starts_with("backbone.") || name.starts_with("param_backbone.")
}

pub(crate) fn tensor_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(name.as_bytes()).finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Fresh value for one named tensor: He-normal weights with fan-in scaling,
/// zero biases and shifts, unit scales and running variances.
pub(crate) fn init_tensor(seed: u64, name: &str, shape: &[usize]) -> Tensor {
    if name.ends_with(".gamma") || name.ends_with(".running_var") {
        return Tensor::filled(shape, 1.0);
    }
    if !name.ends_with(".weight") {
        return Tensor::zeros(shape);
    }
    let fan_in: usize = shape[1..].iter().product();
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(tensor_seed(seed, name));
    let data = (0..shape.iter().product()).map(|_| normal.sample(&mut rng)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub type Params = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ArchitectureSpec,
    params: Params,
}

/// Batch-norm behaviour for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics (training).
    Batch,
    /// Running statistics (inference, or a frozen backbone).
    Running,
}

struct BlockCache {
    conv: ConvCache,
    bn: BnCache,
    out: Tensor,
    stats: Option<BatchStats>,
}

struct BackboneCache {
    blocks: Vec<BlockCache>,
    length: usize,
}

pub struct ForwardCache {
    backbone: BackboneCache,
    param_backbone: Option<BackboneCache>,
    features: Tensor,
    det_hidden: Tensor,
    param_input: Tensor,
    param_hidden: Tensor,
    param_logits: Tensor,
    /// Detector class that selected each row's parameter mask.
    pub selected: Vec<usize>,
}

impl ForwardCache {
    /// Unmasked parameter-head logits `[B, max_param_width]`.
    pub fn param_logits(&self) -> &Tensor {
        &self.param_logits
    }
}

/// Head outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    /// `[B, num_detectors]` probabilities.
    pub p: Tensor,
    /// `[B, max_param_width]` masked probabilities.
    pub q: Tensor,
    /// `[B, detector_head_hidden]` post-rectifier activations.
    pub hidden_d: Tensor,
}

impl Model {
    pub fn new(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let t = init_tensor(seed, &name, &shape);
                (name, t)
            })
            .collect();
        Ok(Model { spec, params })
    }

    /// Rebuilds a model from stored tensors; names and shapes must match `spec`
    /// exactly.
    pub fn from_params(spec: ArchitectureSpec, params: Params) -> Result<Self> {
        spec.validate()?;
        let expected = spec.tensor_shapes();
        let mut problems = Vec::new();
        for (name, shape) in &expected {
            match params.get(name) {
                None => problems.push(format!("missing tensor `{name}`")),
                Some(t) if t.shape() != shape.as_slice() => {
                    problems.push(format!("`{name}` has shape {:?}, expected {shape:?}", t.shape()))
                }
                _ => {}
            }
        }
        for name in params.keys() {
            if !expected.iter().any(|(n, _)| n == name) {
                problems.push(format!("unexpected tensor `{name}`"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Format(problems.join("; ")));
        }
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> &Tensor {
        &self.params[name]
    }

    /// Zeroed tensors for every trainable parameter.
    pub fn zero_grads(&self) -> Params {
        self.params
            .iter()
            .filter(|(n, _)| !is_buffer(n))
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 3 || s[1] != self.spec.channels_in || s[2] != self.spec.input_length || s[0] == 0 {
            return Err(Error::Shape(format!(
                "input {s:?} does not match [batch, {}, {}]",
                self.spec.channels_in, self.spec.input_length
            )));
        }
        Ok(())
    }

    fn backbone_forward(&self, prefix: &str, x: &Tensor, bn: BnMode) -> (Tensor, BackboneCache) {
        let mut h = x.clone();
        let mut blocks = Vec::with_capacity(self.spec.conv_blocks.len());
        for i in 0..self.spec.conv_blocks.len() {
            let p = |s: &str| &self.params[&format!("{prefix}.block{i}.{s}")];
            let (c, conv) = layers::conv1d_forward(&h, p("conv.weight"), p("conv.bias"));
            let running = (bn == BnMode::Running).then(|| (p("bn.running_mean"), p("bn.running_var")));
            let (b, bn_cache, stats) = layers::batchnorm_forward(&c, p("bn.gamma"), p("bn.beta"), running);
            h = layers::relu_forward(&b);
            blocks.push(BlockCache {
                conv,
                bn: bn_cache,
                out: h.clone(),
                stats,
            });
        }
        let features = layers::gap_forward(&h);
        (
            features,
            BackboneCache {
                blocks,
                length: x.dim(2),
            },
        )
    }

    /// Pooled backbone features `[B, feature_width]`, inference mode.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        Ok(self.backbone_forward("backbone", x, BnMode::Running).0)
    }

    fn dense(&self, name: &str, x: &Tensor) -> Tensor {
        layers::dense_forward(x, &self.params[&format!("{name}.weight")], &self.params[&format!("{name}.bias")])
    }

    /// Full forward pass. With `true_detectors` the parameter mask follows the
    /// given classes (training); otherwise it follows `argmax p`.
    pub fn forward(&self, x: &Tensor, true_detectors: Option<&[usize]>, bn: BnMode) -> Result<(HeadOutput, ForwardCache)> {
        self.check_input(x)?;
        let bsz = x.dim(0);
        if let Some(t) = true_detectors {
            if t.len() != bsz {
                return Err(Error::LengthMismatch {
                    expected: bsz,
                    actual: t.len(),
                });
            }
            if let Some(&bad) = t.iter().find(|&&d| d >= self.spec.num_detectors) {
                return Err(Error::LabelOutOfRange(format!(
                    "detector {bad} with {} detectors",
                    self.spec.num_detectors
                )));
            }
        }
        let (features, backbone) = self.backbone_forward("backbone", x, bn);
        let det_hidden = layers::relu_forward(&self.dense("detector_head.hidden", &features));
        let det_logits = self.dense("detector_head.out", &det_hidden);
        let d = self.spec.num_detectors;
        let p_data: Vec<f64> = det_logits.data().chunks(d).flat_map(layers::softmax).collect();
        let p = Tensor::new(vec![bsz, d], p_data)?;

        let (param_input, param_backbone) = match self.spec.variant {
            Variant::Ns => {
                let (f2, c2) = self.backbone_forward("param_backbone", x, bn);
                (f2, Some(c2))
            }
            Variant::Ssr => (features.clone(), None),
            Variant::Atsdln => (concat_cols(&features, &det_hidden), None),
        };
        let param_hidden = layers::relu_forward(&self.dense("param_head.hidden", &param_input));
        let param_logits = self.dense("param_head.out", &param_hidden);
        let selected: Vec<usize> = match true_detectors {
            Some(t) => t.to_vec(),
            None => p.data().chunks(d).map(crate::stats::argmax).collect(),
        };
        let w = self.spec.max_param_width;
        let q_data: Vec<f64> = param_logits
            .data()
            .chunks(w)
            .zip(&selected)
            .flat_map(|(row, &s)| layers::masked_softmax(row, self.spec.param_widths[s]))
            .collect();
        let q = Tensor::new(vec![bsz, w], q_data)?;
        let out = HeadOutput {
            p,
            q,
            hidden_d: det_hidden.clone(),
        };
        let cache = ForwardCache {
            backbone,
            param_backbone,
            features,
            det_hidden,
            param_input,
            param_hidden,
            param_logits,
            selected,
        };
        Ok((out, cache))
    }

    /// Moves running statistics toward the batch statistics of `cache`:
    /// `r = (1 - momentum) r + momentum * batch`.
    pub fn update_running_stats(&mut self, cache: &ForwardCache, momentum: f64) {
        let mut apply = |prefix: &str, bb: &BackboneCache| {
            for (i, block) in bb.blocks.iter().enumerate() {
                if let Some(stats) = &block.stats {
                    for (key, batch) in [("running_mean", &stats.mean), ("running_var", &stats.var)] {
                        let t = self.params.get_mut(&format!("{prefix}.block{i}.bn.{key}")).unwrap();
                        for (r, b) in t.data_mut().iter_mut().zip(batch) {
                            *r = (1.0 - momentum) * *r + momentum * b;
                        }
                    }
                }
            }
        };
        apply("backbone", &cache.backbone);
        if let Some(c) = &cache.param_backbone {
            apply("param_backbone", c);
        }
    }

    fn backbone_backward(&self, prefix: &str, cache: &BackboneCache, dfeat: &Tensor, grads: &mut Params) {
        let mut g = layers::gap_backward(dfeat, cache.length);
        for (i, block) in cache.blocks.iter().enumerate().rev() {
            let name = |s: &str| format!("{prefix}.block{i}.{s}");
            g = layers::relu_backward(&g, &block.out);
            let (mut dgamma, mut dbeta) = take2(grads, &name("bn.gamma"), &name("bn.beta"));
            g = layers::batchnorm_backward(&g, &self.params[&name("bn.gamma")], &block.bn, &mut dgamma, &mut dbeta, true).unwrap();
            grads.insert(name("bn.gamma"), dgamma);
            grads.insert(name("bn.beta"), dbeta);
            let (mut dw, mut db) = take2(grads, &name("conv.weight"), &name("conv.bias"));
            let dx = layers::conv1d_backward(&g, &self.params[&name("conv.weight")], &block.conv, &mut dw, &mut db, i > 0);
            grads.insert(name("conv.weight"), dw);
            grads.insert(name("conv.bias"), db);
            if let Some(dx) = dx {
                g = dx;
            }
        }
    }

    fn dense_backward(&self, name: &str, dy: &Tensor, x: &Tensor, grads: &mut Params, need_dx: bool) -> Option<Tensor> {
        let (wn, bn) = (format!("{name}.weight"), format!("{name}.bias"));
        let (mut dw, mut db) = take2(grads, &wn, &bn);
        let dx = layers::dense_backward(dy, x, &self.params[&wn], &mut dw, &mut db, need_dx);
        grads.insert(wn, dw);
        grads.insert(bn, db);
        dx
    }

    /// Accumulates parameter gradients given logit gradients of both heads.
    /// Backbone gradients are skipped when `train_backbone` is false.
    pub fn backward(&self, cache: &ForwardCache, d_det_logits: &Tensor, d_param_logits: &Tensor, grads: &mut Params, train_backbone: bool) {
        // parameter head
        let dh_q = self
            .dense_backward("param_head.out", d_param_logits, &cache.param_hidden, grads, true)
            .unwrap();
        let dh_q = layers::relu_backward(&dh_q, &cache.param_hidden);
        let need_param_dx = train_backbone || self.spec.variant == Variant::Atsdln;
        let d_param_in = self.dense_backward("param_head.hidden", &dh_q, &cache.param_input, grads, need_param_dx);

        // detector head, plus the share routed through the parameter head
        let mut dh_d = self
            .dense_backward("detector_head.out", d_det_logits, &cache.det_hidden, grads, true)
            .unwrap();
        let f = self.spec.feature_width();
        let mut dfeat_from_param = None;
        if let Some(dpi) = &d_param_in {
            match self.spec.variant {
                Variant::Atsdln => {
                    let (df, dh) = split_cols(dpi, f);
                    dh_d.add_assign(&dh);
                    dfeat_from_param = Some(df);
                }
                Variant::Ssr => dfeat_from_param = Some(dpi.clone()),
                Variant::Ns => {
                    if train_backbone {
                        self.backbone_backward("param_backbone", cache.param_backbone.as_ref().unwrap(), dpi, grads);
                    }
                }
            }
        }
        let dh_d = layers::relu_backward(&dh_d, &cache.det_hidden);
        let dfeat = self.dense_backward("detector_head.hidden", &dh_d, &cache.features, grads, train_backbone);
        if train_backbone {
            let mut dfeat = dfeat.unwrap();
            if let Some(df) = dfeat_from_param {
                dfeat.add_assign(&df);
            }
            self.backbone_backward("backbone", &cache.backbone, &dfeat, grads);
        }
    }
}

fn take2(grads: &mut Params, a: &str, b: &str) -> (Tensor, Tensor) {
    (grads.remove(a).expect("grad tensor"), grads.remove(b).expect("grad tensor"))
}

fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let (bsz, wa, wb) = (a.dim(0), a.dim(1), b.dim(1));
    let mut data = Vec::with_capacity(bsz * (wa + wb));
    for i in 0..bsz {
        data.extend_from_slice(&a.data()[i * wa..(i + 1) * wa]);
        data.extend_from_slice(&b.data()[i * wb..(i + 1) * wb]);
    }
    Tensor::new(vec![bsz, wa + wb], data).unwrap()
}

fn split_cols(x: &Tensor, at: usize) -> (Tensor, Tensor) {
    let (bsz, w) = (x.dim(0), x.dim(1));
    let mut a = Vec::with_capacity(bsz * at);
    let mut b = Vec::with_capacity(bsz * (w - at));
    for row in x.data().chunks(w) {
        a.extend_from_slice(&row[..at]);
        b.extend_from_slice(&row[at..]);
    }
    (Tensor::new(vec![bsz, at], a).unwrap(), Tensor::new(vec![bsz, w - at], b).unwrap())
}

/// Result of [`joint_loss`].
pub struct LossOutput {
    pub loss: f64,
    pub detector_term: f64,
    pub param_term: f64,
    pub d_det_logits: Tensor,
    pub d_param_logits: Tensor,
}

/// Batch mean of `w[d] * CE(p, d) + lambda * CE(q, param)`, with gradients
/// with respect to both heads' logits. `q` must have been masked by the true
/// detector of each row. `class_weights` default to 1.
pub fn joint_loss(
    out: &HeadOutput,
    detector_labels: &[usize],
    param_labels: &[usize],
    widths: &[usize],
    lambda: f64,
    class_weights: Option<&[f64]>,
) -> Result<LossOutput> {
    let (bsz, d) = (out.p.dim(0), out.p.dim(1));
    let w = out.q.dim(1);
    if detector_labels.len() != bsz || param_labels.len() != bsz {
        return Err(Error::LengthMismatch {
            expected: bsz,
            actual: detector_labels.len().min(param_labels.len()),
        });
    }
    let mut d_det = out.p.clone();
    let mut d_param = out.q.clone();
    let (mut det_term, mut param_term) = (0.0, 0.0);
    let scale = 1.0 / bsz as f64;
    for i in 0..bsz {
        let (dl, pl) = (detector_labels[i], param_labels[i]);
        if dl >= d {
            return Err(Error::LabelOutOfRange(format!("detector label {dl} with {d} detectors")));
        }
        if pl >= widths[dl] {
            return Err(Error::LabelOutOfRange(format!(
                "parameter label {pl} outside the {} valid entries of detector {dl}",
                widths[dl]
            )));
        }
        let cw = class_weights.map_or(1.0, |c| c[dl]);
        let pr = &mut d_det.data_mut()[i * d..(i + 1) * d];
        det_term += -cw * pr[dl].max(f64::MIN_POSITIVE).ln();
        pr[dl] -= 1.0;
        pr.iter_mut().for_each(|g| *g *= cw * scale);
        let qr = &mut d_param.data_mut()[i * w..(i + 1) * w];
        param_term += -qr[pl].max(f64::MIN_POSITIVE).ln();
        qr[pl] -= 1.0;
        // masked entries carry no gradient
        for (j, g) in qr.iter_mut().enumerate() {
            *g = if j < widths[dl] { *g * lambda * scale } else { 0.0 };
        }
    }
    let detector_term = det_term * scale;
    let param_term = param_term * scale;
    Ok(LossOutput {
        loss: detector_term + lambda * param_term,
        detector_term,
        param_term,
        d_det_logits: d_det,
        d_param_logits: d_param,
    })
}
