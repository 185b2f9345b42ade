use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers;
use super::model::{is_backbone, is_buffer};
use super::*;
use crate::data::synth::{generate_synthetic, AnomalySpec, AnomalyType, BaseSignal};
use crate::detectors::GridSet;
use crate::oracle::{build_dataset, LabeledDataset};

fn tiny_spec(variant: Variant) -> ArchitectureSpec {
    ArchitectureSpec {
        channels_in: 1,
        input_length: 9,
        conv_blocks: vec![
            ConvBlockSpec { filters: 3, kernel_size: 4 },
            ConvBlockSpec { filters: 4, kernel_size: 3 },
        ],
        detector_head_hidden: 5,
        param_head_hidden: 4,
        num_detectors: 3,
        param_widths: vec![2, 4, 3],
        max_param_width: 4,
        variant,
    }
}

fn random_input(rng: &mut ChaCha8Rng, b: usize, l: usize) -> Tensor {
    Tensor::new(vec![b, 1, l], (0..b * l).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn batch_loss(model: &Model, x: &Tensor, det: &[usize], par: &[usize], lambda: f64) -> (f64, Params) {
    let (out, cache) = model.forward(x, Some(det), BnMode::Batch).unwrap();
    let l = joint_loss(&out, det, par, &model.spec().param_widths, lambda, None).unwrap();
    let mut grads = model.zero_grads();
    model.backward(&cache, &l.d_det_logits, &l.d_param_logits, &mut grads, true);
    (l.loss, grads)
}

fn close(a: f64, n: f64) -> bool {
    (a - n).abs() <= 1e-4 * a.abs().max(n.abs()) || (a - n).abs() <= 1e-8
}

#[test]
fn model_gradients_match_central_differences() {
    let h = 1e-5;
    for variant in Variant::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut model = Model::new(tiny_spec(variant), 3).unwrap();
        // nonzero biases and shifts so every path carries signal
        for (name, t) in model.params_mut().iter_mut() {
            if !is_buffer(name) && !name.ends_with(".weight") {
                t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
            }
        }
        let x = random_input(&mut rng, 2, 9);
        let det = [1, 2];
        let par = [3, 0];
        let (_, grads) = batch_loss(&model, &x, &det, &par, 0.7);
        for (name, g) in &grads {
            for i in 0..g.len() {
                let orig = model.param(name).data()[i];
                model.params_mut().get_mut(name).unwrap().data_mut()[i] = orig + h;
                let up = batch_loss(&model, &x, &det, &par, 0.7).0;
                model.params_mut().get_mut(name).unwrap().data_mut()[i] = orig - h;
                let down = batch_loss(&model, &x, &det, &par, 0.7).0;
                model.params_mut().get_mut(name).unwrap().data_mut()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!(close(g.data()[i], numeric), "{variant:?} {name}[{i}]: {} vs {numeric}", g.data()[i]);
            }
        }
    }
}

#[test]
fn frozen_backbone_gradients_in_inference_mode() {
    // with running statistics the batch-norm map is affine; check the head
    // gradients and that backbone gradients stay zero
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = Model::new(tiny_spec(Variant::Atsdln), 5).unwrap();
    let x = random_input(&mut rng, 3, 9);
    let det = [0, 1, 2];
    let par = [1, 3, 2];
    let (out, cache) = model.forward(&x, Some(&det), BnMode::Running).unwrap();
    let l = joint_loss(&out, &det, &par, &model.spec().param_widths, 1.0, None).unwrap();
    let mut grads = model.zero_grads();
    model.backward(&cache, &l.d_det_logits, &l.d_param_logits, &mut grads, false);
    for (name, g) in &grads {
        if is_backbone(name) {
            assert!(g.data().iter().all(|&v| v == 0.0), "{name}");
        }
    }
    let name = "param_head.hidden.weight";
    let mut m = model.clone();
    let loss_at = |m: &Model| {
        let (o, _) = m.forward(&x, Some(&det), BnMode::Running).unwrap();
        joint_loss(&o, &det, &par, &m.spec().param_widths, 1.0, None).unwrap().loss
    };
    for i in 0..6 {
        let orig = m.param(name).data()[i];
        m.params_mut().get_mut(name).unwrap().data_mut()[i] = orig + 1e-5;
        let up = loss_at(&m);
        m.params_mut().get_mut(name).unwrap().data_mut()[i] = orig - 1e-5;
        let down = loss_at(&m);
        m.params_mut().get_mut(name).unwrap().data_mut()[i] = orig;
        assert!(close(grads[name].data()[i], (up - down) / 2e-5));
    }
}

#[test]
fn zero_input_gives_zero_features() {
    let model = Model::new(tiny_spec(Variant::Ssr), 1).unwrap();
    let x = Tensor::zeros(&[2, 1, 9]);
    let f = model.features(&x).unwrap();
    assert_eq!(f.shape(), &[2, 4]);
    assert!(f.data().iter().all(|&v| v == 0.0));
    let (_, cache) = model.forward(&x, None, BnMode::Batch).unwrap();
    assert_eq!(cache.selected.len(), 2);
}

#[test]
fn head_outputs_are_distributions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for variant in Variant::ALL {
        let model = Model::new(tiny_spec(variant), 9).unwrap();
        let x = random_input(&mut rng, 4, 9);
        let (out, cache) = model.forward(&x, Some(&[1, 1, 0, 2]), BnMode::Running).unwrap();
        for row in out.p.data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
        for (row, &d) in out.q.data().chunks(4).zip(&cache.selected) {
            let width = model.spec().param_widths[d];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row[width..].iter().all(|&v| v == 0.0));
            assert_eq!(row.iter().filter(|&&v| v > 0.0).count(), width);
        }
        assert_eq!(out.hidden_d.shape(), &[4, 5]);
    }
    assert_eq!(tiny_spec(Variant::Atsdln).param_input_width(), 4 + 5);
    assert_eq!(tiny_spec(Variant::Ssr).param_input_width(), 4);
}

#[test]
fn loss_examples() {
    let p = Tensor::new(vec![1, 5], vec![0.2; 5]).unwrap();
    let q = Tensor::new(vec![1, 3], vec![0.5, 0.5, 0.0]).unwrap();
    let out = HeadOutput {
        p,
        q,
        hidden_d: Tensor::zeros(&[1, 1]),
    };
    let widths = [2, 3, 1, 1, 1];
    let l = joint_loss(&out, &[0], &[1], &widths, 0.0, None).unwrap();
    assert!((l.loss - 5f64.ln()).abs() < 1e-12);
    let l = joint_loss(&out, &[0], &[1], &widths, 1.0, None).unwrap();
    assert!((l.loss - 5f64.ln() - 2f64.ln()).abs() < 1e-12);
    assert!(joint_loss(&out, &[0], &[2], &widths, 1.0, None).is_err());

    let onehot = HeadOutput {
        p: Tensor::new(vec![1, 2], vec![0.0, 1.0]).unwrap(),
        q: Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap(),
        hidden_d: Tensor::zeros(&[1, 1]),
    };
    assert_eq!(joint_loss(&onehot, &[1], &[0], &[2, 2], 1.0, None).unwrap().loss, 0.0);
}

#[test]
fn softmax_shift_keeps_argmax() {
    let logits = [0.3, -1.2, 2.5, 2.4];
    let shifted: Vec<f64> = logits.iter().map(|v| v + 123.0).collect();
    let a = layers::softmax(&logits);
    let b = layers::softmax(&shifted);
    assert_eq!(crate::stats::argmax(&a), crate::stats::argmax(&b));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

fn small_dataset(seed: u64) -> LabeledDataset {
    let mut series = Vec::new();
    for (i, kind) in [AnomalyType::Outlier, AnomalyType::MeanShift].into_iter().enumerate() {
        let base = if kind == AnomalyType::MeanShift {
            BaseSignal::Noise
        } else {
            BaseSignal::Sine
        };
        let spec = AnomalySpec::new(kind, 6.0, 0.5, 20);
        series.extend(generate_synthetic(4, 128, base, &[spec], seed + i as u64).unwrap());
    }
    let grids = GridSet::new(crate::detectors::default_grid()[..3].to_vec()).unwrap();
    build_dataset(&series, 64, 32, &grids).unwrap()
}

fn small_spec(data: &LabeledDataset, variant: Variant) -> ArchitectureSpec {
    ArchitectureSpec {
        conv_blocks: vec![ConvBlockSpec { filters: 4, kernel_size: 5 }, ConvBlockSpec { filters: 4, kernel_size: 3 }],
        detector_head_hidden: 8,
        param_head_hidden: 8,
        ..ArchitectureSpec::desk(&data.grids, data.window_size, variant)
    }
}

#[test]
fn lambda_zero_detector_trajectories_coincide() {
    let data = small_dataset(1);
    let cfg = TrainConfig {
        loss_weight_lambda: 0.0,
        max_epochs: 4,
        early_stop_patience: 100,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let a = train(&data, small_spec(&data, Variant::Ssr), &cfg).unwrap();
    let b = train(&data, small_spec(&data, Variant::Atsdln), &cfg).unwrap();
    let det_a: Vec<_> = a.log.iter().map(|e| (e.train_loss, e.val_detector_accuracy)).collect();
    let det_b: Vec<_> = b.log.iter().map(|e| (e.train_loss, e.val_detector_accuracy)).collect();
    assert_eq!(det_a, det_b);
    for (name, t) in a.model.params() {
        if !name.starts_with("param_head.") {
            assert_eq!(t, b.model.param(name), "{name}");
        }
    }
}

#[test]
fn training_is_deterministic_and_zero_lr_is_inert() {
    let data = small_dataset(2);
    let cfg = TrainConfig {
        max_epochs: 3,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let spec = small_spec(&data, Variant::Atsdln);
    let a = train(&data, spec.clone(), &cfg).unwrap();
    let b = train(&data, spec.clone(), &cfg).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model, b.model);

    let frozen_cfg = TrainConfig {
        learning_rate: 0.0,
        ..cfg
    };
    let c = train(&data, spec.clone(), &frozen_cfg).unwrap();
    assert_eq!(c.model, Model::new(spec, frozen_cfg.seed).unwrap());
}

#[test]
fn freeze_keeps_backbone_bits() {
    let data = small_dataset(3);
    let spec = small_spec(&data, Variant::Atsdln);
    let cfg = TrainConfig {
        max_epochs: 1,
        batch_size: 8,
        freeze: FreezeSchedule::Always,
        ..TrainConfig::default()
    };
    let init = Model::new(spec, cfg.seed).unwrap();
    let out = train_model(init.clone(), &data, &cfg).unwrap();
    for (name, t) in init.params() {
        if is_backbone(name) {
            assert_eq!(t, out.model.param(name), "{name}");
        } else if name.starts_with("detector_head.out.weight") {
            assert_ne!(t, out.model.param(name));
        }
    }
}

#[test]
fn patience_zero_stops_at_first_plateau() {
    let data = small_dataset(4);
    let cfg = TrainConfig {
        max_epochs: 50,
        early_stop_patience: 0,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let out = train(&data, small_spec(&data, Variant::Ssr), &cfg).unwrap();
    let n = out.log.len();
    assert!(n < 50);
    // every epoch before the last improved on its predecessor's best
    assert_eq!(out.best_epoch, n - 1);
    assert!(out.log.iter().all(|e| e.val_loss.is_finite()));
}

#[test]
fn macro_f1_by_hand() {
    // class 0: tp 1, fn 1; class 1: tp 1, fp 1; class 2: fp... none
    let truth = [0, 0, 1];
    let pred = [0, 1, 1];
    let f0 = 2.0 / 3.0;
    let f1 = 2.0 / 3.0;
    assert!((macro_f1(&truth, &pred) - (f0 + f1) / 2.0).abs() < 1e-12);
    assert_eq!(macro_f1(&[1, 1], &[1, 1]), 1.0);
    // supports 2 and 1
    assert!((weighted_f1(&truth, &pred) - (2.0 * f0 + f1) / 3.0).abs() < 1e-12);
    assert_eq!(weighted_f1(&[0, 1], &[2, 2]), 0.0);
}

#[test]
fn stratified_split_keeps_class_shares() {
    let data = small_dataset(5);
    let (train_idx, val_idx) = stratified_split(&data, 0.2, 1);
    assert_eq!(train_idx.len() + val_idx.len(), data.len());
    for c in 0..data.grids.num_detectors() {
        let n = data.class_counts[c];
        let v = val_idx.iter().filter(|&&i| data.examples[i].detector_label == c).count();
        if n > 0 {
            assert!(v < n);
            assert_eq!(v, ((n as f64 * 0.2).round() as usize).min(n - 1));
        }
    }
}

#[test]
fn bundle_round_trip_is_bit_exact() {
    let data = small_dataset(6);
    let out = train(
        &data,
        small_spec(&data, Variant::Ns),
        &TrainConfig {
            max_epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let bundle = ModelBundle::new(out.model, data.grids.clone()).unwrap();
    let text = bundle.to_json();
    let back = ModelBundle::from_json(&text).unwrap();
    assert_eq!(back.to_json(), text);
    assert_eq!(back, bundle);
    let windows: Vec<_> = data.examples.iter().map(|e| e.raw_window()).collect();
    assert_eq!(bundle.predict_batch(&windows).unwrap(), back.predict_batch(&windows).unwrap());

    let broken = text.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
    assert!(ModelBundle::from_json(&broken).is_err());
}
