//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs the whole benchmark (three seeds, three variants, transfer) and takes
//! roughly half an hour on one core. The process exits nonzero on a FAIL only
//! when `ATSDLN_ACCEPTANCE_STRICT=1` is set; otherwise the lines are the report.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atsdln::baseline::VotePool;
use atsdln::bench::{best_row, combo_sweep, label_split, pretrain_synthetic, train_and_score, window_size_study, Protocol, SourceConfig, Split, TrainedRun};
use atsdln::data::{anomaly_corpus, AnomalyType, CorpusConfig};
use atsdln::detectors::{run_detector, DetectorContext, DetectorKind, GridSet, ParamGrid, CommonParams};
use atsdln::eval::{evaluate_series, Scorer};
use atsdln::metrics::{compute_metrics, score_mask, ConfusionCounts};
use atsdln::net::layers::{
    batchnorm_backward, batchnorm_forward, conv1d_backward, conv1d_forward, dense_backward, dense_forward, gap_backward, gap_forward,
    masked_softmax, relu_backward, relu_forward, softmax,
};
use atsdln::net::{
    joint_loss, train, ArchitectureSpec, BnMode, ConvBlockSpec, FreezeSchedule, HeadOutput, Model, ModelBundle, Tensor, TrainConfig, Variant,
};
use atsdln::oracle::{build_dataset, LabeledDataset};
use atsdln::series::slide_windows;

const SEEDS: [u64; 3] = [1, 2, 3];
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, for gradients that are ~0.
const FD_SCALE_FLOOR: f64 = 1e-6;
const METRIC_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct SeedRuns {
    seed: u64,
    data: LabeledDataset,
    best_single_f1: f64,
    vote_f1: f64,
    ns: TrainedRun,
    ssr: TrainedRun,
    atsdln: TrainedRun,
}

fn protocol() -> Protocol {
    Protocol::default()
}

fn seed_runs() -> &'static [SeedRuns] {
    static RUNS: OnceLock<Vec<SeedRuns>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let p = protocol();
        let grids = GridSet::default();
        SEEDS
            .iter()
            .map(|&seed| {
                let split = Split::new(&p, seed).unwrap();
                let data = label_split(&p, &split, &grids).unwrap();
                let test = split.test_series();
                let sweep = combo_sweep(&grids, &test, p.window_size).unwrap();
                let best_single_f1 = best_row(&sweep).unwrap().metrics.f1;
                let vote_f1 = evaluate_series(Scorer::Vote(&VotePool::standard()), &test, p.window_size)
                    .unwrap()
                    .metrics
                    .f1;
                let run = |v| train_and_score(&p, &data, &test, v, seed, None).unwrap();
                let (ns, ssr, atsdln) = (run(Variant::Ns), run(Variant::Ssr), run(Variant::Atsdln));
                eprintln!(
                    "seed {seed}: ns {:.4} ssr {:.4} atsdln {:.4} best single {:.4} vote {:.4}",
                    ns.test.metrics.f1, ssr.test.metrics.f1, atsdln.test.metrics.f1, best_single_f1, vote_f1
                );
                SeedRuns {
                    seed,
                    data,
                    best_single_f1,
                    vote_f1,
                    ns,
                    ssr,
                    atsdln,
                }
            })
            .collect()
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

// metrics

fn hand_ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn metric_exactness() -> Outcome {
    let m = compute_metrics(&ConfusionCounts::new(1, 7, 2, 0));
    if m.error != 0.7 {
        return outcome(false, format!("error(1,7,2,0) = {}", m.error));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for i in 0..20 {
        // a few vectors with empty cells to hit the 0/0 cases
        let mut draw = |k| if i % 5 == k { 0 } else { rng.gen_range(0..40u64) };
        let (tp, fp, fn_, tn) = (draw(0), draw(1), draw(2), draw(3));
        let m = compute_metrics(&ConfusionCounts::new(tp, fp, fn_, tn));
        let p = hand_ratio(tp, tp + fp);
        let r = hand_ratio(tp, tp + fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let expect = [p, r, hand_ratio(fp, fp + tn), f1, hand_ratio(fp, tp + fp + fn_)];
        let got = [m.precision, m.recall, m.fpr, m.f1, m.error];
        for (a, b) in expect.iter().zip(got) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= METRIC_TOL, format!("error(1,7,2,0)=0.7, max deviation over 20 vectors {worst:.1e} (tol {METRIC_TOL:.0e})"))
}

// detector pairings

fn detector_pairings() -> Outcome {
    use DetectorKind::*;
    let pairings: [(AnomalyType, &[DetectorKind]); 5] = [
        (AnomalyType::Outlier, &[KSigma, DbscanOutlier, LofOutlier, KernelDensity]),
        (AnomalyType::MeanShift, &[CusumChangePoint]),
        (AnomalyType::Cliff, &[SimpleThreshold, KernelDensity]),
        (AnomalyType::DeviatingTrend, &[StlResidual]),
        (AnomalyType::NewShape, &[DtwShape]),
    ];
    let config = CorpusConfig::default();
    let w = config.window_size;
    let corpus = anomaly_corpus(&config, 42).unwrap();
    let grids = GridSet::full();
    let mut pass = true;
    let mut parts = Vec::new();
    for (kind, families) in pairings {
        let mut per_combo = vec![ConfusionCounts::default(); grids.total_combos()];
        for c in corpus.iter().filter(|c| c.kind == kind) {
            let win = &slide_windows(&c.series, w, w).unwrap()[c.anomaly_window];
            let ctx = DetectorContext::preceding(&c.series.values, win.start_index, w, 3);
            for (flat, _, _, cfg) in grids.iter_combos() {
                if families.contains(&cfg.kind) {
                    per_combo[flat] += score_mask(&run_detector(cfg, win, &ctx).unwrap().mask, &win.labels).unwrap();
                }
            }
        }
        let (best_f1, best_cfg) = grids
            .iter_combos()
            .filter(|(_, _, _, cfg)| families.contains(&cfg.kind))
            .map(|(flat, _, _, cfg)| (per_combo[flat].metrics().f1, cfg.to_string()))
            .fold((f64::NEG_INFINITY, String::new()), |a, b| if b.0 > a.0 { b } else { a });
        pass &= best_f1 >= 0.8;
        parts.push(format!("{} {best_f1:.3} ({best_cfg})", kind.name()));
    }
    outcome(pass, format!("best designated F1 >= 0.8: {}", parts.join("; ")))
}

// oracle

fn six_combo_grid() -> GridSet {
    let common = CommonParams::default();
    GridSet::new(vec![
        ParamGrid::new(DetectorKind::KSigma, vec![("k".into(), vec![2.0, 3.0])], common).unwrap(),
        ParamGrid::new(DetectorKind::CusumChangePoint, vec![("h".into(), vec![4.0]), ("drift".into(), vec![0.0, 0.5])], common).unwrap(),
        ParamGrid::new(DetectorKind::DtwShape, vec![("radius".into(), vec![5.0]), ("dist_threshold".into(), vec![1.0, 2.0])], common).unwrap(),
    ])
    .unwrap()
}

fn oracle_equivalence() -> Outcome {
    let grids = six_combo_grid();
    let w = 200;
    let config = CorpusConfig {
        series_per_type: 1,
        ..CorpusConfig::default()
    };
    let corpus = anomaly_corpus(&config, 5).unwrap();
    let series: Vec<_> = corpus.iter().map(|c| c.series.clone()).collect();
    // 5 series x 4 windows at stride 100
    let data = build_dataset(&series, w, 100, &grids).unwrap();
    let mut checked = 0;
    let mut mismatches = 0;
    for s in &series {
        for win in slide_windows(s, w, 100).unwrap().iter().take(4) {
            let ctx = DetectorContext::preceding(&s.values, win.start_index, w, 3);
            let has_anomaly = win.labels.iter().any(|&l| l);
            // straight loop over combos, scored by hand
            let mut best: Option<(usize, f64, f64)> = None;
            let mut flat = 0;
            for grid in grids.grids() {
                for cfg in grid.combos() {
                    let mask = run_detector(cfg, win, &ctx).unwrap().mask;
                    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
                    for (&p, &t) in mask.flags().iter().zip(&win.labels) {
                        match (p, t) {
                            (true, true) => tp += 1,
                            (true, false) => fp += 1,
                            (false, true) => fn_ += 1,
                            _ => {}
                        }
                    }
                    let score = if has_anomaly {
                        if tp == 0 {
                            0.0
                        } else {
                            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
                        }
                    } else {
                        1.0 / (1.0 + fp as f64)
                    };
                    let err = if tp + fp + fn_ == 0 { 0.0 } else { fp as f64 / (tp + fp + fn_) as f64 };
                    let better = match best {
                        None => true,
                        Some((_, bs, be)) => score > bs + 1e-12 || ((score - bs).abs() <= 1e-12 && err < be),
                    };
                    if better {
                        best = Some((flat, score, err));
                    }
                    flat += 1;
                }
            }
            let naive = best.unwrap().0;
            let example = data
                .examples
                .iter()
                .find(|e| e.window.parent_id == s.id && e.window.start_index == win.start_index)
                .unwrap();
            if grids.flat_index(example.detector_label, example.param_label) != naive {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    outcome(
        checked == 20 && mismatches == 0,
        format!("{checked} windows x {} combos, {mismatches} mismatches", grids.total_combos()),
    )
}

// gradient checks

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

fn weighted_sum(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(FD_SCALE_FLOOR)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` with respect to every entry of `x`.
fn fd_worst(x: &Tensor, analytic: &[f64], loss: impl Fn(&Tensor) -> f64) -> f64 {
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + FD_STEP;
        let up = loss(&probe);
        probe.data_mut()[i] = orig - FD_STEP;
        let down = loss(&probe);
        probe.data_mut()[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn check_conv(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[2, 2, 9], -2.0, 2.0);
    let w = rand_tensor(rng, &[3, 2, 4], -1.0, 1.0);
    let b = rand_tensor(rng, &[3], -0.5, 0.5);
    let (y, cache) = conv1d_forward(&x, &w, &b);
    let r = rand_tensor(rng, y.shape(), -1.0, 1.0);
    let (mut dw, mut db) = (Tensor::zeros(w.shape()), Tensor::zeros(b.shape()));
    let dx = conv1d_backward(&r, &w, &cache, &mut dw, &mut db, true).unwrap();
    let f = |x: &Tensor, w: &Tensor, b: &Tensor| weighted_sum(&conv1d_forward(x, w, b).0, &r);
    fd_worst(&x, dx.data(), |x| f(x, &w, &b))
        .max(fd_worst(&w, dw.data(), |w| f(&x, w, &b)))
        .max(fd_worst(&b, db.data(), |b| f(&x, &w, b)))
}

fn check_batchnorm(rng: &mut ChaCha8Rng, running: bool) -> f64 {
    let x = rand_tensor(rng, &[3, 2, 5], -2.0, 2.0);
    let g = rand_tensor(rng, &[2], 0.5, 1.5);
    let be = rand_tensor(rng, &[2], -0.5, 0.5);
    let rm = rand_tensor(rng, &[2], -0.3, 0.3);
    let rv = rand_tensor(rng, &[2], 0.5, 1.5);
    let stats = running.then_some((&rm, &rv));
    let (y, cache, _) = batchnorm_forward(&x, &g, &be, stats);
    let r = rand_tensor(rng, y.shape(), -1.0, 1.0);
    let (mut dg, mut db) = (Tensor::zeros(g.shape()), Tensor::zeros(be.shape()));
    let dx = batchnorm_backward(&r, &g, &cache, &mut dg, &mut db, true).unwrap();
    let f = |x: &Tensor, g: &Tensor, b: &Tensor| weighted_sum(&batchnorm_forward(x, g, b, stats).0, &r);
    fd_worst(&x, dx.data(), |x| f(x, &g, &be))
        .max(fd_worst(&g, dg.data(), |g| f(&x, g, &be)))
        .max(fd_worst(&be, db.data(), |b| f(&x, &g, b)))
}

fn check_relu(rng: &mut ChaCha8Rng) -> f64 {
    // keep inputs away from the kink
    let mut x = rand_tensor(rng, &[2, 3, 6], 0.1, 2.0);
    for v in x.data_mut() {
        if rng.gen_bool(0.5) {
            *v = -*v;
        }
    }
    let y = relu_forward(&x);
    let r = rand_tensor(rng, y.shape(), -1.0, 1.0);
    let dx = relu_backward(&r, &y);
    fd_worst(&x, dx.data(), |x| weighted_sum(&relu_forward(x), &r))
}

fn check_gap(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[2, 3, 7], -2.0, 2.0);
    let r = rand_tensor(rng, &[2, 3], -1.0, 1.0);
    let dx = gap_backward(&r, 7);
    fd_worst(&x, dx.data(), |x| weighted_sum(&gap_forward(x), &r))
}

fn check_dense(rng: &mut ChaCha8Rng) -> f64 {
    let x = rand_tensor(rng, &[3, 4], -2.0, 2.0);
    let w = rand_tensor(rng, &[5, 4], -1.0, 1.0);
    let b = rand_tensor(rng, &[5], -0.5, 0.5);
    let r = rand_tensor(rng, &[3, 5], -1.0, 1.0);
    let (mut dw, mut db) = (Tensor::zeros(w.shape()), Tensor::zeros(b.shape()));
    let dx = dense_backward(&r, &x, &w, &mut dw, &mut db, true).unwrap();
    let f = |x: &Tensor, w: &Tensor, b: &Tensor| weighted_sum(&dense_forward(x, w, b), &r);
    fd_worst(&x, dx.data(), |x| f(x, &w, &b))
        .max(fd_worst(&w, dw.data(), |w| f(&x, w, &b)))
        .max(fd_worst(&b, db.data(), |b| f(&x, &w, b)))
}

/// Softmax and masked softmax followed by the weighted joint cross-entropy,
/// differentiated with respect to both sets of logits.
fn check_softmax_ce(rng: &mut ChaCha8Rng) -> f64 {
    let widths = [2usize, 4, 3];
    let bsz = 4;
    let det: Vec<usize> = (0..bsz).map(|_| rng.gen_range(0..3)).collect();
    let par: Vec<usize> = det.iter().map(|&d| rng.gen_range(0..widths[d])).collect();
    let weights = [0.7, 1.3, 2.0];
    let dl = rand_tensor(rng, &[bsz, 3], -3.0, 3.0);
    let pl = rand_tensor(rng, &[bsz, 4], -3.0, 3.0);
    let heads = |dl: &Tensor, pl: &Tensor| {
        let p: Vec<f64> = dl.data().chunks(3).flat_map(softmax).collect();
        let q: Vec<f64> = pl.data().chunks(4).zip(&det).flat_map(|(row, &d)| masked_softmax(row, widths[d])).collect();
        HeadOutput {
            p: Tensor::new(vec![bsz, 3], p).unwrap(),
            q: Tensor::new(vec![bsz, 4], q).unwrap(),
            hidden_d: Tensor::zeros(&[bsz, 1]),
        }
    };
    let loss = |dl: &Tensor, pl: &Tensor| joint_loss(&heads(dl, pl), &det, &par, &widths, 0.6, Some(&weights)).unwrap();
    let l = loss(&dl, &pl);
    fd_worst(&dl, l.d_det_logits.data(), |d| loss(d, &pl).loss).max(fd_worst(&pl, l.d_param_logits.data(), |p| loss(&dl, p).loss))
}

fn tiny_spec(variant: Variant) -> ArchitectureSpec {
    ArchitectureSpec {
        channels_in: 1,
        input_length: 9,
        conv_blocks: vec![ConvBlockSpec { filters: 3, kernel_size: 4 }, ConvBlockSpec { filters: 4, kernel_size: 3 }],
        detector_head_hidden: 5,
        param_head_hidden: 4,
        num_detectors: 3,
        param_widths: vec![2, 4, 3],
        max_param_width: 4,
        variant,
    }
}

/// Every trainable tensor of a whole small network in training mode.
fn check_model(rng: &mut ChaCha8Rng, variant: Variant) -> f64 {
    let mut model = Model::new(tiny_spec(variant), rng.gen()).unwrap();
    let names: Vec<String> = model.zero_grads().keys().cloned().collect();
    for name in &names {
        if !name.ends_with(".weight") {
            model.params_mut().get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
    }
    let x = rand_tensor(rng, &[2, 1, 9], -2.0, 2.0);
    let (det, par) = ([1usize, 2], [3usize, 0]);
    let loss_of = |m: &Model| {
        let (out, cache) = m.forward(&x, Some(&det), BnMode::Batch).unwrap();
        (joint_loss(&out, &det, &par, &m.spec().param_widths, 0.7, None).unwrap(), cache)
    };
    let (l, cache) = loss_of(&model);
    let mut grads = model.zero_grads();
    model.backward(&cache, &l.d_det_logits, &l.d_param_logits, &mut grads, true);
    let mut worst = 0.0f64;
    for name in &names {
        let t = model.param(name).clone();
        worst = worst.max(fd_worst(&t, grads[name].data(), |probe| {
            let mut m = model.clone();
            *m.params_mut().get_mut(name).unwrap() = probe.clone();
            loss_of(&m).0.loss
        }));
    }
    worst
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: Vec<(&str, f64)> = vec![
        ("conv1d", 0.0),
        ("batchnorm", 0.0),
        ("batchnorm-running", 0.0),
        ("relu", 0.0),
        ("gap", 0.0),
        ("dense", 0.0),
        ("softmax-ce", 0.0),
    ];
    for _ in 0..10 {
        let errs = [
            check_conv(&mut rng),
            check_batchnorm(&mut rng, false),
            check_batchnorm(&mut rng, true),
            check_relu(&mut rng),
            check_gap(&mut rng),
            check_dense(&mut rng),
            check_softmax_ce(&mut rng),
        ];
        for (slot, e) in worst.iter_mut().zip(errs) {
            slot.1 = slot.1.max(e);
        }
    }
    for (variant, name) in [(Variant::Ns, "model-ns"), (Variant::Ssr, "model-ssr"), (Variant::Atsdln, "model-atsdln")] {
        worst.push((name, check_model(&mut rng, variant)));
    }
    let pass = worst.iter().all(|(_, e)| *e <= FD_REL_TOL);
    let detail = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("h={FD_STEP:.0e}, tol {FD_REL_TOL:.0e}, 10 reps: {detail}"))
}

// training

fn overfit() -> Outcome {
    let p = Protocol {
        train_series_per_type: 10,
        ..protocol()
    };
    let grids = GridSet::default();
    let split = Split::new(&p, 7).unwrap();
    let full = label_split(&p, &split, &grids).unwrap();
    let mut idx: Vec<usize> = (0..full.len()).collect();
    use rand::seq::SliceRandom;
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    idx.truncate(200);
    let data = full.subset(&idx).unwrap();
    let config = TrainConfig {
        max_epochs: 200,
        early_stop_patience: 200,
        validation_fraction: 0.0,
        seed: 7,
        ..TrainConfig::default()
    };
    let out = train(&data, p.spec(&grids, Variant::Atsdln), &config).unwrap();
    let hit = out.log.iter().find(|e| {
        e.train_detector_accuracy.is_some_and(|a| a >= 0.95) && e.train_joint_accuracy.is_some_and(|a| a >= 0.9)
    });
    let last = out.log.last().unwrap();
    let best_det = out.log.iter().filter_map(|e| e.train_detector_accuracy).fold(0.0, f64::max);
    let best_joint = out.log.iter().filter_map(|e| e.train_joint_accuracy).fold(0.0, f64::max);
    outcome(
        data.len() == 200 && hit.is_some(),
        format!(
            "{} examples, filters 32/64/32: {} (best detector acc {best_det:.3}, joint {best_joint:.3}, {} epochs run)",
            data.len(),
            hit.map_or("targets not reached".to_string(), |e| format!("det >= 0.95 and joint >= 0.9 at epoch {}", e.epoch)),
            last.epoch
        ),
    )
}

fn no_free_lunch() -> Outcome {
    let data = &seed_runs()[0].data;
    let winners: BTreeSet<usize> = data.combo_counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i).collect();
    let top = data.combo_counts.iter().max().copied().unwrap_or(0);
    outcome(
        winners.len() >= 3,
        format!(
            "{} windows, {} distinct argmax combos, most frequent winner covers {:.1}%",
            data.len(),
            winners.len(),
            100.0 * top as f64 / data.len() as f64
        ),
    )
}

fn single_model_comparison() -> Outcome {
    let runs = seed_runs();
    let a = mean(runs.iter().map(|r| r.atsdln.test.metrics.f1));
    let s = mean(runs.iter().map(|r| r.best_single_f1));
    outcome(a > s, format!("mean held-out F1 adaptive {a:.4} vs best single combo {s:.4}"))
}

fn ablation_ordering() -> Outcome {
    let runs = seed_runs();
    let a = mean(runs.iter().map(|r| r.atsdln.test.metrics.f1));
    let s = mean(runs.iter().map(|r| r.ssr.test.metrics.f1));
    let n = mean(runs.iter().map(|r| r.ns.test.metrics.f1));
    outcome(a >= s && s >= n, format!("mean held-out F1 atsdln {a:.4}, ssr {s:.4}, ns {n:.4}"))
}

fn transfer_direction() -> Outcome {
    let p = protocol();
    let mut warm_p = p.clone();
    warm_p.train.freeze = FreezeSchedule::Epochs(10);
    let source = SourceConfig::default();
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in seed_runs() {
        let split = Split::new(&p, r.seed).unwrap();
        let pre = pretrain_synthetic(&p, &source, &r.data.grids, r.seed).unwrap();
        let warm = train_and_score(&warm_p, &r.data, &split.test_series(), Variant::Atsdln, r.seed, Some(&pre.backbone)).unwrap();
        let cold = &r.atsdln;
        let (cf, wf) = (cold.test.metrics.f1, warm.test.metrics.f1);
        let ce = cold.outcome.epochs_to_train_accuracy(0.8);
        let we = warm.outcome.epochs_to_train_accuracy(0.8);
        let faster = match (we, ce) {
            (Some(w), Some(c)) => w < c,
            (Some(_), None) => true,
            _ => false,
        };
        if wf > cf || faster {
            wins += 1;
        }
        let ep = |e: Option<usize>| e.map_or("-".to_string(), |v| v.to_string());
        parts.push(format!(
            "seed {}: F1 {cf:.4} -> {wf:.4}, epochs to 0.8 {} -> {} (source acc {:.2})",
            r.seed,
            ep(ce),
            ep(we),
            pre.final_accuracy()
        ));
    }
    outcome(wins >= 2, format!("{wins}/3 seeds improved; {}", parts.join("; ")))
}

fn baseline_comparison() -> Outcome {
    let runs = seed_runs();
    let pass = runs.iter().all(|r| r.vote_f1 < r.atsdln.test.metrics.f1);
    let parts: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: vote {:.4} vs adaptive {:.4}", r.seed, r.vote_f1, r.atsdln.test.metrics.f1))
        .collect();
    outcome(pass, parts.join("; "))
}

fn window_size_direction() -> Outcome {
    let corpus = anomaly_corpus(&CorpusConfig::default(), 42).unwrap();
    let series: Vec<_> = corpus.into_iter().map(|c| c.series).collect();
    let study = window_size_study(&VotePool::standard(), &series, &[50, 200]).unwrap();
    let (f50, f200) = (study[0].1.metrics.f1, study[1].1.metrics.f1);
    outcome(f50 <= f200, format!("vote F1 at W=50 {f50:.4}, at W=200 {f200:.4}"))
}

fn persistence() -> Outcome {
    let bundle = &seed_runs()[0].atsdln.bundle;
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    bundle.save(&a).unwrap();
    let loaded = ModelBundle::load(&a).unwrap();
    loaded.save(&b).unwrap();
    let identical = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    let split = Split::new(&protocol(), 99).unwrap();
    let windows: Vec<_> = split
        .test_series()
        .iter()
        .flat_map(|s| slide_windows(s, 200, 20).unwrap())
        .take(100)
        .collect();
    let before = bundle.predict_batch(&windows).unwrap();
    let after = loaded.predict_batch(&windows).unwrap();
    let same = windows.len() == 100 && before == after;
    outcome(identical && same, format!("save-load-save bytes identical: {identical}; {} predictions equal: {same}", windows.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("metric exactness", metric_exactness),
        ("detector pairings", detector_pairings),
        ("oracle equivalence", oracle_equivalence),
        ("gradient checks", gradient_checks),
        ("overfit sanity", overfit),
        ("no free lunch", no_free_lunch),
        ("adaptive beats best single combo", single_model_comparison),
        ("ablation ordering", ablation_ordering),
        ("transfer direction", transfer_direction),
        ("vote baseline below adaptive", baseline_comparison),
        ("window size direction", window_size_direction),
        ("persistence", persistence),
    ];
    let only: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in criteria {
        if only.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "{} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var("ATSDLN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
