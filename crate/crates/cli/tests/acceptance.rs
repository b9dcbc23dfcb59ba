//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mfst_core::eval::{center_error, iou, precision_at, precision_curve, success_auc, SequenceResult};
use mfst_core::numkit::{conv2d, conv2d_winograd, max_pool, WinogradKernels};
use mfst_core::recal::{apply_channel_weights, SeBlocks};
use mfst_core::response::{fuse, hierarchical_fuse, logistic_loss, make_label_map, FusionPlan, FusionStrategy};
use mfst_core::synth::{SyntheticSequence, SyntheticSpec};
use mfst_core::tracker::{TrackerConfig, TrackerState};
use mfst_core::{
    correlate_layers, cross_correlate, forward_features, seeded_random_weights, BoundingBox, Grid, KernelBank,
    Layer, LabelMap, Model, ResponseMap, SiameseNetwork, Tensor3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pinned from the reference build: seed-0 weights, default synthetic
/// sequence, default tracker.
const PINNED_MEAN_CENTER_ERROR: f64 = 1.030;
const PINNED_TOLERANCE: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Tensor3 {
    Tensor3::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0..1.0))
}

fn random_bank(rng: &mut ChaCha8Rng, kh: usize, kw: usize, cin: usize, cout: usize) -> KernelBank {
    let w = (0..kh * kw * cin * cout).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = (0..cout).map(|_| rng.random_range(-1.0..1.0)).collect();
    KernelBank::new(kh, kw, cin, cout, w, b).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ResponseMap {
    ResponseMap::unlabeled(Grid::from_fn(17, 17, |_, _| rng.random_range(lo..hi)))
}

fn argmax(g: &Grid) -> usize {
    let d = g.data();
    (0..d.len()).fold(0, |best, i| if d[i] > d[best] { i } else { best })
}

fn shape_chain() -> Outcome {
    let start = Instant::now();
    let store = seeded_random_weights(0);
    let z = Tensor3::filled(127, 127, 3, 0.5);
    let x = Tensor3::filled(255, 255, 3, 0.5);
    let mut ok = true;
    for model in Model::ALL {
        let fz = forward_features(&z, model, &store).unwrap();
        let fx = forward_features(&x, model, &store).unwrap();
        ok &= fz.shapes() == [(10, 10, 384), (8, 8, 384), (6, 6, 256)];
        ok &= fx.shapes() == [(26, 26, 384), (24, 24, 384), (22, 22, 256)];
    }
    let net = SiameseNetwork::from_store(&store).unwrap();
    let maps = correlate_layers(&net.all_features(&z).unwrap(), &net.all_features(&x).unwrap()).unwrap();
    ok &= maps.iter().count() == 6 && maps.iter().all(|m| m.shape() == (17, 17));
    let elapsed = start.elapsed();
    outcome(ok && elapsed < Duration::from_secs(1), format!("exact shapes, {:.2} s (< 1 s)", elapsed.as_secs_f64()))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 120;
    let mut worst = [0.0f64; 5];

    for _ in 0..n {
        let (kh, kw, stride) = (rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=3));
        let (h, w) = (rng.random_range(kh..=12), rng.random_range(kw..=12));
        let (cin, cout) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let input = random_tensor(&mut rng, h, w, cin);
        let k = random_bank(&mut rng, kh, kw, cin, cout);
        let got = conv2d(&input, &k, stride).unwrap();
        let wino = conv2d_winograd(&input, &WinogradKernels::new(&k).unwrap()).unwrap();
        let (oh, ow) = ((h - kh) / stride + 1, (w - kw) / stride + 1);
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut s = k.bias()[co] as f64;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            for ci in 0..cin {
                                s += input.get(oy * stride + ky, ox * stride + kx, ci) as f64
                                    * k.weight(ky, kx, ci, co) as f64;
                            }
                        }
                    }
                    worst[0] = worst[0].max((got.get(oy, ox, co) as f64 - s).abs());
                    if stride == 1 {
                        worst[1] = worst[1].max((wino.get(oy, ox, co) as f64 - s).abs());
                    }
                }
            }
        }
    }

    for _ in 0..n {
        let (size, stride) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let (h, w, c) = (rng.random_range(size..=9), rng.random_range(size..=9), rng.random_range(1..=3));
        let input = random_tensor(&mut rng, h, w, c);
        let got = max_pool(&input, size, stride).unwrap();
        for oy in 0..(h - size) / stride + 1 {
            for ox in 0..(w - size) / stride + 1 {
                for ch in 0..c {
                    let mut m = f32::NEG_INFINITY;
                    for y in 0..size {
                        for x in 0..size {
                            m = m.max(input.get(oy * stride + y, ox * stride + x, ch));
                        }
                    }
                    worst[2] = worst[2].max((got.get(oy, ox, ch) - m).abs() as f64);
                }
            }
        }
    }

    for _ in 0..n {
        let (hz, wz, c) = (rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=4));
        let (hx, wx) = (rng.random_range(hz..=10), rng.random_range(wz..=10));
        let z = random_tensor(&mut rng, hz, wz, c);
        let x = random_tensor(&mut rng, hx, wx, c);
        let got = cross_correlate(&z, &x).unwrap();
        for u in 0..=hx - hz {
            for v in 0..=wx - wz {
                let mut s = 0.0f64;
                for i in 0..hz {
                    for j in 0..wz {
                        for ch in 0..c {
                            s += z.get(i, j, ch) as f64 * x.get(u + i, v + j, ch) as f64;
                        }
                    }
                }
                worst[3] = worst[3].max((got.grid.get(u, v) - s).abs());
            }
        }
    }

    for _ in 0..n {
        let map = random_map(&mut rng, -30.0, 30.0);
        let labels = LabelMap {
            grid: Grid::from_fn(17, 17, |_, _| if rng.random_bool(0.3) { 1.0 } else { -1.0 }),
            radius: 0.0,
        };
        let naive: f64 = map
            .grid
            .data()
            .iter()
            .zip(labels.grid.data())
            .map(|(v, y)| (1.0 + (-y * v).exp()).ln())
            .sum::<f64>()
            / 289.0;
        worst[4] = worst[4].max((logistic_loss(&map, &labels).unwrap() - naive).abs());
    }

    let elapsed = start.elapsed();
    let max = worst.iter().cloned().fold(0.0, f64::max);
    outcome(
        max < 1e-5 && elapsed < Duration::from_secs(30),
        format!(
            "{n} instances each; max |diff| conv {:.1e}, conv(winograd) {:.1e}, pool {:.1e}, xcorr {:.1e}, loss {:.1e} (< 1e-5); {:.1} s (< 30 s)",
            worst[0], worst[1], worst[2], worst[3], worst[4], elapsed.as_secs_f64()
        ),
    )
}

fn se_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let store = seeded_random_weights(0);
    let mut in_range = true;
    let mut zero_ok = true;
    let mut worst = 0.0f64;
    for model in Model::ALL {
        let blocks = SeBlocks::from_store(&store, model).unwrap();
        for layer in [Layer::C3, Layer::C4, Layer::C5] {
            let se = blocks.get(layer);
            let c = se.channels();
            let zero = se.channel_weights(&Tensor3::zeros(2, 2, c)).unwrap();
            zero_ok &= zero.iter().all(|&w| w == 0.5);
        }
    }
    let blocks = SeBlocks::from_store(&store, Model::S).unwrap();
    for i in 0..1000 {
        let layer = [Layer::C3, Layer::C4, Layer::C5][i % 3];
        let se = blocks.get(layer);
        let c = se.channels();
        let scale = [1e-3, 1.0, 50.0, 1e4][i % 4];
        let x = Tensor3::from_fn(3, 3, c, |_, _, _| rng.random_range(-scale..scale));
        let w = se.channel_weights(&x).unwrap();
        in_range &= w.iter().all(|&v| v > 0.0 && v < 1.0);
        if i % 10 == 0 {
            let out = se.recalibrate(&x).unwrap();
            let injected = apply_channel_weights(&x, &w).unwrap();
            for r in 0..3 {
                for col in 0..3 {
                    for ch in 0..c {
                        let expect = w[ch] * x.get(r, col, ch) as f64;
                        let d1 = (out.get(r, col, ch) as f64 - expect).abs() / (1.0 + expect.abs());
                        let d2 = (injected.get(r, col, ch) as f64 - expect).abs() / (1.0 + expect.abs());
                        worst = worst.max(d1).max(d2);
                    }
                }
            }
        }
    }
    outcome(
        in_range && zero_ok && worst < 1e-6,
        format!("1000 inputs in (0,1): {in_range}; zero input -> 0.5 exactly: {zero_ok}; recalibration diff {worst:.1e} (< 1e-6)"),
    )
}

fn fusion_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let plan = FusionPlan::default();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let maps: Vec<ResponseMap> = (0..3).map(|_| random_map(&mut rng, 0.01, 3.0)).collect();
        let w = [0.1, 0.3, 0.7];
        let m: Vec<f64> = maps.iter().map(|m| m.max()).collect();
        for strategy in [FusionStrategy::HardWeight, FusionStrategy::SoftMean, FusionStrategy::SoftWeight] {
            let got = fuse(&maps, &w, strategy, 1e-12).unwrap();
            for i in 0..289 {
                let v: Vec<f64> = maps.iter().map(|m| m.grid.data()[i]).collect();
                let expect = match strategy {
                    FusionStrategy::HardWeight => 0.1 * v[0] + 0.3 * v[1] + 0.7 * v[2],
                    FusionStrategy::SoftMean => v[0] / m[0] + v[1] / m[1] + v[2] / m[2],
                    FusionStrategy::SoftWeight => 0.1 * v[0] / m[0] + 0.3 * v[1] / m[1] + 0.7 * v[2] / m[2],
                };
                worst = worst.max((got.grid.data()[i] - expect).abs());
            }
        }
        let s: [ResponseMap; 3] = [maps[0].clone(), maps[1].clone(), maps[2].clone()];
        let a: [ResponseMap; 3] = std::array::from_fn(|_| random_map(&mut rng, 0.01, 3.0));
        let got = hierarchical_fuse(&s, &a, &plan).unwrap();
        let ma: Vec<f64> = a.iter().map(|m| m.max()).collect();
        let rs: Vec<f64> = (0..289).map(|i| 0.1 * s[0].grid.data()[i] + 0.3 * s[1].grid.data()[i] + 0.7 * s[2].grid.data()[i]).collect();
        let ra: Vec<f64> = (0..289)
            .map(|i| 0.1 * a[0].grid.data()[i] / ma[0] + 0.6 * a[1].grid.data()[i] / ma[1] + 0.3 * a[2].grid.data()[i] / ma[2])
            .collect();
        let mrs = rs.iter().cloned().fold(f64::MIN, f64::max);
        let mra = ra.iter().cloned().fold(f64::MIN, f64::max);
        for i in 0..289 {
            worst = worst.max((got.grid.data()[i] - (0.3 * rs[i] / mrs + 0.7 * ra[i] / mra)).abs());
        }
    }

    let mut invariant = 0;
    for _ in 0..1000 {
        let s: [ResponseMap; 3] = std::array::from_fn(|_| random_map(&mut rng, 0.01, 1.0));
        let a: [ResponseMap; 3] = std::array::from_fn(|_| random_map(&mut rng, 0.01, 1.0));
        let k = rng.random_range(0.01..100.0);
        let scale = |m: &ResponseMap| ResponseMap::unlabeled(m.grid.map(|v| v * k));
        let base = hierarchical_fuse(&s, &a, &plan).unwrap();
        let scaled = hierarchical_fuse(&s.each_ref().map(scale), &a.each_ref().map(scale), &plan).unwrap();
        let mut ok = argmax(&base.grid) == argmax(&scaled.grid);
        for (maps, w) in [(&s, [0.1, 0.3, 0.7]), (&a, [0.1, 0.6, 0.3])] {
            for strategy in [FusionStrategy::HardWeight, FusionStrategy::SoftMean, FusionStrategy::SoftWeight] {
                let f0 = fuse(maps, &w, strategy, 1e-12).unwrap();
                let f1 = fuse(&maps.each_ref().map(scale), &w, strategy, 1e-12).unwrap();
                ok &= argmax(&f0.grid) == argmax(&f1.grid);
            }
        }
        invariant += ok as usize;
    }
    outcome(
        worst < 1e-9 && invariant == 1000,
        format!("max |diff| vs hand composition {worst:.1e} (< 1e-9); argmax invariant on {invariant}/1000 scaled triples"),
    )
}

fn loss_constants() -> Outcome {
    let labels = make_label_map(16.0).unwrap();
    let zero = logistic_loss(&ResponseMap::unlabeled(Grid::zeros(17, 17)), &labels).unwrap();
    let ones = LabelMap {
        grid: Grid::filled(17, 17, 1.0),
        radius: 0.0,
    };
    let sat = logistic_loss(&ResponseMap::unlabeled(Grid::filled(17, 17, 1000.0)), &ones).unwrap();
    let big_pos = logistic_loss(&ResponseMap::unlabeled(Grid::filled(17, 17, 1e4)), &labels).unwrap();
    let big_neg = logistic_loss(&ResponseMap::unlabeled(Grid::filled(17, 17, -1e4)), &labels).unwrap();
    let ok = (zero - std::f64::consts::LN_2).abs() < 1e-9 && sat < 1e-6 && big_pos.is_finite() && big_neg.is_finite();
    outcome(
        ok,
        format!("v=0 -> {zero:.12} (ln 2 +- 1e-9); saturated {sat:.1e} (< 1e-6); |v|=1e4 -> {big_pos:.1}, {big_neg:.1} (finite)"),
    )
}

fn end_to_end() -> Outcome {
    let seq = SyntheticSequence::new(SyntheticSpec::default()).unwrap();
    let spec = seq.spec();
    let gt = seq.ground_truth().to_vec();
    let net = Arc::new(SiameseNetwork::from_store(&seeded_random_weights(0)).unwrap());
    let start = Instant::now();
    let mut state = TrackerState::init(&seq.frame(0), gt[0], net, TrackerConfig::default()).unwrap();
    let mut boxes = vec![gt[0]];
    for k in 1..seq.len() {
        boxes.push(state.track_frame(&seq.frame(k)).unwrap().bbox);
    }
    let elapsed = start.elapsed();
    let result = SequenceResult::new(boxes, gt).unwrap();
    let mean = result.mean_center_error();
    let p20 = precision_at(&result, 20.0);
    let pinned = (mean - PINNED_MEAN_CENTER_ERROR).abs() <= PINNED_TOLERANCE;
    outcome(
        mean <= 8.0 && p20 == 1.0 && pinned && elapsed < Duration::from_secs(60),
        format!(
            "{} frames, velocity ({}, {}): mean center error {mean:.3} px (<= 8, pinned {PINNED_MEAN_CENTER_ERROR} +- {PINNED_TOLERANCE}), precision@20 {p20:.3} (= 1), AUC {:.3}, {:.1} s (< 60 s)",
            seq.len(),
            spec.velocity.0,
            spec.velocity.1,
            success_auc(&result),
            elapsed.as_secs_f64()
        ),
    )
}

fn metric_fixtures() -> Outcome {
    let a = BoundingBox::from_corner(0.0, 0.0, 2.0, 2.0).unwrap();
    let b = BoundingBox::from_corner(1.0, 1.0, 2.0, 2.0).unwrap();
    let iou_ok = iou(&a, &b) == 1.0 / 7.0;
    let gt: Vec<BoundingBox> = (0..30).map(|i| BoundingBox::new(50.0 + i as f64, 60.0, 20.0, 20.0).unwrap()).collect();
    let same = SequenceResult::new(gt.clone(), gt.clone()).unwrap();
    let auc_ok = success_auc(&same) == 20.0 / 21.0;
    let mut pred = gt.clone();
    for (i, p) in pred.iter_mut().enumerate().skip(1) {
        p.cx += i as f64 * 1.5;
    }
    let r = SequenceResult::new(pred, gt.clone()).unwrap();
    let curve = precision_curve(&r);
    let monotone = curve.windows(2).all(|w| w[0].1 <= w[1].1);
    let err_ok = center_error(&a, &b) == 2f64.sqrt();
    outcome(
        iou_ok && auc_ok && monotone && err_ok,
        format!("IoU = 1/7: {iou_ok}; identical boxes AUC = 20/21: {auc_ok}; precision curve monotone: {monotone}"),
    )
}

fn run(bin: &str, args: &[&str]) -> bool {
    Command::new(bin).args(args).output().map(|o| o.status.success()).unwrap_or(false)
}

fn pipeline(bin: &str, dir: &Path) -> Option<(Vec<u8>, Vec<u8>)> {
    let p = |n: &str| dir.join(n).to_str().unwrap().to_string();
    let ok = run(bin, &["synth", "--out", &p("seq"), "--length", "5", "--seed", "3", "--noise", "0.02"])
        && run(
            bin,
            &["track", "--seed", "0", "--frames", &p("seq/frames"), "--gt", &p("seq/groundtruth.txt"), "--out", &p("result.txt")],
        )
        && run(bin, &["eval", "--result", &p("result.txt"), "--gt", &p("seq/groundtruth.txt"), "--out-dir", &p("eval")]);
    if !ok {
        return None;
    }
    let mut eval = std::fs::read(dir.join("eval/report.txt")).ok()?;
    eval.extend(std::fs::read(dir.join("eval/precision.txt")).ok()?);
    eval.extend(std::fs::read(dir.join("eval/success.txt")).ok()?);
    Some((std::fs::read(dir.join("result.txt")).ok()?, eval))
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_mfst");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (pipeline(bin, a.path()), pipeline(bin, b.path())) {
        (Some(x), Some(y)) => outcome(x == y, format!("result and eval files byte-identical across two runs: {}", x == y)),
        _ => outcome(false, "a pipeline stage exited nonzero"),
    }
}

fn main() {
    // `cargo test -- <filter>` passes arguments; run everything regardless,
    // but honour `--list` so test discovery tools do not execute the suite.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("shape chain", shape_chain),
        ("oracle equivalence", oracle_equivalence),
        ("SE contract", se_contract),
        ("fusion algebra", fusion_algebra),
        ("loss constants", loss_constants),
        ("end-to-end synthetic tracking", end_to_end),
        ("metric fixtures", metric_fixtures),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked"));
        println!("{} {name}: {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
        failed += !result.pass as usize;
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
