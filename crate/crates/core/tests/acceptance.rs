//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its measured numbers. Criteria are pinned here in code —
//! tolerances, thresholds, and time budgets included.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use rgc_oct::loss::{dice_entropy_grad, dice_entropy_loss, LossConfig};
use rgc_oct::metrics::{confusion_metrics, pearson, roc, ConfusionCounts};
use rgc_oct::nn::layers::{
    batchnorm_backward, batchnorm_forward_train, fully_connected_backward, fully_connected_forward,
};
use rgc_oct::nn::{
    atrous_conv_backward, atrous_conv_forward, count_parameters, fixed_schedule, gridding_coverage,
    make_schedule, ConvKernel, LayerSpec, NetworkSpec, Node, Padding,
};
use rgc_oct::pipeline::{pipeline_run, Manifest, ManifestRecord, RunConfig};
use rgc_oct::profiles::thickness;
use rgc_oct::rng::Rng;
use rgc_oct::scan::{
    generate_synthetic, write_mask, write_scan, write_sidecar, GradeLabel, ScanSidecar, SynthConfig,
};
use rgc_oct::train::TrainConfig;
use rgc_oct::Tensor4;

fn random_tensor(rng: &mut Rng, n: usize, c: usize, h: usize, w: usize) -> Tensor4 {
    let data = (0..n * c * h * w)
        .map(|_| rng.uniform() * 2.0 - 1.0)
        .collect();
    Tensor4::from_vec(n, c, h, w, data).unwrap()
}

// ---------------------------------------------------------------------------
// Criterion 1: dilation schedules
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_dilation_schedules_exact() {
    let started = Instant::now();
    let five = make_schedule(5, 3).unwrap();
    let three = make_schedule(3, 3).unwrap();
    assert_eq!(five.rates, vec![1, 2, 3, 4, 5]);
    assert_eq!(three.rates, vec![2, 3, 4]);
    let elapsed = started.elapsed();
    assert!(elapsed.as_millis() < 1, "took {elapsed:?}");
    println!(
        "[PASS] criterion 1: make_schedule(5,3) = {:?}, make_schedule(3,3) = {:?} in {elapsed:?}",
        five.rates, three.rates
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: atrous convolution vs dense and the naive oracle
// ---------------------------------------------------------------------------

/// Literal per-pixel dilated-convolution sum; taps gathered in the same
/// (in-channel, tap-row, tap-col) order the fast path accumulates so the
/// r = 1 comparison can demand bit equality.
fn naive_conv(x: &Tensor4, k: &ConvKernel, padding: Padding) -> Tensor4 {
    let (n, _c, h, w) = x.shape();
    let r = k.dilation as i64;
    let (ci, cj) = ((k.kh / 2) as i64, (k.kw / 2) as i64);
    let (oh, ow, ylo, xlo) = match padding {
        Padding::Same => (h, w, 0i64, 0i64),
        Padding::Valid => (
            h - k.dilation * (k.kh - 1),
            w - k.dilation * (k.kw - 1),
            r * (k.kh as i64 - 1 - ci),
            r * (k.kw as i64 - 1 - cj),
        ),
    };
    let mut out = Tensor4::zeros(n, k.out_ch, oh, ow);
    for b in 0..n {
        for oc in 0..k.out_ch {
            for y in 0..oh as i64 {
                for x_ in 0..ow as i64 {
                    let mut acc = k.bias()[oc];
                    for ic in 0..k.in_ch {
                        for ki in 0..k.kh as i64 {
                            for kj in 0..k.kw as i64 {
                                let sy = y + ylo + r * (ci - ki);
                                let sx = x_ + xlo + r * (cj - kj);
                                if sy >= 0 && sy < h as i64 && sx >= 0 && sx < w as i64 {
                                    acc += k.w(oc, ic, ki as usize, kj as usize)
                                        * x.at(b, ic, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    *out.at_mut(b, oc, y as usize, x_ as usize) = acc;
                }
            }
        }
    }
    out
}

#[test]
fn criterion_2_conv_matches_dense_and_oracle() {
    let started = Instant::now();
    let mut rng = Rng::seed_from_u64(2021);

    // r = 1: bit-for-bit equality with dense convolution on 50 random cases.
    for case in 0..50 {
        let (oc, ic) = (1 + rng.index(3), 1 + rng.index(3));
        let ksz = [1, 3, 5][rng.index(3)];
        let (h, w) = (ksz + rng.index(8), ksz + rng.index(8));
        let batch = 1 + rng.index(2);
        let x = random_tensor(&mut rng, batch, ic, h, w);
        let weight = (0..oc * ic * ksz * ksz)
            .map(|_| rng.uniform() - 0.5)
            .collect();
        let bias = (0..oc).map(|_| rng.uniform() - 0.5).collect();
        let k = ConvKernel::new(oc, ic, ksz, ksz, 1, weight, bias).unwrap();
        let padding = if rng.bool() {
            Padding::Same
        } else {
            Padding::Valid
        };
        let fast = atrous_conv_forward(&x, &k, padding).unwrap();
        let dense = naive_conv(&x, &k, padding);
        assert_eq!(fast, dense, "case {case}: r=1 must match dense bit-for-bit");
    }

    // r in {2,3,4}: within 1e-10 of the naive oracle.
    let mut checked = 0;
    for r in 2..=4usize {
        for _ in 0..17 {
            let (oc, ic) = (1 + rng.index(2), 1 + rng.index(2));
            let ksz = [3, 5][rng.index(2)];
            let need = r * (ksz - 1) + 1;
            let (h, w) = (need + rng.index(6), need + rng.index(6));
            let x = random_tensor(&mut rng, 1, ic, h, w);
            let weight = (0..oc * ic * ksz * ksz)
                .map(|_| rng.uniform() - 0.5)
                .collect();
            let bias = (0..oc).map(|_| rng.uniform() - 0.5).collect();
            let k = ConvKernel::new(oc, ic, ksz, ksz, r, weight, bias).unwrap();
            let padding = if rng.bool() {
                Padding::Same
            } else {
                Padding::Valid
            };
            let fast = atrous_conv_forward(&x, &k, padding).unwrap();
            let slow = naive_conv(&x, &k, padding);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-10, "r={r}");
            }
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 2: 50 dense cases bit-exact, {checked} dilated cases within 1e-10 in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: finite-difference checks of the trained operators
// ---------------------------------------------------------------------------

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

#[test]
fn criterion_3_backward_passes_match_finite_differences() {
    let started = Instant::now();
    let mut rng = Rng::seed_from_u64(33);
    let h_step = 1e-5;
    let mut worst = 0.0f64;

    // Convolution: input, weight, and bias gradients at random shapes.
    for _ in 0..3 {
        let (n, ic, oc, ksz, r) = (
            1 + rng.index(2),
            1 + rng.index(2),
            1 + rng.index(2),
            3,
            1 + rng.index(3),
        );
        let need = r * (ksz - 1) + 2;
        let (hh, ww) = (need + rng.index(4), need + rng.index(4));
        let x = random_tensor(&mut rng, n, ic, hh, ww);
        let (_, _, h, w) = x.shape();
        let weight: Vec<f64> = (0..oc * ic * ksz * ksz)
            .map(|_| rng.uniform() - 0.5)
            .collect();
        let bias: Vec<f64> = (0..oc).map(|_| rng.uniform() - 0.5).collect();
        let kernel = ConvKernel::new(oc, ic, ksz, ksz, r, weight.clone(), bias.clone()).unwrap();
        let out = atrous_conv_forward(&x, &kernel, Padding::Same).unwrap();
        let (on, occ, oh, ow) = out.shape();
        let projection = random_tensor(&mut rng, on, occ, oh, ow);
        let grads = atrous_conv_backward(&projection, &x, &kernel, Padding::Same).unwrap();

        // Sample a handful of coordinates of each gradient.
        for _ in 0..12 {
            let k_idx = rng.index(x.numel());
            let mut plus = x.data().to_vec();
            plus[k_idx] += h_step;
            let mut minus = x.data().to_vec();
            minus[k_idx] -= h_step;
            let eval = |v: Vec<f64>| {
                let xp = Tensor4::from_vec(n, ic, h, w, v).unwrap();
                atrous_conv_forward(&xp, &kernel, Padding::Same)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(projection.data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            };
            let numeric = (eval(plus) - eval(minus)) / (2.0 * h_step);
            worst = worst.max(rel_err(grads.input.data()[k_idx], numeric));
        }
        for _ in 0..12 {
            let k_idx = rng.index(weight.len());
            let mut plus = weight.clone();
            plus[k_idx] += h_step;
            let mut minus = weight.clone();
            minus[k_idx] -= h_step;
            let eval = |v: Vec<f64>| {
                let kp = ConvKernel::new(oc, ic, ksz, ksz, r, v, bias.clone()).unwrap();
                atrous_conv_forward(&x, &kp, Padding::Same)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(projection.data())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            };
            let numeric = (eval(plus) - eval(minus)) / (2.0 * h_step);
            worst = worst.max(rel_err(grads.weight[k_idx], numeric));
        }
    }

    // Batch norm (training mode, gradients through the batch statistics).
    {
        let (n, c, h, w) = (2, 2, 3, 4);
        let x = random_tensor(&mut rng, n, c, h, w);
        let gamma: Vec<f64> = (0..c).map(|_| 0.5 + rng.uniform()).collect();
        let beta: Vec<f64> = (0..c).map(|_| rng.uniform() - 0.5).collect();
        let projection = random_tensor(&mut rng, n, c, h, w);
        let mut rm = vec![0.0; c];
        let mut rv = vec![1.0; c];
        let (_, cache) = batchnorm_forward_train(&x, &gamma, &beta, &mut rm, &mut rv);
        let (gx, dgamma, dbeta) = batchnorm_backward(&projection, &cache, &gamma);
        let eval = |xv: &[f64], g: &[f64], b: &[f64]| {
            let xp = Tensor4::from_vec(n, c, h, w, xv.to_vec()).unwrap();
            let mut rm = vec![0.0; c];
            let mut rv = vec![1.0; c];
            let (out, _) = batchnorm_forward_train(&xp, g, b, &mut rm, &mut rv);
            out.data()
                .iter()
                .zip(projection.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        for k in 0..x.numel() {
            let mut plus = x.data().to_vec();
            plus[k] += h_step;
            let mut minus = x.data().to_vec();
            minus[k] -= h_step;
            let numeric =
                (eval(&plus, &gamma, &beta) - eval(&minus, &gamma, &beta)) / (2.0 * h_step);
            worst = worst.max(rel_err(gx.data()[k], numeric));
        }
        for k in 0..c {
            let mut plus = gamma.clone();
            plus[k] += h_step;
            let mut minus = gamma.clone();
            minus[k] -= h_step;
            let numeric =
                (eval(x.data(), &plus, &beta) - eval(x.data(), &minus, &beta)) / (2.0 * h_step);
            worst = worst.max(rel_err(dgamma[k], numeric));
            let mut plus = beta.clone();
            plus[k] += h_step;
            let mut minus = beta.clone();
            minus[k] -= h_step;
            let numeric =
                (eval(x.data(), &gamma, &plus) - eval(x.data(), &gamma, &minus)) / (2.0 * h_step);
            worst = worst.max(rel_err(dbeta[k], numeric));
        }
    }

    // Fully connected.
    {
        let (n, fin, fout) = (2, 5, 3);
        let x = random_tensor(&mut rng, n, fin, 1, 1);
        let weight: Vec<f64> = (0..fout * fin).map(|_| rng.uniform() - 0.5).collect();
        let bias: Vec<f64> = (0..fout).map(|_| rng.uniform() - 0.5).collect();
        let projection = random_tensor(&mut rng, n, fout, 1, 1);
        let (gx, gw, gb) = fully_connected_backward(&projection, &x, &weight);
        let eval = |xv: &[f64], wv: &[f64], bv: &[f64]| {
            let xp = Tensor4::from_vec(n, fin, 1, 1, xv.to_vec()).unwrap();
            fully_connected_forward(&xp, wv, bv)
                .unwrap()
                .data()
                .iter()
                .zip(projection.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let check = |values: &[f64], grad: &[f64], f: &mut dyn FnMut(&[f64]) -> f64| {
            let mut w = 0.0f64;
            for k in 0..values.len() {
                let mut plus = values.to_vec();
                plus[k] += h_step;
                let mut minus = values.to_vec();
                minus[k] -= h_step;
                let numeric = (f(&plus) - f(&minus)) / (2.0 * h_step);
                w = w.max(rel_err(grad[k], numeric));
            }
            w
        };
        worst = worst.max(check(x.data(), gx.data(), &mut |v| eval(v, &weight, &bias)));
        worst = worst.max(check(&weight, &gw, &mut |v| eval(x.data(), v, &bias)));
        worst = worst.max(check(&bias, &gb, &mut |v| eval(x.data(), &weight, v)));
    }

    // Dice-entropy loss gradient.
    {
        let cfg = LossConfig::default();
        let classes = 3;
        let rows = 5;
        let mut targets = vec![0.0; rows * classes];
        let mut probs = vec![0.0; rows * classes];
        for i in 0..rows {
            targets[i * classes + rng.index(classes)] = 1.0;
            let mut sum = 0.0;
            for j in 0..classes {
                let v = 0.05 + rng.uniform();
                probs[i * classes + j] = v;
                sum += v;
            }
            for j in 0..classes {
                probs[i * classes + j] /= sum;
            }
        }
        let grad = dice_entropy_grad(&targets, &probs, classes, &cfg).unwrap();
        for k in 0..probs.len() {
            let mut plus = probs.clone();
            plus[k] += h_step;
            let mut minus = probs.clone();
            minus[k] -= h_step;
            let numeric = (dice_entropy_loss(&targets, &plus, classes, &cfg).unwrap()
                - dice_entropy_loss(&targets, &minus, classes, &cfg).unwrap())
                / (2.0 * h_step);
            worst = worst.max(rel_err(grad[k], numeric));
        }
    }

    let elapsed = started.elapsed();
    assert!(worst < 1e-4, "max relative error {worst}");
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 3: conv/batch-norm/dense/dice-entropy gradients, max relative error {worst:.2e} in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: confusion-metric fixtures
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_metric_fixtures() {
    let m = confusion_metrics(&ConfusionCounts::new(34, 22, 2, 1));
    let checks = [
        ("acc", m.accuracy.unwrap(), 0.9491),
        ("tpr", m.recall.unwrap(), 0.9714),
        ("tnr", m.specificity.unwrap(), 0.9166),
        ("fpr", m.false_pos_rate.unwrap(), 0.0834),
        ("ppv", m.precision.unwrap(), 0.9444),
        ("f1", m.f1.unwrap(), 0.9577),
    ];
    for (name, got, expect) in checks {
        assert!(
            (got - expect).abs() <= 1e-4,
            "{name}: {got} vs {expect} (tolerance 1e-4)"
        );
    }
    // Grading: 31 correct of 34.
    let g = confusion_metrics(&ConfusionCounts::new(15, 16, 2, 1));
    assert!((g.accuracy.unwrap() - 0.9117).abs() <= 1e-4);
    println!(
        "[PASS] criterion 4: counts (34,22,2,1) -> acc {:.4} tpr {:.4} tnr {:.4} fpr {:.4} ppv {:.4} f1 {:.4}; 31/34 -> {:.4}",
        m.accuracy.unwrap(),
        m.recall.unwrap(),
        m.specificity.unwrap(),
        m.false_pos_rate.unwrap(),
        m.precision.unwrap(),
        m.f1.unwrap(),
        g.accuracy.unwrap()
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: batch-norm parameter accounting
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_batch_norm_accounting() {
    // Three different channel splits all totaling 17,920 batch-norm
    // parameters must each report exactly 8,960 non-learnable.
    for channel_split in [vec![4480], vec![2048, 2048, 384], vec![1120; 4]] {
        let mut nodes = vec![Node {
            layer: LayerSpec::Input,
            inputs: vec![],
        }];
        let mut prev_c = 8usize;
        for &c in &channel_split {
            let prev = nodes.len() - 1;
            nodes.push(Node {
                layer: LayerSpec::Conv {
                    in_ch: prev_c,
                    out_ch: c,
                    kernel: 1,
                    dilation: 1,
                    padding: Padding::Same,
                },
                inputs: vec![prev],
            });
            nodes.push(Node {
                layer: LayerSpec::BatchNorm { channels: c },
                inputs: vec![prev + 1],
            });
            prev_c = c;
        }
        let last = nodes.len() - 1;
        let spec = NetworkSpec {
            name: "bn-accounting".into(),
            input_shape: (8, 2, 2),
            nodes,
            seg_output: last,
            cls_output: last,
        };
        let bn_total: usize = channel_split.iter().map(|c| 4 * c).sum();
        assert_eq!(bn_total, 17_920);
        let count = count_parameters(&spec).unwrap();
        assert_eq!(count.non_learnable, 8_960, "split {channel_split:?}");
    }
    println!("[PASS] criterion 5: 17,920 batch-norm parameters -> exactly 8,960 non-learnable");
}

// ---------------------------------------------------------------------------
// Criterion 6: desk-scale end-to-end run
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_end_to_end_synthetic_run() {
    let started = Instant::now();
    let base = std::env::temp_dir().join(format!("rgc-oct-acceptance-{}", std::process::id()));
    let data = base.join("data");
    let artifacts = base.join("artifacts");
    std::fs::create_dir_all(&data).unwrap();

    // 60 scans at 128x256: the two severity cohorts drawn at the reference
    // means plus a healthy control cohort so screening is a real decision.
    let scale = 3.0;
    let mut rng = Rng::seed_from_u64(42);
    let mut records = Vec::new();
    let cohorts = [
        (GradeLabel::Healthy, 20),
        (GradeLabel::EarlyGlaucoma, 20),
        (GradeLabel::AdvancedGlaucoma, 20),
    ];
    let mut idx = 0;
    for (grade, count) in cohorts {
        for _ in 0..count {
            let cup = SynthConfig::cohort_cup(grade, 256, &mut rng);
            let cfg = SynthConfig::for_grade(grade, 128, 256, scale, 0.02, cup, &mut rng);
            let synth = generate_synthetic(&cfg).unwrap();
            let id = format!("scan{idx:03}");
            let scan_path = data.join(format!("{id}.png"));
            let mask_path = data.join(format!("{id}_mask.png"));
            write_scan(&synth.scan, &scan_path).unwrap();
            write_mask(&synth.mask, &mask_path).unwrap();
            write_sidecar(
                &ScanSidecar {
                    id,
                    axial_scale_um_per_px: scale,
                    grade: Some(synth.grade),
                },
                &scan_path,
            )
            .unwrap();
            records.push(ManifestRecord {
                scan_path,
                mask_path: Some(mask_path),
                grade: Some(synth.grade),
                clinician_grades: [None; 4],
            });
            idx += 1;
        }
    }
    let manifest = Manifest { records };
    let config = RunConfig {
        seed: 42,
        axial_scale_um_per_px: Some(scale),
        train: TrainConfig {
            epochs: 10,
            iters_per_epoch: 48,
            batch_size: 4,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    };

    let report = pipeline_run(&manifest, &config, &artifacts, None).unwrap();
    let elapsed = started.elapsed();

    let rnfl_dice = report.seg.per_class["rnfl"].dice.unwrap();
    let gcip_dice = report.seg.per_class["gcip"].dice.unwrap();
    let screening_acc = report.confusion.rates.accuracy.unwrap();
    let grading_acc = report.grading.as_ref().unwrap().accuracy.unwrap();

    assert!(rnfl_dice >= 0.90, "RNFL dice {rnfl_dice}");
    assert!(gcip_dice >= 0.90, "GC-IPL dice {gcip_dice}");
    assert!(screening_acc >= 0.95, "screening accuracy {screening_acc}");
    assert!(grading_acc >= 0.90, "grading accuracy {grading_acc}");
    assert!(
        elapsed.as_secs_f64() <= 600.0,
        "end-to-end run took {elapsed:?}"
    );
    println!(
        "[PASS] criterion 6: dice RNFL {rnfl_dice:.4} / GC-IPL {gcip_dice:.4}, screening {screening_acc:.4}, grading {grading_acc:.4} in {:.0} s",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: gridding coverage dominance
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_variable_dilation_dominates_fixed() {
    let started = Instant::now();
    for n in 1..=5usize {
        for r in 2..=4usize {
            let fixed = fixed_schedule(n, r).unwrap();
            let variable = make_schedule(n, r).unwrap();
            let cf = gridding_coverage(&fixed, 3).unwrap();
            let cv = gridding_coverage(&variable, 3).unwrap();
            assert!(cv >= cf, "(n={n}, r={r}): variable {cv} < fixed {cf}");
            if n == 5 && r == 3 {
                assert!(cv > cf, "(n=5, r=3) must be strictly better");
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    let cf = gridding_coverage(&fixed_schedule(5, 3).unwrap(), 3).unwrap();
    let cv = gridding_coverage(&make_schedule(5, 3).unwrap(), 3).unwrap();
    println!(
        "[PASS] criterion 7: variable >= fixed coverage for all (n<=5, r in 2..4); at (5,3): {cv:.4} > {cf:.4} in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: thickness pixel-count oracle
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_thickness_equals_pixel_counts() {
    let started = Instant::now();
    let mut rng = Rng::seed_from_u64(88);
    let scale = 2.6;
    for case in 0..100 {
        let grade = [
            GradeLabel::Healthy,
            GradeLabel::EarlyGlaucoma,
            GradeLabel::AdvancedGlaucoma,
        ][rng.index(3)];
        let cup = SynthConfig::cohort_cup(grade, 128, &mut rng);
        let cfg = SynthConfig::for_grade(grade, 160, 128, scale, 0.0, cup, &mut rng);
        let synth = generate_synthetic(&cfg).unwrap();
        let profile = thickness(&synth.mask, scale).unwrap();
        for col in 0..synth.mask.width() {
            if !profile.valid[col] {
                continue;
            }
            let count = |label: u8| {
                (0..synth.mask.height())
                    .filter(|&r| synth.mask.at(r, col) == label)
                    .count() as f64
            };
            assert_eq!(
                profile.rnfl_um[col],
                count(1) * scale,
                "case {case} col {col}"
            );
            assert_eq!(
                profile.gcip_um[col],
                count(2) * scale,
                "case {case} col {col}"
            );
            assert_eq!(
                profile.gcc_um[col],
                profile.rnfl_um[col] + profile.gcip_um[col],
                "case {case} col {col}: additivity"
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("[PASS] criterion 8: 100 random masks, thickness = pixel count x scale exactly in {elapsed:?}");
}

// ---------------------------------------------------------------------------
// Criterion 9: ROC and Pearson against independent oracles
// ---------------------------------------------------------------------------

/// Pair-counting AUC: P(score+ > score-) + 0.5 P(tie).
fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Two-tailed Student-t tail probability by quadrature, gamma-free: with
/// theta_t = atan(t / sqrt(v)),
/// `p = int_{theta_t}^{pi/2} cos^(v-1) / int_0^{pi/2} cos^(v-1)`.
fn t_two_tailed_by_quadrature(t: f64, df: f64) -> f64 {
    let theta_t = (t.abs() / df.sqrt()).atan();
    let f = |theta: f64| theta.cos().powf(df - 1.0);
    let simpson = |a: f64, b: f64, panels: usize| {
        let h = (b - a) / panels as f64;
        let mut acc = f(a) + f(b);
        for i in 1..panels {
            let x = a + i as f64 * h;
            acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    simpson(theta_t, half_pi, 40_000) / simpson(0.0, half_pi, 40_000)
}

#[test]
fn criterion_9_roc_and_pearson_oracles() {
    let started = Instant::now();
    let mut rng = Rng::seed_from_u64(99);

    // ROC: 50 random instances, n <= 500, ties included.
    let mut done = 0;
    while done < 50 {
        let n = 4 + rng.index(497);
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            scores.push((rng.uniform() * 30.0).round() / 30.0);
            labels.push(rng.bool());
        }
        if !labels.iter().any(|l| *l) || labels.iter().all(|l| *l) {
            continue;
        }
        let curve = roc(&scores, &labels).unwrap();
        let expect = auc_by_pairs(&scores, &labels);
        assert!((curve.auc - expect).abs() < 1e-10);
        done += 1;
    }

    // Pearson: direct product-moment evaluation plus quadrature p-values.
    let mut worst_r = 0.0f64;
    let mut worst_p = 0.0f64;
    for _ in 0..50 {
        let n = 4 + rng.index(60);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform() * 10.0).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.7 * v + rng.normal_with(0.0, 2.0))
            .collect();
        let got = pearson(&x, &y).unwrap();

        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (&a, &b) in x.iter().zip(&y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        let r_expect = sxy / (sxx * syy).sqrt();
        worst_r = worst_r.max((got.r - r_expect).abs());

        let df = (n - 2) as f64;
        let t = r_expect * (df / (1.0 - r_expect * r_expect)).sqrt();
        let p_expect = t_two_tailed_by_quadrature(t, df);
        worst_p = worst_p.max((got.p_value - p_expect).abs());
    }
    assert!(worst_r < 1e-8, "pearson r differs from oracle by {worst_r}");
    assert!(
        worst_p < 1e-8,
        "pearson p differs from quadrature by {worst_p}"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 9: 50 AUC instances within 1e-10; 50 pearson instances, max |dr| {worst_r:.2e}, max |dp| {worst_p:.2e} in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: preprocessing traces and the tau rejection rule
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_preprocess_traces_and_tau_rejection() {
    use rgc_oct::preprocess::{
        coherent_tensor_image, extract_retina, structure_tensor, trace_boundaries, PreprocessConfig,
    };
    use rgc_oct::scan::Scan;

    let started = Instant::now();
    let cfg = PreprocessConfig::default();
    assert_eq!(cfg.tau_px, 20);
    let mut rng = Rng::seed_from_u64(1010);

    // 20 noiseless synthetic scans: smoothed traces within +/-2 px of the
    // generator's boundaries at >= 95% of columns.
    let mut columns_total = 0usize;
    let mut columns_ok = 0usize;
    for _ in 0..20 {
        let grade = [
            GradeLabel::Healthy,
            GradeLabel::EarlyGlaucoma,
            GradeLabel::AdvancedGlaucoma,
        ][rng.index(3)];
        let synth_cfg = SynthConfig::for_grade(grade, 128, 256, 3.0, 0.0, None, &mut rng);
        let synth = generate_synthetic(&synth_cfg).unwrap();
        let extraction = extract_retina(&synth.scan, &cfg).unwrap();
        for col in 0..synth.scan.width() {
            columns_total += 1;
            let ilm_err = (extraction.ilm[col] - synth.boundaries.ilm[col]).abs();
            let cho_err = (extraction.choroid[col] - synth.boundaries.choroid[col]).abs();
            if ilm_err <= 2.0 && cho_err <= 2.0 {
                columns_ok += 1;
            }
        }
    }
    let fraction = columns_ok as f64 / columns_total as f64;
    assert!(
        fraction >= 0.95,
        "only {fraction:.3} of columns within 2 px of ground truth"
    );

    // Tau rejection: a bright speck 50 px above the ILM in one column must
    // be rejected by the distance rule at tau = 20.
    let synth_cfg = SynthConfig {
        width_px: 200,
        height_px: 160,
        ilm_offset_px: 60.0,
        ilm_amplitude_px: 3.0,
        ..SynthConfig::default()
    };
    let synth = generate_synthetic(&synth_cfg).unwrap();
    let outlier_col = 100usize;
    let outlier_row = synth.boundaries.ilm[outlier_col] as usize - 50;
    let mut px = synth.scan.pixels().to_vec();
    px[outlier_row * synth.scan.width() + outlier_col] = 1.0;
    let scan = Scan::new(px, synth.scan.height(), synth.scan.width(), 3.0, "outlier").unwrap();
    let st = structure_tensor(&scan, &cfg).unwrap();
    let tensor_img = coherent_tensor_image(&st, &scan);
    let (ilm_trace, _) = trace_boundaries(&tensor_img, &cfg).unwrap();
    assert!(
        !ilm_trace.valid[outlier_col],
        "the 50 px outlier candidate must be rejected at tau = 20"
    );
    // Clean columns away from the speck remain valid and on the band.
    assert!(ilm_trace.valid[10]);
    assert!((ilm_trace.rows[10] - synth.boundaries.ilm[10]).abs() <= 2.0);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "[PASS] criterion 10: {:.1}% of columns within 2 px; tau=20 rejected the 50 px outlier in {elapsed:?}",
        fraction * 100.0
    );
}
