//! End-to-end acceptance suite. Each test checks one release criterion and
//! prints a single `criterion N (...): PASS` / `FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`).

use std::panic::AssertUnwindSafe;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stransformer_core::config::{AblationVariant, MaskSource, ModelConfig, ScnPadding};
use stransformer_core::data::{synth, windows, Normalizer, Split, SynthKind, WindowSpec};
use stransformer_core::metrics;
use stransformer_core::model::{forward, init_params};
use stransformer_core::params::{Conv, Embedding, TcnLayer, TcnParams};
use stransformer_core::seqmask::{full_attention, seq_mask, LN_EPS};
use stransformer_core::stcn::{stcn_forward, tcn_forward};
use stransformer_core::tape::Tape;
use stransformer_core::tensor::Tensor;
use stransformer_core::train::{
    evaluate_forecaster, train, EvalOptions, ModelForecaster, RepeatLastForecaster, TrainConfig,
};
use stransformer_core::verify::gradient_suite;

const GRAD_TOL: f64 = 1e-4;
const GRAD_H: f64 = 1e-5;
const EXACT_TOL: f64 = 1e-12;

/// Runs the criterion body and prints exactly one pass/fail line.
fn report(n: u32, desc: &str, body: impl FnOnce()) {
    match std::panic::catch_unwind(AssertUnwindSafe(body)) {
        Ok(()) => println!("criterion {n} ({desc}): PASS"),
        Err(e) => {
            println!("criterion {n} ({desc}): FAIL");
            std::panic::resume_unwind(e);
        }
    }
}

fn toy_cfg() -> ModelConfig {
    ModelConfig {
        variables: 3,
        lookback: 8,
        horizon: 2,
        embed: 8,
        scn_channels: 4,
        blocks: 1,
        mask_blocks: 1,
        ..ModelConfig::default()
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor {
        shape,
        data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn eval_opts(horizon: usize) -> EvalOptions {
    EvalOptions {
        horizons: vec![horizon],
        normalized_scale: true,
        short_term_metrics: false,
        run_id: "acceptance".into(),
        config_echo: serde_json::Value::Null,
    }
}

// ── 1: gradient suite ────────────────────────────────────────────────

#[test]
fn criterion_1_gradient_suite() {
    report(1, "gradients of every op and the full model within 1e-4", || {
        let start = Instant::now();
        let reports = gradient_suite(&toy_cfg(), GRAD_H).unwrap();
        for r in &reports {
            assert!(
                r.passed(GRAD_TOL),
                "{}: max rel err {:.3e} exceeds {GRAD_TOL:e}",
                r.name,
                r.max_rel_err
            );
        }
        assert!(
            reports.iter().any(|r| r.name == "full_model"),
            "suite must include the composed model"
        );
        let elapsed = start.elapsed().as_secs_f64();
        assert!(elapsed < 60.0, "gradient suite took {elapsed:.1}s (limit 60s)");
    });
}

// ── 2: causality ─────────────────────────────────────────────────────

/// Bit-compares columns 0..=cut of two [c, t] outputs.
fn prefix_bits_equal(a: &Tensor, b: &Tensor, cut: usize) -> bool {
    let (c, t) = (a.shape[0], a.shape[1]);
    (0..c).all(|i| (0..=cut).all(|j| a.data[i * t + j].to_bits() == b.data[i * t + j].to_bits()))
}

#[test]
fn criterion_2_causality() {
    report(2, "future perturbations never change past outputs, bit-exact", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x2222);
        for trial in 0..100 {
            let c = 1 + trial % 3;
            let t = 10 + trial % 8;
            let k = 2 + trial % 2;
            let dilation = [1, 2, 4][trial % 3];
            let x = rand_tensor(&mut rng, vec![c, t]);
            let cut = rng.random_range(0..t - 1);
            let mut x2 = x.clone();
            let hit = rng.random_range(cut + 1..t);
            let row = rng.random_range(0..c);
            x2.data[row * t + hit] += rng.random_range(0.5..2.0);

            // raw causal dilated convolution
            let w = rand_tensor(&mut rng, vec![c, c, k]);
            let b = rand_tensor(&mut rng, vec![c]);
            let run_conv = |input: &Tensor| {
                let mut tape = Tape::new();
                let xv = tape.constant(input.clone());
                let wv = tape.constant(w.clone());
                let bv = tape.constant(b.clone());
                let y = tape.causal_dilated_conv1d(xv, wv, bv, dilation).unwrap();
                tape.value(y).clone()
            };
            assert!(
                prefix_bits_equal(&run_conv(&x), &run_conv(&x2), cut),
                "conv trial {trial}: output changed at or before position {cut}"
            );

            // the stacked temporal branch (two residual layers)
            let tcn = TcnParams {
                layers: (0..2)
                    .map(|l| TcnLayer {
                        conv1: Conv {
                            w: rand_tensor(&mut rng, vec![c, c, k]),
                            b: rand_tensor(&mut rng, vec![c]),
                        },
                        conv2: Conv {
                            w: rand_tensor(&mut rng, vec![c, c, k]),
                            b: rand_tensor(&mut rng, vec![c]),
                        },
                        dilation: 1 << l,
                    })
                    .collect(),
            };
            let run_tcn = |input: &Tensor| {
                let mut tape = Tape::new();
                let xv = tape.constant(input.clone());
                let bound = TcnParams {
                    layers: tcn
                        .layers
                        .iter()
                        .map(|l| TcnLayer {
                            conv1: Conv {
                                w: tape.constant(l.conv1.w.clone()),
                                b: tape.constant(l.conv1.b.clone()),
                            },
                            conv2: Conv {
                                w: tape.constant(l.conv2.w.clone()),
                                b: tape.constant(l.conv2.b.clone()),
                            },
                            dilation: l.dilation,
                        })
                        .collect(),
                };
                let y = tcn_forward(&mut tape, xv, &bound).unwrap();
                tape.value(y).clone()
            };
            assert!(
                prefix_bits_equal(&run_tcn(&x), &run_tcn(&x2), cut),
                "tcn trial {trial}: output changed at or before position {cut}"
            );
        }
    });
}

// ── 3: shape and value contracts ─────────────────────────────────────

#[test]
fn criterion_3_shape_contracts() {
    report(3, "shape/value contracts hold across 50 random configs", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x3333);
        for trial in 0..50usize {
            let m = if trial % 5 == 0 { 1 } else { 1 + rng.random_range(0..4) };
            let f = [4usize, 8][trial % 2];
            let cfg = ModelConfig {
                variables: m,
                lookback: 4 + rng.random_range(0..8),
                horizon: 1 + rng.random_range(0..5),
                embed: f,
                scn_channels: 2 + rng.random_range(0..3),
                mask_blocks: 1 + trial % 2,
                blocks: 1 + trial % 2,
                tcn_layers: 1 + trial % 2,
                tcn_kernel: 2 + trial % 2,
                scn_kernels: if trial % 3 == 0 { vec![3, 2] } else { vec![2] },
                variant: AblationVariant::ALL[trial % 5],
                scn_padding: if trial % 2 == 0 { ScnPadding::Circular } else { ScnPadding::Zero },
                mask_source: if trial % 4 == 0 { MaskSource::Stcn } else { MaskSource::Value },
                ..ModelConfig::default()
            };
            cfg.validate().unwrap();
            let params = init_params(&cfg, 1000 + trial as u64).unwrap();

            // full forward: M x K, finite
            let x = rand_tensor(&mut rng, vec![m, cfg.lookback]);
            let y = forward(&x, &params, &cfg).unwrap();
            assert!(y.all_finite(), "trial {trial}: non-finite forward output");
            assert_eq!(y.shape, vec![m, cfg.horizon], "trial {trial}: forward shape");

            let mut tape = Tape::new();
            let bound = params.map(&mut |t| tape.constant(t.clone()));
            let block = &bound.blocks[0];

            // dual-branch embedding: M x F
            if let Embedding::Stcn(sp) = &block.embed {
                let xv = tape.constant(x.clone());
                let e = stcn_forward(&mut tape, xv, sp, &cfg).unwrap();
                assert_eq!(tape.value(e).shape, vec![m, f], "trial {trial}: embedding shape");
            }

            // attention weight rows are probability distributions
            let emb = rand_tensor(&mut rng, vec![m, f]);
            let ev = tape.constant(emb.clone());
            let q = tape.matmul(ev, block.attn.w_q).unwrap();
            let kk = tape.matmul(ev, block.attn.w_k).unwrap();
            let kt = tape.transpose(kk).unwrap();
            let s = tape.matmul(q, kt).unwrap();
            let s = tape.scale(s, 1.0 / (f as f64).sqrt());
            let a = tape.softmax_rows(s).unwrap();
            let av = tape.value(a).clone();
            for i in 0..m {
                let sum: f64 = (0..m).map(|j| av.at2(i, j)).sum();
                assert!(
                    (sum - 1.0).abs() < EXACT_TOL,
                    "trial {trial}: attention row {i} sums to {sum}"
                );
            }

            // the gate stack produces nonnegative outputs (it ends in a ReLU)
            if let Some(mp) = &block.mask {
                let v = tape.constant(rand_tensor(&mut rng, vec![m, f]));
                let src = tape.constant(rand_tensor(&mut rng, vec![m, f]));
                let g = seq_mask(&mut tape, v, src, mp).unwrap();
                assert!(
                    tape.value(g).data.iter().all(|&v| v >= 0.0),
                    "trial {trial}: negative gated value"
                );
            }
        }
    });
}

// ── 4: oracle equivalence ────────────────────────────────────────────
// Straight-line plain-loop references, no shared helpers with the library.

fn mm(a: &[f64], ra: usize, ca: usize, b: &[f64], cb: usize) -> Vec<f64> {
    let mut out = vec![0.0; ra * cb];
    for i in 0..ra {
        for j in 0..cb {
            for k in 0..ca {
                out[i * cb + j] += a[i * ca + k] * b[k * cb + j];
            }
        }
    }
    out
}

fn ref_ln(x: &[f64], rows: usize, cols: usize, gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = &x[i * cols..(i + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for j in 0..cols {
            out[i * cols + j] = (row[j] - mean) * inv * gain[j] + bias[j];
        }
    }
    out
}

struct RefWeights {
    // attention
    wq: Vec<f64>,
    wk: Vec<f64>,
    wv: Vec<f64>,
    a_lng: Vec<f64>,
    a_lnb: Vec<f64>,
    // one gate block
    gw: Vec<f64>,
    m3w: Vec<f64>,
    m3b: Vec<f64>,
    m4w: Vec<f64>,
    m4b: Vec<f64>,
    g_lng: Vec<f64>,
    g_lnb: Vec<f64>,
    e_lng: Vec<f64>,
    e_lnb: Vec<f64>,
}

fn gen_weights(rng: &mut ChaCha8Rng, f: usize, d_a: usize) -> RefWeights {
    let v = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let g = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| 1.0 + 0.2 * rng.random_range(-1.0..1.0)).collect()
    };
    RefWeights {
        wq: v(rng, f * f),
        wk: v(rng, f * f),
        wv: v(rng, f * f),
        a_lng: g(rng, f),
        a_lnb: v(rng, f),
        gw: v(rng, f * f),
        m3w: v(rng, f * d_a),
        m3b: v(rng, d_a),
        m4w: v(rng, d_a * f),
        m4b: v(rng, f),
        g_lng: g(rng, f),
        g_lnb: v(rng, f),
        e_lng: g(rng, f),
        e_lnb: v(rng, f),
    }
}

fn ref_gate(v: &[f64], source: &[f64], m: usize, f: usize, d_a: usize, w: &RefWeights) -> Vec<f64> {
    let cur = ref_ln(v, m, f, &w.e_lng, &w.e_lnb);
    let mut hidden = mm(source, m, f, &w.m3w, d_a);
    for i in 0..m {
        for j in 0..d_a {
            hidden[i * d_a + j] += w.m3b[j];
            if hidden[i * d_a + j] < 0.0 {
                hidden[i * d_a + j] = 0.0;
            }
        }
    }
    let mut gate = mm(&hidden, m, d_a, &w.m4w, f);
    for i in 0..m {
        for j in 0..f {
            gate[i * f + j] += w.m4b[j];
        }
    }
    let gated: Vec<f64> = cur.iter().zip(&gate).map(|(a, g)| a * g).collect();
    let mixed = mm(&gated, m, f, &w.gw, f);
    ref_ln(&mixed, m, f, &w.g_lng, &w.g_lnb)
        .iter()
        .map(|&x| if x < 0.0 { 0.0 } else { x })
        .collect()
}

fn ref_full_attention(x: &[f64], m: usize, f: usize, w: &RefWeights) -> Vec<f64> {
    let q = mm(x, m, f, &w.wq, f);
    let k = mm(x, m, f, &w.wk, f);
    let vv = mm(x, m, f, &w.wv, f);
    let scale = 1.0 / (f as f64).sqrt();
    let mut weights = vec![0.0; m * m];
    for i in 0..m {
        let mut row = vec![0.0; m];
        for j in 0..m {
            for d in 0..f {
                row[j] += q[i * f + d] * k[j * f + d];
            }
            row[j] *= scale;
        }
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|&s| (s - mx).exp()).collect();
        let sum: f64 = exp.iter().sum();
        for j in 0..m {
            weights[i * m + j] = exp[j] / sum;
        }
    }
    let o = mm(&weights, m, m, &vv, f);
    let res: Vec<f64> = o.iter().zip(x).map(|(a, b)| a + b).collect();
    ref_ln(&res, m, f, &w.a_lng, &w.a_lnb)
}

/// Binds the reference weights onto a tape as library parameter structs.
fn bind(
    tape: &mut Tape,
    w: &RefWeights,
    f: usize,
    d_a: usize,
) -> (
    stransformer_core::params::AttnParams<stransformer_core::tape::Var>,
    stransformer_core::params::MaskParams<stransformer_core::tape::Var>,
) {
    use stransformer_core::params::{Affine, AttnParams, LayerNormParams, MaskBlock, MaskParams};
    let c = |tape: &mut Tape, data: &[f64], shape: Vec<usize>| {
        tape.constant(Tensor { shape, data: data.to_vec() })
    };
    let ap = AttnParams {
        w_q: c(tape, &w.wq, vec![f, f]),
        w_k: c(tape, &w.wk, vec![f, f]),
        w_v: c(tape, &w.wv, vec![f, f]),
        ln: LayerNormParams {
            gain: c(tape, &w.a_lng, vec![f]),
            bias: c(tape, &w.a_lnb, vec![f]),
        },
    };
    let mp = MaskParams {
        ln_emb: LayerNormParams {
            gain: c(tape, &w.e_lng, vec![f]),
            bias: c(tape, &w.e_lnb, vec![f]),
        },
        blocks: vec![MaskBlock {
            w: c(tape, &w.gw, vec![f, f]),
            mlp3: Affine {
                w: c(tape, &w.m3w, vec![f, d_a]),
                b: c(tape, &w.m3b, vec![d_a]),
            },
            mlp4: Affine {
                w: c(tape, &w.m4w, vec![d_a, f]),
                b: c(tape, &w.m4b, vec![f]),
            },
            ln_hid: LayerNormParams {
                gain: c(tape, &w.g_lng, vec![f]),
                bias: c(tape, &w.g_lnb, vec![f]),
            },
        }],
    };
    (ap, mp)
}

#[test]
fn criterion_4_oracle_equivalence() {
    report(4, "gate stack and attention match straight-line oracles within 1e-12", || {
        for trial in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(0x4444 + trial);
            let m = 1 + (trial as usize % 5);
            let f = [4usize, 8][trial as usize % 2];
            let d_a = f + 3;
            let w = gen_weights(&mut rng, f, d_a);
            let v: Vec<f64> = (0..m * f).map(|_| rng.random_range(-1.0..1.0)).collect();
            let src: Vec<f64> = (0..m * f).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..m * f).map(|_| rng.random_range(-1.0..1.0)).collect();

            let mut tape = Tape::new();
            let (ap, mp) = bind(&mut tape, &w, f, d_a);

            let vv = tape.constant(Tensor { shape: vec![m, f], data: v.clone() });
            let sv = tape.constant(Tensor { shape: vec![m, f], data: src.clone() });
            let got = seq_mask(&mut tape, vv, sv, &mp).unwrap();
            let expect = ref_gate(&v, &src, m, f, d_a, &w);
            for (i, (a, b)) in tape.value(got).data.iter().zip(&expect).enumerate() {
                assert!((a - b).abs() < EXACT_TOL, "gate trial {trial}[{i}]: {a} vs {b}");
            }

            let xv = tape.constant(Tensor { shape: vec![m, f], data: x.clone() });
            let got = full_attention(&mut tape, xv, &ap).unwrap();
            let expect = ref_full_attention(&x, m, f, &w);
            for (i, (a, b)) in tape.value(got).data.iter().zip(&expect).enumerate() {
                assert!((a - b).abs() < EXACT_TOL, "attention trial {trial}[{i}]: {a} vs {b}");
            }
        }
    });
}

// ── 5: overfit a small synthetic problem ─────────────────────────────

#[test]
fn criterion_5_overfit_synthetic() {
    report(5, "2000 steps overfit 64 sine windows to train MSE < 1e-2", || {
        let start = Instant::now();
        // 136 points -> 95-point train split -> 95 - (24+8) + 1 = 64 windows
        let ds = synth(SynthKind::Sines, 3, 136, 0.0, 5).unwrap();
        let cfg = ModelConfig {
            variables: 3,
            lookback: 24,
            horizon: 8,
            embed: 16,
            scn_channels: 8,
            blocks: 1,
            mask_blocks: 1,
            tcn_layers: 2,
            scn_kernels: vec![3],
            ..ModelConfig::default()
        };
        let spec = WindowSpec::new(cfg.lookback, cfg.horizon);
        let train_windows = windows(&ds, &spec, Split::Train);
        assert_eq!(train_windows.len(), 64, "expected exactly 64 train windows");

        let tc = TrainConfig {
            lr: 1e-3,
            max_steps: 2000,
            batch_size: 8,
            eval_every: 1000,
            ..TrainConfig::default()
        };
        let params = init_params(&cfg, cfg.seed).unwrap();
        let result = train(&cfg, params, &ds, &tc).unwrap();
        assert_eq!(result.steps_run, 2000);

        let norm = &result.normalizer;
        let mut acc = 0.0;
        for (x, y) in &train_windows {
            let xn = norm.transform(x).unwrap();
            let yn = norm.transform(y).unwrap();
            let pred = forward(&xn, &result.params, &cfg).unwrap();
            acc += metrics::mse(&yn, &pred).unwrap();
        }
        let train_mse = acc / train_windows.len() as f64;
        let elapsed = start.elapsed().as_secs_f64();
        assert!(train_mse < 1e-2, "train MSE {train_mse} not below 1e-2");
        assert!(elapsed < 120.0, "overfit run took {elapsed:.1}s (limit 120s)");
    });
}

// ── 6: beats the naive baseline on hourly-format data ────────────────

#[test]
fn criterion_6_beats_repeat_last_naive() {
    report(6, "trained model beats repeat-last on 2000 hourly points", || {
        // 7-variable hourly CSV in the common energy-dataset column layout
        let mut ds = synth(SynthKind::TrendSeason, 7, 2000, 0.1, 6).unwrap();
        ds.names = ["HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("hourly.csv");
        stransformer_core::data::write_csv(&ds, &csv).unwrap();
        let ds = stransformer_core::data::load_csv(&csv).unwrap();
        assert_eq!(ds.len(), 2000);

        let cfg = ModelConfig {
            variables: 7,
            lookback: 96,
            horizon: 96,
            embed: 32,
            scn_channels: 16,
            blocks: 1,
            mask_blocks: 1,
            tcn_layers: 2,
            scn_kernels: vec![3],
            ..ModelConfig::default()
        };
        let tc = TrainConfig {
            lr: 1e-3,
            max_steps: 800,
            batch_size: 16,
            eval_every: 200,
            ..TrainConfig::default()
        };
        let params = init_params(&cfg, cfg.seed).unwrap();
        let result = train(&cfg, params, &ds, &tc).unwrap();

        // identical evaluation pipeline for both forecasters
        let opts = eval_opts(cfg.horizon);
        let norm = Normalizer::fit(&ds).unwrap();
        let model_fc = ModelForecaster { params: &result.params, cfg: &cfg };
        let model_report =
            evaluate_forecaster(&model_fc, cfg.horizon, cfg.lookback, &ds, &norm, &opts).unwrap();
        let naive_fc = RepeatLastForecaster { horizon: cfg.horizon };
        let naive_report =
            evaluate_forecaster(&naive_fc, cfg.horizon, cfg.lookback, &ds, &norm, &opts).unwrap();

        let (model_mse, naive_mse) =
            (model_report.horizons[0].mse, naive_report.horizons[0].mse);
        assert!(
            model_mse < naive_mse,
            "model test MSE {model_mse} does not beat repeat-last {naive_mse}"
        );
    });
}

// ── 7: ablation grid via the binary ──────────────────────────────────

#[test]
fn criterion_7_ablation_grid() {
    report(7, "5-design grid, shared data checksums, exact mask param delta", || {
        let dir = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_stransformer"))
            .args([
                "ablate",
                "--run-id",
                "acc",
                "--set",
                "data.synth_length=80",
                "--set",
                "data.synth_variables=3",
                "--set",
                "model.variables=3",
                "--set",
                "model.lookback=8",
                "--set",
                "model.horizon=2",
                "--set",
                "model.embed=8",
                "--set",
                "model.scn_channels=4",
                "--set",
                "model.blocks=1",
                "--set",
                "model.mask_blocks=1",
                "--set",
                "train.max_steps=5",
                "--set",
                "train.batch_size=8",
            ])
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "ablate failed: {}", String::from_utf8_lossy(&out.stderr));

        let text = std::fs::read_to_string(dir.path().join("acc.ablation.json")).unwrap();
        let rows: serde_json::Value = serde_json::from_str(&text).unwrap();
        let rows = rows.as_array().unwrap();
        assert_eq!(rows.len(), 5, "grid must contain exactly 5 designs");

        let variants: Vec<&str> =
            rows.iter().map(|r| r["variant"].as_str().unwrap()).collect();
        assert_eq!(
            variants,
            vec!["original", "full_attention", "ffn_for_stcn", "no_attention", "no_stcn"]
        );
        for r in rows {
            assert!(r["error"].is_null(), "variant {} failed: {}", r["variant"], r["error"]);
            assert!(r["report"].is_object(), "variant {} missing report", r["variant"]);
            assert!(r["param_count"].as_u64().unwrap() > 0);
        }
        let checksums: Vec<u64> =
            rows.iter().map(|r| r["data_checksum"].as_u64().unwrap()).collect();
        assert!(checksums[0] != 0 && checksums.iter().all(|&c| c == checksums[0]),
            "designs consumed different data: {checksums:?}");

        // removing the gate stack must drop exactly its parameter count:
        // per model block, 2F (embedding LN) plus, per gate block,
        // F^2 (mixer) + F*d_a + d_a (mlp3) + d_a*F + F (mlp4) + 2F (LN)
        let (f, d_a, n, blocks) = (8u64, 16u64, 1u64, 1u64);
        let expected = blocks * (2 * f + n * (f * f + f * d_a + d_a + d_a * f + f + 2 * f));
        let count = |name: &str| {
            rows.iter()
                .find(|r| r["variant"] == name)
                .unwrap()["param_count"]
                .as_u64()
                .unwrap()
        };
        let delta = count("original") - count("full_attention");
        assert_eq!(delta, expected, "mask parameter delta mismatch");
    });
}

// ── 8: determinism ───────────────────────────────────────────────────

#[test]
fn criterion_8_determinism() {
    report(8, "identical seeded train runs produce bit-identical checkpoints", || {
        let run = |dir: &std::path::Path| {
            let out = Command::new(env!("CARGO_BIN_EXE_stransformer"))
                .args([
                    "train",
                    "--seed",
                    "42",
                    "--run-id",
                    "det",
                    "--set",
                    "data.synth_length=100",
                    "--set",
                    "model.variables=3",
                    "--set",
                    "model.lookback=8",
                    "--set",
                    "model.horizon=2",
                    "--set",
                    "model.embed=8",
                    "--set",
                    "model.scn_channels=4",
                    "--set",
                    "model.blocks=1",
                    "--set",
                    "train.max_steps=20",
                    "--set",
                    "train.batch_size=8",
                ])
                .arg("--out-dir")
                .arg(dir)
                .output()
                .unwrap();
            assert!(out.status.success(), "train failed: {}", String::from_utf8_lossy(&out.stderr));
            std::fs::read(dir.join("det.ckpt.json")).unwrap()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert_eq!(run(a.path()), run(b.path()), "checkpoints differ between identical runs");
    });
}

// ── 9: metric hand values ────────────────────────────────────────────

#[test]
fn criterion_9_metric_hand_values() {
    report(9, "metrics match hand-computed values to 1e-9", || {
        let v = metrics::smape(&[100.0], &[110.0]).unwrap();
        assert!((v - 2000.0 / 210.0).abs() < 1e-9, "smape {v}");

        let v = metrics::mase(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0], 1).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9, "mase {v}");

        let y = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let yhat = Tensor::matrix(1, 2, vec![1.0, 3.0]).unwrap();
        assert!((metrics::mse(&y, &yhat).unwrap() - 5.0).abs() < 1e-9);
        assert!((metrics::mae(&y, &yhat).unwrap() - 2.0).abs() < 1e-9);

        // a baseline compared against itself scores exactly 1
        assert_eq!(metrics::owa(13.7, 0.42, 13.7, 0.42).unwrap(), 1.0);
    });
}
