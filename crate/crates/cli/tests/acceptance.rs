//! Acceptance criteria 1–12, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the summary always reaches stdout.
//! `ACCEPTANCE_ONLY=1,4,12` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::error::Error as StdError;
use std::fs;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use chrono::NaiveDate;
use hydrotrace_cli::commands::{CHECKPOINT_FILE, DATA_DIR, ORACLE_FILE, STORE_DIR};
use hydrotrace_cli::{cmd_attention, cmd_synth, cmd_train, RunConfig};
use hydrotrace_core::analytics::{map_from_json, read_mask_csv, read_table_csv, Period, Season};
use hydrotrace_core::grid::{apply_preprocessing, drop_missing_targets, make_windows, window_frames, GridAxes, GridSeries, WindowedDataset};
use hydrotrace_core::metrics::{classify, nse, pbias, r_squared, rsr, Category, MetricSeries};
use hydrotrace_core::model::{
    depthwise_convlstm_forward, extract_attention, forward, load_checkpoint, ModelHyper, ModelParams, SpatialActivation,
};
use hydrotrace_core::synthetic::Oracle;
use hydrotrace_core::tensor::{Kernel2D, Tensor};
use hydrotrace_core::training::{
    evaluate, finite_difference_check, predict, random_search, random_search_with, run_epochs, train, EpochEvent,
    EpochObjective, LossKind, SearchSpace, TrainConfig, TrialEval,
};
use hydrotrace_service::{Server, StoreIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, Box<dyn StdError>>;

macro_rules! fail {
    ($($arg:tt)+) => { return Err(format!($($arg)+).into()) };
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => { if !$cond { fail!($($arg)+); } };
}

/// Criterion 8 budget per seed: `cmd_train` over the default search space
/// with this many trials, each capped at this many epochs.
const PLANTED_TRIALS: usize = 3;
const PLANTED_MAX_EPOCHS: usize = 50;
const PLANTED_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Artifacts of criterion 8 that criterion 12 serves.
#[derive(Default)]
struct Shared {
    _root: Option<tempfile::TempDir>,
    planted_run: Option<(PathBuf, PathBuf)>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

fn days_from(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n).map(|d| start + chrono::Duration::days(d as i64)).collect()
}

fn axes(h: usize, w: usize) -> GridAxes {
    GridAxes {
        lat: (0..h).map(|i| 35.0 - 0.25 * i as f64).collect(),
        lon: (0..w).map(|j| 85.0 + 0.25 * j as f64).collect(),
    }
}

/// Windowed dataset over uniform noise frames.
fn noise_dataset(seed: u64, days: usize, window: usize, h: usize, w: usize, c: usize) -> WindowedDataset {
    let mut r = rng(seed);
    let frames = Tensor::new(vec![days, h, w, c], random_vec(&mut r, days * h * w * c, -1.0, 1.0)).unwrap();
    let target = random_vec(&mut r, days, 0.0, 1.0);
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let names = (0..c).map(|k| format!("f{k}")).collect();
    window_frames(frames, &days_from(start, days), &target, window, axes(h, w), names).unwrap()
}

// 1 ------------------------------------------------------------------------

fn metric_identities() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = r.gen_range(2..400);
        let o = random_vec(&mut r, n, 0.01, 50.0);
        let ms = MetricSeries::new(o.clone(), o.clone())?;
        for (name, got, want) in [
            ("NSE", nse(&ms)?, 1.0),
            ("PBIAS", pbias(&ms)?, 0.0),
            ("RSR", rsr(&ms)?, 0.0),
            ("R2", r_squared(&ms)?, 1.0),
        ] {
            let err = (got - want).abs();
            ensure!(err <= 1e-12, "P=O gives {name} = {got}");
            worst = worst.max(err);
        }
        let mean = o.iter().sum::<f64>() / n as f64;
        let at_mean = nse(&MetricSeries::new(o.clone(), vec![mean; n])?)?;
        ensure!(at_mean.abs() <= 1e-12, "P=mean(O) gives NSE = {at_mean}");
        worst = worst.max(at_mean.abs());
    }
    Ok(format!("50 series, worst deviation {worst:.1e}"))
}

// 2 ------------------------------------------------------------------------

/// Straight-from-formula metrics, written independently of the library.
fn oracle_metrics(o: &[f64], p: &[f64]) -> [f64; 4] {
    let n = o.len() as f64;
    let o_bar = o.iter().sum::<f64>() / n;
    let p_bar = p.iter().sum::<f64>() / n;
    let mut sq_err = 0.0;
    let mut sq_dev = 0.0;
    let mut diff = 0.0;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    for i in 0..o.len() {
        sq_err += (o[i] - p[i]).powi(2);
        sq_dev += (o[i] - o_bar).powi(2);
        diff += p[i] - o[i];
        cov += (o[i] - o_bar) * (p[i] - p_bar);
        var_p += (p[i] - p_bar).powi(2);
    }
    let nse = 1.0 - sq_err / sq_dev;
    let pbias = 100.0 * diff / o.iter().sum::<f64>();
    let rsr = (sq_err / n).sqrt() / (sq_dev / (n - 1.0)).sqrt();
    let corr = (cov / n) / ((sq_dev / n).sqrt() * (var_p / n).sqrt());
    [nse, pbias, rsr, corr * corr]
}

fn metric_oracle_equivalence() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let o = random_vec(&mut r, 356, 0.0, 1.0);
        let noise = r.gen_range(0.01..0.5);
        let bias = r.gen_range(-0.2..0.2);
        let p: Vec<f64> = o.iter().map(|v| v + bias + r.gen_range(-noise..noise)).collect();
        let ms = MetricSeries::new(o.clone(), p.clone())?;
        let got = [nse(&ms)?, pbias(&ms)?, rsr(&ms)?, r_squared(&ms)?];
        let want = oracle_metrics(&o, &p);
        for (k, (g, w)) in got.iter().zip(want).enumerate() {
            let err = (g - w).abs();
            ensure!(err <= 1e-9, "metric {k}: library {g} vs oracle {w}");
            worst = worst.max(err);
        }
    }
    Ok(format!("100 series of length 356, worst deviation {worst:.1e}"))
}

// 3 ------------------------------------------------------------------------

fn classification_fidelity() -> Outcome {
    use Category::*;
    let cases = [
        ("NSE", 0.98, VeryGood),
        ("NSE", 0.73, Good),
        ("NSE", 0.68, Satisfactory),
        ("RSR", 0.14, VeryGood),
        ("RSR", 0.56, Good),
        ("RSR", 0.52, Good),
        ("PBIAS", 2.6, VeryGood),
        ("PBIAS", -1.0, VeryGood),
        ("PBIAS", -15.5, Satisfactory),
        ("R2", 0.99, VeryGood),
        ("R2", 0.77, Good),
    ];
    for (metric, value, want) in cases {
        let got = classify(metric, value)?;
        ensure!(got == want, "{metric} {value}: {got} instead of {want}");
    }
    Ok(format!("{} cited pairs reproduced", cases.len()))
}

// 4 ------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in [1u64, 2, 3] {
        // B=2 windows of T=3 days need 5 days of frames
        let ds = noise_dataset(40 + seed, 5, 3, 5, 5, 3);
        ensure!(ds.len() == 2, "expected 2 samples, got {}", ds.len());
        let mut p = ModelParams::init(&ModelHyper::new(3, 3, 3), seed)?;
        let mut r = rng(seed);
        p.convlstm.bias.data_mut().iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
        p.spatial.kernel.bias = r.gen_range(-0.5..0.5);
        p.readout.bias = r.gen_range(-0.5..0.5);
        for t in finite_difference_check(&p, &ds, &[0, 1], LossKind::Mse, 1e-5)? {
            ensure!(t.max_rel_err <= 1e-4, "seed {seed} {}: relative error {:.2e}", t.name, t.max_rel_err);
            worst = worst.max(t.max_rel_err);
            checked += t.entries;
        }
    }
    Ok(format!("{checked} parameter entries over 3 seeds, worst relative error {worst:.2e}"))
}

// 5 ------------------------------------------------------------------------

fn depthwise_isolation() -> Outcome {
    let mut r = rng(5);
    for trial in 0..10u64 {
        let c = r.gen_range(2..6);
        let (t, h, w) = (r.gen_range(1..5), r.gen_range(2..7), r.gen_range(2..7));
        let k = [3, 5][r.gen_range(0..2)];
        let p = ModelParams::init(&ModelHyper::new(c, k, 3), trial)?.convlstm;
        let n = t * h * w * c;
        let x = Tensor::new(vec![t, h, w, c], random_vec(&mut r, n, -1.0, 1.0))?;
        let base = depthwise_convlstm_forward(&x, &p)?;
        let target = r.gen_range(0..c);
        let mut y = x.clone();
        for (idx, v) in y.data_mut().iter_mut().enumerate() {
            if idx % c == target {
                *v += r.gen_range(-2.0..2.0);
            }
        }
        let pert = depthwise_convlstm_forward(&y, &p)?;
        let mut moved = false;
        for (idx, (a, b)) in base.data().iter().zip(pert.data()).enumerate() {
            if idx % c == target {
                moved |= a != b;
            } else {
                ensure!(a.to_bits() == b.to_bits(), "trial {trial}: channel {} changed", idx % c);
            }
        }
        ensure!(moved, "trial {trial}: the perturbed channel did not change");
    }
    Ok("10 trials, untouched channels bit-identical".into())
}

// 6 ------------------------------------------------------------------------

fn attention_invariants() -> Outcome {
    let mut r = rng(6);
    let mut records = 0;
    let (mut beta_err, mut alpha_lo, mut alpha_hi): (f64, f64, f64) = (0.0, 1.0, 0.0);
    for trial in 0..50u64 {
        let c = r.gen_range(1..7);
        let (t, h, w) = (r.gen_range(1..6), r.gen_range(2..8), r.gen_range(2..8));
        let mut hyper = ModelHyper::new(c, 3, [3, 5][r.gen_range(0..2)]);
        if trial % 5 == 4 {
            hyper.spatial_activation = SpatialActivation::SoftmaxHw;
        }
        let mut p = ModelParams::init(&hyper, trial)?;
        p.scale(r.gen_range(0.5..20.0));
        let scale = r.gen_range(0.1..10.0);
        let days = t + r.gen_range(1..4);
        let mut ds = noise_dataset(600 + trial, days, t, h, w, c);
        ds = ds.map_targets(|v| v * scale);
        for rec in extract_attention(&p, &ds)? {
            let s: f64 = rec.beta.data().iter().sum();
            beta_err = beta_err.max((s - 1.0).abs());
            ensure!((s - 1.0).abs() <= 1e-9, "trial {trial}: beta sums to {s}");
            for &a in rec.alpha.data() {
                ensure!(a > 0.0 && a < 1.0, "trial {trial}: alpha {a}");
                alpha_lo = alpha_lo.min(a);
                alpha_hi = alpha_hi.max(a);
            }
            records += 1;
        }
        // scaled inputs push the logits far out
        let x = Tensor::new(vec![t, h, w, c], random_vec(&mut r, t * h * w * c, -scale, scale))?;
        let (_, att) = forward(&x, &p)?;
        let s: f64 = att.beta.data().iter().sum();
        ensure!((s - 1.0).abs() <= 1e-9, "trial {trial}: forward beta sums to {s}");
        ensure!(att.alpha.data().iter().all(|&a| a > 0.0 && a < 1.0), "trial {trial}: forward alpha left (0,1)");
    }
    Ok(format!(
        "50 models, {records} records; max |sum beta - 1| {beta_err:.1e}, alpha in [{alpha_lo:.3e}, {alpha_hi:.6}]"
    ))
}

// 7 ------------------------------------------------------------------------

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Every cell of a 2×2 grid written out with its 3×3 neighbourhood; the
/// padded positions are zero. `k[r][c]` is the tap at row offset `r-1`,
/// column offset `c-1`.
fn conv_2x2(x: [[f64; 2]; 2], k: [[f64; 3]; 3], bias: f64) -> [[f64; 2]; 2] {
    // (0,0) sees x[0][0] at the centre, x[0][1] right, x[1][0] below, x[1][1] diagonal
    let y00 = bias + k[1][1] * x[0][0] + k[1][2] * x[0][1] + k[2][1] * x[1][0] + k[2][2] * x[1][1];
    let y01 = bias + k[1][0] * x[0][0] + k[1][1] * x[0][1] + k[2][0] * x[1][0] + k[2][1] * x[1][1];
    let y10 = bias + k[0][1] * x[0][0] + k[0][2] * x[0][1] + k[1][1] * x[1][0] + k[1][2] * x[1][1];
    let y11 = bias + k[0][0] * x[0][0] + k[0][1] * x[0][1] + k[1][0] * x[1][0] + k[1][1] * x[1][1];
    [[y00, y01], [y10, y11]]
}

fn forward_oracle() -> Outcome {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let mut u = || r.gen_range(-1.5..1.5);
        let x = [[u(), u()], [u(), u()]];
        let ka = [[u(), u(), u()], [u(), u(), u()], [u(), u(), u()]];
        let ka_bias = u();
        let mut gate_k = [[[0.0; 3]; 3]; 4];
        gate_k.iter_mut().flatten().flatten().for_each(|v| *v = u());
        let gate_b = [u(), u(), u(), u()];
        let (rw, rb, wf) = (u(), u(), u());

        let mut p = ModelParams::zeros(&ModelHyper::new(1, 3, 3));
        p.spatial.kernel = Kernel2D::new(3, 3, ka.iter().flatten().copied().collect(), ka_bias)?;
        p.feature.weights = Tensor::new(vec![1, 1], vec![wf])?;
        p.convlstm
            .input_weights
            .data_mut()
            .copy_from_slice(&gate_k.iter().flatten().flatten().copied().collect::<Vec<_>>());
        // with one timestep the hidden-state kernels only ever see zeros
        p.convlstm.hidden_weights.data_mut().iter_mut().for_each(|v| *v = 7.0);
        p.convlstm.bias.data_mut().copy_from_slice(&gate_b);
        p.readout.weights.data_mut()[0] = rw;
        p.readout.bias = rb;
        let input = Tensor::new(vec![1, 2, 2, 1], x.iter().flatten().copied().collect())?;
        let (got, _) = forward(&input, &p)?;

        // one channel: channel mean is x, beta is softmax of one logit = 1
        let z_alpha = conv_2x2(x, ka, ka_bias);
        let mut xatt = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                xatt[i][j] = sigmoid(z_alpha[i][j]) * 1.0 * x[i][j];
            }
        }
        let zi = conv_2x2(xatt, gate_k[0], gate_b[0]);
        let zg = conv_2x2(xatt, gate_k[2], gate_b[2]);
        let zo = conv_2x2(xatt, gate_k[3], gate_b[3]);
        // c_prev = 0, so the forget gate drops out
        let mut sum_h = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let c = sigmoid(zi[i][j]) * zg[i][j].tanh();
                sum_h += sigmoid(zo[i][j]) * c.tanh();
            }
        }
        let want = rw * (sum_h / 4.0) + rb;
        let err = (got - want).abs();
        ensure!(err <= 1e-12, "trial {trial}: forward {got} vs hand-unrolled {want}");
        worst = worst.max(err);
    }
    Ok(format!("20 hand-set models, worst deviation {worst:.1e}"))
}

// 8 ------------------------------------------------------------------------

struct SeedResult {
    seed: u64,
    nse: f64,
    argmax: usize,
    alpha_ratio: f64,
    seconds: f64,
}

fn planted_seed(seed: u64, root: &Path) -> Result<(SeedResult, PathBuf, PathBuf), Box<dyn StdError>> {
    let started = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.set_seed(seed);
    cfg.train.search_trials = PLANTED_TRIALS;
    cfg.train.max_epochs = PLANTED_MAX_EPOCHS;
    let synth_out = root.join(format!("seed{seed}/synth"));
    let train_out = root.join(format!("seed{seed}/train"));
    cmd_synth(&cfg, &synth_out)?;
    let data = synth_out.join(DATA_DIR);
    cmd_train(&cfg, &data, &train_out)?;

    let ckpt_path = train_out.join(CHECKPOINT_FILE);
    let ck = load_checkpoint(&ckpt_path)?;
    let series = hydrotrace_core::grid::io::read_grid_dir(&data)?;
    let prepared = apply_preprocessing(&series, ck.header.preprocessing.as_ref().ok_or("no preprocessing")?)?;
    let ds = &prepared.dataset;
    let val = &prepared.split.val_idx;
    let pred = predict(&ck.params, ds, val)?;
    let obs: Vec<f64> = val.iter().map(|&i| ds.targets()[i]).collect();
    let val_nse = nse(&MetricSeries::new(obs, pred)?)?;

    let oracle = Oracle::load(&data.join(ORACLE_FILE))?;
    let planted = oracle.planted()[0];
    let records = extract_attention(&ck.params, ds)?;
    let c = ds.sample_shape()[3];
    let mut beta_mean = vec![0.0; c];
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for rec in &records {
        for (m, b) in beta_mean.iter_mut().zip(rec.beta.data()) {
            *m += b / records.len() as f64;
        }
        let &[_, h, w] = rec.alpha.shape() else { fail!("alpha is not T×H×W") };
        for (idx, &a) in rec.alpha.data().iter().enumerate() {
            let (i, j) = ((idx / w) % h, idx % w);
            if planted.region.contains(i, j) {
                inside += a;
                n_in += 1;
            } else {
                outside += a;
                n_out += 1;
            }
        }
    }
    let argmax = (0..c).max_by(|&a, &b| beta_mean[a].total_cmp(&beta_mean[b])).unwrap_or(0);
    let alpha_ratio = (inside / n_in as f64) / (outside / n_out as f64);
    Ok((
        SeedResult {
            seed,
            nse: val_nse,
            argmax,
            alpha_ratio,
            seconds: started.elapsed().as_secs_f64(),
        },
        data,
        ckpt_path,
    ))
}

fn planted_recovery(shared: &mut Shared) -> Outcome {
    let root = tempfile::tempdir()?;
    let planted_channel = RunConfig::default().synthetic.planted[0].channel;
    let mut results = Vec::new();
    for seed in PLANTED_SEEDS {
        let (res, data, ckpt) = planted_seed(seed, root.path())?;
        println!(
            "    seed {}: validation NSE {:.4}, beta argmax {}, alpha inside/outside {:.3}, {:.0} s",
            res.seed, res.nse, res.argmax, res.alpha_ratio, res.seconds
        );
        if shared.planted_run.is_none() {
            shared.planted_run = Some((data, ckpt));
        }
        results.push(res);
    }
    shared._root = Some(root);
    let recovered: Vec<&SeedResult> = results
        .iter()
        .filter(|r| r.nse >= 0.8 && r.argmax == planted_channel)
        .collect();
    let localized = recovered.iter().filter(|r| r.alpha_ratio >= 1.5).count();
    let summary = format!(
        "{}/5 seeds with NSE >= 0.8 and beta argmax = {planted_channel}; {localized}/{} of those with alpha ratio >= 1.5 (budget {PLANTED_TRIALS} trials x {PLANTED_MAX_EPOCHS} epochs)",
        recovered.len(),
        recovered.len()
    );
    ensure!(recovered.len() >= 4 && localized == recovered.len(), "{summary}");
    Ok(summary)
}

// 9 ------------------------------------------------------------------------

fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn full_scale_dry_run() -> Outcome {
    let (h, w, c, t) = (292, 79, 49, 7);
    let started = Instant::now();
    let ds = noise_dataset(9, t + 1, t, h, w, c);
    ensure!(ds.len() == 1, "expected one sample, got {}", ds.len());
    let p = ModelParams::init(&ModelHyper::new(c, 3, 3), 9)?;
    let (loss, grads) = hydrotrace_core::training::gradients(&p, &ds, &[0], LossKind::Mse)?;
    ensure!(loss.is_finite() && grads.all_finite(), "non-finite loss or gradient");
    let peak = peak_rss_bytes();
    if let Some(b) = peak {
        ensure!(b <= 8 << 30, "peak resident memory {:.2} GiB", b as f64 / (1u64 << 30) as f64);
    }
    Ok(format!(
        "H=292 W=79 C=49 T=7 B=1 forward+backward in {:.1} s, process peak RSS {}",
        started.elapsed().as_secs_f64(),
        peak.map_or("unavailable".into(), |b| format!("{:.2} GiB", b as f64 / (1u64 << 30) as f64))
    ))
}

// 10 -----------------------------------------------------------------------

fn pipeline_counting() -> Outcome {
    let mut r = rng(10);
    for trial in 0..100 {
        let total = r.gen_range(8..80);
        let (h, w, c) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..3));
        let p_missing = r.gen_range(0.0..0.6);
        let target: Vec<f64> = (0..total)
            .map(|_| if r.gen_bool(p_missing) { f64::NAN } else { r.gen_range(0.0..5.0) })
            .collect();
        let dates = days_from(NaiveDate::from_ymd_opt(2018, 3, 1).unwrap(), total);
        let gs = GridSeries {
            dates: dates.clone(),
            dynamic: Tensor::new(vec![total, h, w, c], random_vec(&mut r, total * h * w * c, 0.0, 1.0))?,
            static_features: Tensor::zeros(&[h, w, 0]),
            axes: axes(h, w),
            feature_names: (0..c).map(|k| format!("v{k}")).collect(),
            target: target.clone(),
        };
        let all = make_windows(&gs, 7)?;
        ensure!(all.len() == total - 7, "trial {trial}: {} windows for {total} days", all.len());
        let kept = drop_missing_targets(&all);
        // direct scan: day d is a target for d >= 7
        let expect: Vec<usize> = (7..total).filter(|&d| target[d].is_finite()).collect();
        ensure!(
            kept.len() == expect.len(),
            "trial {trial}: {} samples kept, scan finds {}",
            kept.len(),
            expect.len()
        );
        for (k, &d) in expect.iter().enumerate() {
            ensure!(kept.target_dates()[k] == dates[d], "trial {trial}: sample {k} dated {}", kept.target_dates()[k]);
            ensure!(kept.targets()[k].to_bits() == target[d].to_bits(), "trial {trial}: sample {k} target");
            ensure!(kept.window_starts()[k] == d - 7, "trial {trial}: sample {k} starts at {}", kept.window_starts()[k]);
        }
    }
    Ok("100 randomized missing-target patterns, counts and dates match a direct scan".into())
}

// 11 -----------------------------------------------------------------------

/// Validation losses read from a script; the state is the epoch number.
struct Scripted(Vec<f64>);

impl EpochObjective for Scripted {
    type State = usize;

    fn train_epoch(&mut self, state: &mut usize, _lr: f64, epoch: usize) -> hydrotrace_core::Result<f64> {
        *state = epoch;
        Ok(1.0)
    }

    fn validate(&mut self, state: &usize) -> hydrotrace_core::Result<(f64, f64)> {
        let v = self.0[*state - 1];
        Ok((v, v))
    }
}

/// Reference trace of the plateau rule: per epoch the rate used, whether
/// it was cut afterwards, and whether training stopped.
fn reference_plateau(losses: &[f64], cfg: &TrainConfig) -> Vec<(f64, bool, bool)> {
    let mut out = Vec::new();
    let mut lr = cfg.base_lr;
    let mut best = f64::INFINITY;
    let (mut since_lr, mut since_best) = (0, 0);
    for &l in losses {
        let used = lr;
        let improved = best.is_infinite() || best - l > 1e-4 * best.abs();
        let mut cut = false;
        if improved {
            best = l;
            since_lr = 0;
            since_best = 0;
        } else {
            since_lr += 1;
            since_best += 1;
            if since_lr == cfg.lr_patience {
                since_lr = 0;
                let next = f64::max(lr * cfg.lr_factor, cfg.min_lr);
                if next < lr {
                    lr = next;
                    cut = true;
                }
            }
        }
        let stop = since_best >= cfg.es_patience;
        out.push((used, cut, stop));
        if stop {
            break;
        }
    }
    out
}

fn protocol_traces() -> Outcome {
    // early stopping hands back the best epoch, not the last
    let cfg = TrainConfig {
        lr_patience: 2,
        es_patience: 4,
        max_epochs: 50,
        ..TrainConfig::default()
    };
    let (best, hist) = run_epochs(&mut Scripted(vec![0.9, 0.5, 0.7, 0.4, 0.45, 0.6, 0.8, 0.9, 1.0]), 0, &cfg)?;
    ensure!(best == 4 && hist.len() == 8, "scripted early stop returned epoch {best} after {}", hist.len());

    let ds = noise_dataset(11, 40, 3, 4, 4, 2);
    let plan = hydrotrace_core::grid::split_dataset(ds.len(), 0.8, 0)?;
    let real_cfg = TrainConfig {
        max_epochs: 25,
        es_patience: 3,
        lr_patience: 2,
        base_lr: 3e-2,
        ..TrainConfig::default()
    };
    let p0 = ModelParams::init(&ModelHyper::new(2, 3, 3), 11)?;
    let (params, hist) = train(&ds, &plan, &real_cfg, p0)?;
    let (val_loss, _) = evaluate(&params, &ds, &plan.val_idx, real_cfg.loss)?;
    let best_rec = hist.best().ok_or("empty history")?;
    ensure!(
        val_loss.to_bits() == best_rec.val_loss.to_bits(),
        "returned parameters score {val_loss}, best epoch {} scored {}",
        hist.best_epoch,
        best_rec.val_loss
    );

    // plateau rule on scripted sequences, against the reference trace
    let mut r = rng(11);
    let mut reductions = 0;
    for trial in 0..200 {
        let cfg = TrainConfig {
            lr_patience: r.gen_range(1..5),
            es_patience: r.gen_range(2..12),
            lr_factor: [0.5, 0.1, 0.3][trial % 3],
            min_lr: [1e-5, 2e-4][trial % 2],
            base_lr: 1e-3,
            max_epochs: 40,
            ..TrainConfig::default()
        };
        let mut losses = Vec::new();
        let mut level = 1.0;
        for _ in 0..40 {
            match r.gen_range(0..4) {
                0 => level *= r.gen_range(0.5..0.99),
                1 => level *= 1.0 - 5e-5,
                _ => {}
            }
            losses.push(level + if r.gen_bool(0.3) { r.gen_range(0.0..0.2) } else { 0.0 });
        }
        let (_, hist) = run_epochs(&mut Scripted(losses.clone()), 0, &cfg)?;
        let want = reference_plateau(&losses, &cfg);
        ensure!(hist.len() == want.len(), "trial {trial}: {} epochs, reference {}", hist.len(), want.len());
        for (e, (lr, cut, stop)) in hist.epochs.iter().zip(want) {
            ensure!(e.lr == lr, "trial {trial} epoch {}: lr {} vs {lr}", e.epoch, e.lr);
            ensure!(e.events.contains(&EpochEvent::LrReduced) == cut, "trial {trial} epoch {}: reduction", e.epoch);
            ensure!(e.events.contains(&EpochEvent::EarlyStopped) == stop, "trial {trial} epoch {}: stop", e.epoch);
            reductions += cut as usize;
        }
    }
    let flat = TrainConfig {
        lr_patience: 2,
        es_patience: 100,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let (_, hist) = run_epochs(&mut Scripted(vec![1.0, 1.0, 1.0]), 0, &flat)?;
    let cut_at: Vec<usize> = hist
        .epochs
        .iter()
        .filter(|e| e.events.contains(&EpochEvent::LrReduced))
        .map(|e| e.epoch)
        .collect();
    ensure!(cut_at == [3], "flat losses cut the rate after epochs {cut_at:?}");

    // random search: seed-deterministic, argmin MAE, ties to the earlier trial
    let space = SearchSpace::default();
    let score = |seed: u64| (seed % 1000) as f64 / 1000.0;
    let run = || {
        random_search_with(&space, 10, 77, |d| {
            Ok(TrialEval {
                val_mae: score(d.seed),
                epochs_run: 1,
                payload: d.trial,
            })
        })
    };
    let (a, b) = (run()?, run()?);
    ensure!(a == b, "stub search is not deterministic");
    ensure!(a.log.len() == 10, "{} trials logged", a.log.len());
    let min = a.log.iter().filter_map(|t| t.val_mae).fold(f64::INFINITY, f64::min);
    let first_min = a.log.iter().position(|t| t.val_mae == Some(min)).unwrap();
    ensure!(a.payload == first_min, "stub search picked trial {}, argmin is {first_min}", a.payload);

    let tiny = noise_dataset(12, 30, 2, 3, 3, 2);
    let tiny_plan = hydrotrace_core::grid::split_dataset(tiny.len(), 0.8, 1)?;
    let base = TrainConfig {
        max_epochs: 2,
        search_trials: 10,
        seed: 5,
        ..TrainConfig::default()
    };
    let template = ModelHyper::new(2, 3, 3);
    let s1 = random_search(&tiny, &tiny_plan, &space, &base, &template, 5)?;
    let s2 = random_search(&tiny, &tiny_plan, &space, &base, &template, 5)?;
    ensure!(s1 == s2, "real search with the same seed differs between runs");
    let maes: Vec<f64> = s1.log.iter().map(|t| t.val_mae.unwrap_or(f64::INFINITY)).collect();
    let argmin = (0..maes.len()).fold(0, |best, i| if maes[i] < maes[best] { i } else { best });
    ensure!(s1.best.trial == argmin, "real search picked trial {}, argmin is {argmin}", s1.best.trial);
    Ok(format!(
        "best-epoch restore exact; 200 scripted schedules match the rule ({reductions} reductions); 10-trial search deterministic, picked trial {argmin}"
    ))
}

// 12 -----------------------------------------------------------------------

fn http_get(addr: SocketAddr, target: &str) -> Result<(u16, Vec<u8>), Box<dyn StdError>> {
    let mut s = TcpStream::connect(addr)?;
    write!(s, "GET {target} HTTP/1.1\r\nHost: localhost\r\n\r\n")?;
    let mut raw = Vec::new();
    s.read_to_end(&mut raw)?;
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").ok_or("no header terminator")?;
    let head = String::from_utf8_lossy(&raw[..split]).to_string();
    let status = head.split_whitespace().nth(1).ok_or("no status")?.parse()?;
    Ok((status, raw[split + 4..].to_vec()))
}

fn get_json(addr: SocketAddr, target: &str) -> Result<Value, Box<dyn StdError>> {
    let (status, body) = http_get(addr, target)?;
    let v: Value = serde_json::from_slice(&body)?;
    if status != 200 {
        fail!("{target}: status {status}: {v}");
    }
    if v["schema_version"] != 1 {
        fail!("{target}: schema_version {}", v["schema_version"]);
    }
    Ok(v)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn service_conformance(shared: &mut Shared) -> Outcome {
    let root = tempfile::tempdir()?;
    let (data, ckpt) = match &shared.planted_run {
        Some(run) => run.clone(),
        None => {
            // criterion 8 was skipped: train a small stand-in quickly
            println!("    criterion 8 not run; using a one-epoch stand-in model");
            let mut cfg = RunConfig::default();
            cfg.train.search_trials = 1;
            cfg.train.max_epochs = 1;
            cmd_synth(&cfg, &root.path().join("synth"))?;
            let data = root.path().join("synth").join(DATA_DIR);
            cmd_train(&cfg, &data, &root.path().join("train"))?;
            (data, root.path().join("train").join(CHECKPOINT_FILE))
        }
    };
    let out = root.path().join("attention");
    let cfg = RunConfig::default();
    cmd_attention(&cfg, &ckpt, &data, &out)?;
    let store_dir = out.join(STORE_DIR);

    let server = Server::bind("127.0.0.1:0")?;
    let addr = server.local_addr()?;
    server.load_in_background(store_dir.clone()).join().map_err(|_| "loader panicked")??;
    thread::spawn(move || server.run());
    let offline = StoreIndex::load(&store_dir)?;
    let store = offline.store();

    let health = get_json(addr, "/v1/health")?;
    ensure!(health["n_records"] == store.len() && health["status"] == "ok", "health: {health}");

    let mut compared = 0usize;
    // feature tables against the monthly and seasonal CSV exports
    let seasonal = read_table_csv(fs::File::open(out.join("attention_seasonal.csv"))?)?;
    let monthly = read_table_csv(fs::File::open(out.join("attention_monthly.csv"))?)?;
    let periods: Vec<Period> = Period::seasons().chain(Period::months()).collect();
    for period in periods {
        let table = if matches!(period, Period::Season(_)) { &seasonal } else { &monthly };
        if table.period(period).next().is_none() {
            continue;
        }
        let v = get_json(addr, &format!("/v1/attention/features?period={period}"))?;
        let rows = v["rows"].as_array().ok_or("rows missing")?;
        ensure!(rows.len() == store.feature_names.len(), "{period}: {} rows", rows.len());
        for row in rows {
            let name = row["feature"].as_str().ok_or("feature missing")?;
            let want = table.get(period, name).ok_or("feature not exported")?;
            let got = row["mean_weight"].as_f64().ok_or("mean_weight missing")?;
            ensure!(close(got, want.mean_weight), "{period} {name}: {got} vs {}", want.mean_weight);
            ensure!(row["n_samples"] == want.n_samples, "{period} {name}: sample count");
            compared += 1;
        }
    }

    // top-k against the seasonal top-5 export
    let top: BTreeMap<String, Value> = serde_json::from_slice(&fs::read(out.join("seasonal_top5.json"))?)?;
    for (season, ranked) in &top {
        let v = get_json(addr, &format!("/v1/attention/top-features?period={season}&k=5"))?;
        let (got, want) = (v["features"].as_array().ok_or("features missing")?, ranked.as_array().ok_or("bad export")?);
        ensure!(got.len() == want.len(), "{season}: {} ranked", got.len());
        for (g, w) in got.iter().zip(want) {
            ensure!(g["feature"] == w["feature"] && g["rank"] == w["rank"], "{season}: ranking differs");
            ensure!(
                close(g["mean_weight"].as_f64().unwrap_or(f64::NAN), w["mean_weight"].as_f64().unwrap_or(f64::NAN)),
                "{season}: top-k weight differs"
            );
            compared += 1;
        }
    }

    // maps, heatmaps and masks against the map exports
    let (h, w) = (store.axes().lat.len(), store.axes().lon.len());
    let want_cells = (0.2 * (h * w) as f64).ceil() as usize;
    let labels: Vec<&str> = Season::ALL.iter().map(|s| s.label()).chain(["all"]).collect();
    for label in labels {
        let json_path = out.join(format!("maps/{label}.json"));
        if !json_path.exists() {
            continue;
        }
        let exported = map_from_json(&serde_json::from_slice(&fs::read(&json_path)?)?)?;
        let v = get_json(addr, &format!("/v1/attention/spatial?period={label}&format=json"))?;
        let served = map_from_json(&v)?;
        for (a, b) in served.grid.data().iter().zip(exported.grid.data()) {
            ensure!(close(*a, *b), "{label}: map cell {a} vs {b}");
            compared += 1;
        }
        let (status, pgm) = http_get(addr, &format!("/v1/attention/spatial?period={label}&format=pgm"))?;
        ensure!(status == 200 && pgm == fs::read(out.join(format!("maps/{label}.pgm")))?, "{label}: heatmap differs");
        let mask = read_mask_csv(fs::File::open(out.join(format!("masks/{label}_top20.csv")))?, h, w)?;
        ensure!(mask.count() == want_cells, "{label}: mask has {} cells, want {want_cells}", mask.count());
        let v = get_json(addr, &format!("/v1/attention/spatial?period={label}&top_pct=20"))?;
        let served: Vec<(u64, u64)> = v["cells"]
            .as_array()
            .ok_or("cells missing")?
            .iter()
            .map(|c| (c["row"].as_u64().unwrap_or(u64::MAX), c["col"].as_u64().unwrap_or(u64::MAX)))
            .collect();
        let exported: Vec<(u64, u64)> = mask.selected().map(|(i, j)| (i as u64, j as u64)).collect();
        ensure!(served == exported, "{label}: served mask differs from export");
    }

    // daily rows against the stored records
    let first = store.records.first().ok_or("empty store")?.target_date;
    let last = first + chrono::Duration::days(20);
    let v = get_json(addr, &format!("/v1/attention/daily?from={first}&to={last}&spatial=true"))?;
    for row in v["rows"].as_array().ok_or("rows missing")? {
        let date: NaiveDate = row["date"].as_str().ok_or("date missing")?.parse()?;
        let rec = store.records.iter().find(|r| r.target_date == date).ok_or("unknown date")?;
        let c = store.feature_index(row["feature"].as_str().ok_or("feature missing")?).ok_or("unknown feature")?;
        let beta = rec.beta.data()[c];
        ensure!(close(row["beta"].as_f64().unwrap_or(f64::NAN), beta), "{date}: daily beta differs");
        ensure!(
            close(row["spatial_mean"].as_f64().unwrap_or(f64::NAN), rec.alpha.mean() * beta),
            "{date}: daily spatial mean differs"
        );
        compared += 1;
    }

    // concurrency: 32 readers see the sequential bytes
    let targets: Arc<Vec<String>> = Arc::new(vec![
        "/v1/health".into(),
        "/v1/attention/features?period=monsoon".into(),
        "/v1/attention/features?period=jan".into(),
        "/v1/attention/top-features?period=all&k=5".into(),
        "/v1/attention/spatial?period=all&format=json".into(),
        "/v1/attention/spatial?period=all&format=pgm".into(),
        "/v1/attention/spatial?period=all&top_pct=20".into(),
        format!("/v1/attention/daily?from={first}&to={last}"),
    ]);
    let sequential: Vec<Vec<u8>> = targets
        .iter()
        .map(|t| http_get(addr, t).map(|(_, b)| b))
        .collect::<Result<_, _>>()?;
    let handles: Vec<_> = (0..32)
        .map(|reader| {
            let targets = Arc::clone(&targets);
            thread::spawn(move || {
                (0..targets.len())
                    .map(|k| {
                        let i = (k + reader) % targets.len();
                        http_get(addr, &targets[i]).map(|(_, b)| (i, b)).map_err(|e| e.to_string())
                    })
                    .collect::<Result<Vec<_>, String>>()
            })
        })
        .collect();
    for h in handles {
        for (i, body) in h.join().map_err(|_| "reader panicked")?? {
            ensure!(body == sequential[i], "concurrent body differs for {}", targets[i]);
        }
    }
    Ok(format!(
        "{} records served; {compared} aggregates equal the exports; 32 concurrent readers byte-identical",
        store.len()
    ))
}

// --------------------------------------------------------------------------

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().map_or(true, |o| o.contains(&n));
    let mut shared = Shared::default();
    type Criterion = (usize, &'static str, fn(&mut Shared) -> Outcome);
    let criteria: [Criterion; 12] = [
        (1, "metric identities", |_| metric_identities()),
        (2, "metric oracle equivalence", |_| metric_oracle_equivalence()),
        (3, "classification fidelity", |_| classification_fidelity()),
        (4, "gradient correctness", |_| gradient_correctness()),
        (5, "depthwise isolation", |_| depthwise_isolation()),
        (6, "attention invariants", |_| attention_invariants()),
        (7, "forward oracle", |_| forward_oracle()),
        (8, "planted-structure recovery", planted_recovery),
        (9, "full-scale dry run", |_| full_scale_dry_run()),
        (10, "pipeline counting", |_| pipeline_counting()),
        (11, "protocol traces", |_| protocol_traces()),
        (12, "service conformance", service_conformance),
    ];
    let mut failed = Vec::new();
    for (n, name, run) in criteria {
        if !wanted(n) {
            continue;
        }
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| run(&mut shared)));
        let secs = started.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok(Ok(d)) => (true, d),
            Ok(Err(e)) => (false, e.to_string()),
            Err(p) => (
                false,
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ),
        };
        println!(
            "criterion {n:>2} {} {name} ({secs:.1} s): {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
