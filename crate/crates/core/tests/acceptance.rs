//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit
//! if any criterion failed. Runs with its own harness so the lines always
//! show up in `cargo test` output.
//!
//! Every derived quantity is recomputed here by an independent oracle
//! (brute-force sorts, explicit loops, finite differences, Monte Carlo) rather
//! than trusted from the library.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use edgesync_core::bho::{expected_improvement, latin_hypercube, optimize_unit, EiConfig, GpConfig, GpSurrogate};
use edgesync_core::config::{Config, StreamSource};
use edgesync_core::experiments::{
    format_table, format_verdicts, run_experiment, write_report, ExperimentKind, ExperimentReport, ExperimentSpec,
    RunResult,
};
use edgesync_core::filter::{filter_window, score_sample, timeliness_score, FilterConfig, TimelinessMode};
use edgesync_core::model::{entropy, Evaluation, LabeledBatch, StudentModel};
use edgesync_core::trainer::{
    drive_session, retrain, time_split, EpochCost, Session, StopReason, TrainBudget, TrainerConfig,
};
use edgesync_core::types::{HyperParams, RngSeed, Sample};
use edgesync_core::urgency::{select_edge, segment_accuracies, urgency_degree, AccuracyBank, UrgencyConfig, UrgencyReport};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (u32, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const MODES: [TimelinessMode; 2] = [TimelinessMode::RecencyDecay, TimelinessMode::AsPrinted];

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Probability vector ranging from near-uniform to sharply peaked.
fn random_probs(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f64> {
    let scale = rng.random_range(0.0..6.0);
    let logits: Vec<f64> = (0..classes)
        .map(|_| scale * normal(rng))
        .collect();
    softmax(&logits)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn oracle_entropy(p: &[f64]) -> f64 {
    let mut h = 0.0;
    for &x in p {
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    h
}

fn criterion_1() -> Outcome {
    let h = entropy(&[1.0 / 6.0; 6]).map_err(err)?;
    ensure!((h - 6f64.ln()).abs() <= 1e-9, "uniform-6 entropy {h}, want ln 6");
    for c in 0..6 {
        let mut p = vec![0.0; 6];
        p[c] = 1.0;
        let h = entropy(&p).map_err(err)?;
        ensure!(h == 0.0, "one-hot entropy {h}");
    }
    for t in [1, 2, 7, 90, 500, 100_000] {
        for mode in MODES {
            let v = timeliness_score(0, t, mode).map_err(err)?;
            ensure!((v - 0.5).abs() <= 1e-15, "timeliness(0, {t}) = {v} in {mode:?}");
        }
    }
    let mut rng = RngSeed(101).rng();
    let mut checked = 0;
    for mode in MODES {
        let full = FilterConfig {
            alpha: 1.0,
            beta: 1.0,
            timeliness_mode: mode,
            ..FilterConfig::default()
        };
        let half = FilterConfig {
            alpha: 0.5,
            beta: 0.5,
            ..full
        };
        for seq in 0..2000 {
            let window = rng.random_range(1..=500);
            let i = rng.random_range(0..window);
            let classes = rng.random_range(2..=8);
            let s = Sample::new(0, seq, 0.0, vec![0.0], 0).with_inference(random_probs(&mut rng, classes));
            let q1 = score_sample(&s, i, &full, window).map_err(err)?.combined;
            let q2 = score_sample(&s, i, &half, window).map_err(err)?.combined;
            // Halving is exact in binary floating point, so equality is exact.
            ensure!(q2 == 0.5 * q1, "Q scaling broke: {q2} vs {q1} / 2");
            checked += 1;
        }
    }
    Ok(format!("ln 6, one-hot, t(0,T)=0.5 in both modes, Q halving on {checked} samples"))
}

fn criterion_2() -> Outcome {
    let mut rng = RngSeed(202).rng();
    let mut sizes = vec![1, 2, 3, 10, 500];
    while sizes.len() < 200 {
        sizes.push(rng.random_range(1..=500));
    }
    for (w, &t) in sizes.iter().enumerate() {
        let tenths: usize = rng.random_range(2..=10);
        let (alpha, beta) = match w % 7 {
            // Pure adaptability: duplicated probabilities tie exactly.
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            _ => (rng.random_range(0.05..3.0), rng.random_range(0.05..3.0)),
        };
        let cfg = FilterConfig {
            upload_fraction: tenths as f64 / 10.0,
            alpha,
            beta,
            timeliness_mode: MODES[w % 2],
        };
        let mut cache: Vec<Sample> = Vec::with_capacity(t);
        for pos in 0..t {
            let probs = if pos > 0 && rng.random_bool(0.2) {
                cache[rng.random_range(0..pos)].probs.clone().unwrap()
            } else {
                random_probs(&mut rng, 6)
            };
            cache.push(Sample::new(0, pos as u64, pos as f64, vec![0.0], 0).with_inference(probs));
        }

        // Sort-and-slice oracle.
        let mut all = Vec::with_capacity(t);
        for (pos, s) in cache.iter().enumerate() {
            let i = t - 1 - pos;
            let q = score_sample(s, i, &cfg, t).map_err(err)?;
            let h = oracle_entropy(s.probs.as_deref().unwrap());
            ensure!((q.adaptability - h).abs() <= 1e-12, "entropy mismatch {} vs {h}", q.adaptability);
            all.push((q.combined, i, s.seq));
        }
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let want_len = (tenths * t).div_ceil(10);
        all.truncate(want_len);

        let got = filter_window(&cache, &cfg).map_err(err)?;
        ensure!(got.len() == want_len, "window {w}: |output| {} != ceil(k T) {want_len}", got.len());
        let got: Vec<(f64, usize, u64)> = got.iter().map(|s| (s.score.combined, s.index, s.sample.seq)).collect();
        ensure!(got == all, "window {w} (T={t}, k={}): selection differs from oracle", cfg.upload_fraction);
    }
    Ok(format!("{} windows, T in 1..=500, k in 0.2..=1.0", sizes.len()))
}

fn bank_from(bits: &[bool], capacity: usize) -> AccuracyBank {
    let mut b = AccuracyBank::new(capacity);
    for (i, &x) in bits.iter().enumerate() {
        b.push(x, i as u64);
    }
    b
}

/// Bank of `segments` blocks with `correct[j]` correct flags in block `j`,
/// shuffled inside each block.
fn segmented_bits(rng: &mut ChaCha8Rng, correct: &[usize], len: usize) -> Vec<bool> {
    let mut bits = Vec::with_capacity(correct.len() * len);
    for &c in correct {
        let mut seg: Vec<bool> = (0..len).map(|j| j < c).collect();
        seg.shuffle(rng);
        bits.extend(seg);
    }
    bits
}

fn oracle_degree(bits: &[bool], n: usize, m: usize, decay: f64, scale: f64) -> (f64, Vec<f64>) {
    let kept = &bits[bits.len() - n..];
    let len = n / m;
    let mut wa = Vec::with_capacity(m);
    for s in 0..m {
        let mut c = 0usize;
        for j in 0..len {
            if kept[s * len + j] {
                c += 1;
            }
        }
        wa.push(c as f64 / len as f64);
    }
    let mut d = 0.0;
    for (i, a) in wa.iter().enumerate() {
        let w = scale / (1.0 + (-(i as f64) / decay).exp());
        d += w * (wa[0] - a);
    }
    (d, wa)
}

fn criterion_3() -> Outcome {
    let cfg = UrgencyConfig::default();
    ensure!(cfg.capacity == 90 && cfg.segments == 10, "default bank is {}x{}", cfg.capacity, cfg.segments);
    let mut rng = RngSeed(303).rng();

    let alt = UrgencyConfig {
        decay: 3.0,
        weight_scale: 1.0,
        ..cfg
    };
    for c in [&cfg, &alt] {
        for b in [true, false] {
            let d = urgency_degree(0, &bank_from(&[b; 90], 90), c).unwrap().degree;
            ensure!(d == 0.0, "constant bank ({b}) has degree {d}");
        }
    }

    let mut monotone = 0;
    while monotone < 100 {
        let mut correct: Vec<usize> = (0..10).map(|_| rng.random_range(0..=9)).collect();
        correct.sort_unstable_by(|a, b| b.cmp(a));
        if correct[0] == correct[9] {
            continue;
        }
        let bits = segmented_bits(&mut rng, &correct, 9);
        let d = urgency_degree(0, &bank_from(&bits, 90), &cfg).unwrap().degree;
        ensure!(d > 0.0, "monotone degradation {correct:?} gave degree {d}");
        monotone += 1;
    }

    for trial in 0..100 {
        let edges = rng.random_range(2..=8);
        let mut reports = Vec::new();
        let mut banks = Vec::new();
        for e in 0..edges {
            let p0 = rng.random_range(0.3..1.0);
            let p1 = rng.random_range(0.1..1.0);
            let bits: Vec<bool> = (0..90).map(|j| rng.random_bool(p0 + (p1 - p0) * j as f64 / 89.0)).collect();
            let bank = bank_from(&bits, 90);
            reports.push(urgency_degree(e, &bank, &cfg).unwrap());
            banks.push(bank);
        }
        let last: Vec<Option<u64>> = (0..edges).map(|_| rng.random_bool(0.5).then(|| rng.random_range(0..50))).collect();
        let pick = select_edge(&reports, &last);
        for factor in [0.25, 0.5, 3.0, 17.0, 1000.0] {
            let scaled_cfg = UrgencyConfig {
                weight_scale: cfg.weight_scale * factor,
                ..cfg
            };
            let scaled: Vec<UrgencyReport> = banks
                .iter()
                .enumerate()
                .map(|(e, b)| urgency_degree(e, b, &scaled_cfg).unwrap())
                .collect();
            let again = select_edge(&scaled, &last);
            ensure!(again == pick, "trial {trial}: rescaling by {factor} moved the pick {pick} -> {again}");
        }
    }

    for trial in 0..100 {
        let pushes = rng.random_range(90..=250);
        let bits: Vec<bool> = (0..pushes).map(|_| rng.random_bool(0.7)).collect();
        let bank = bank_from(&bits, 90);
        let (d, wa) = oracle_degree(&bits, 90, 10, cfg.decay, cfg.weight_scale);
        let r = urgency_degree(0, &bank, &cfg).unwrap();
        ensure!(
            (r.degree - d).abs() <= 1e-12 * d.abs().max(1.0),
            "bank {trial}: degree {} vs brute force {d}",
            r.degree
        );
        ensure!(segment_accuracies(&bank, &cfg).unwrap() == wa, "bank {trial}: segment means differ");
    }
    Ok("constant banks 0, 100 monotone banks > 0, argmax stable under 5 rescalings x 100, 100 brute-force banks".into())
}

fn criterion_4() -> Outcome {
    // Five-point central differences: truncation O(h^4), round-off ~eps/h.
    const H: f64 = 1e-3;
    const FLOOR: f64 = 1e-6;
    let mut worst = 0.0f64;
    let instances = 24;
    for inst in 0..instances {
        let mut rng = RngSeed(400 + inst).rng();
        let c = rng.random_range(2..=7);
        let d = rng.random_range(1..=12);
        let n = rng.random_range(1..=24);
        let model = StudentModel::random(c, d, 1.0, &mut rng);
        let features: Vec<f64> = (0..n * d).map(|_| 2.0 * normal(&mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let batch = LabeledBatch::new(d, features, labels).map_err(err)?;
        let wd = [0.0, 1e-4, 1e-2, 0.1][inst as usize % 4];
        let g = model.gradient(&batch, wd).map_err(err)?;

        let f = |m: &StudentModel| m.objective(&batch, wd).unwrap();
        let fd = |nudge: &dyn Fn(&mut StudentModel, f64)| {
            let at = |dx: f64| {
                let mut m = model.clone();
                nudge(&mut m, dx);
                f(&m)
            };
            (-at(2.0 * H) + 8.0 * at(H) - 8.0 * at(-H) + at(-2.0 * H)) / (12.0 * H)
        };
        let mut compare = |analytic: f64, numeric: f64| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
        };
        ensure!(g.weights.len() == c * d && g.biases.len() == c, "gradient shape");
        for j in 0..c * d {
            compare(g.weights[j], fd(&|m: &mut StudentModel, dx| m.weights_mut()[j] += dx));
        }
        for j in 0..c {
            compare(g.biases[j], fd(&|m: &mut StudentModel, dx| m.biases_mut()[j] += dx));
        }
    }
    ensure!(worst < 1e-5, "max relative error {worst:.3e}");
    Ok(format!("{instances} instances, max relative error {worst:.2e}"))
}

/// Replays a fixed accuracy sequence; the "model" is the epoch number.
struct Scripted {
    acc: Vec<f64>,
    current: usize,
    snapshot: Option<usize>,
}

impl Scripted {
    fn new(acc: Vec<f64>) -> Self {
        Scripted {
            acc,
            current: 0,
            snapshot: None,
        }
    }
}

impl Session for Scripted {
    fn run_epoch(&mut self, epoch: usize) -> edgesync_core::Result<Evaluation> {
        self.current = epoch;
        let a = self.acc[epoch - 1];
        Ok(Evaluation {
            accuracy: a,
            loss: 1.0 - a,
        })
    }

    fn keep_best(&mut self, _epoch: usize) {
        self.snapshot = Some(self.current);
    }
}

fn criterion_5() -> Outcome {
    let budget = TrainBudget {
        patience: 5,
        max_time_s: 1e9,
        max_epochs: 100,
    };
    let mut s = Scripted::new(vec![0.50, 0.60, 0.70, 0.65, 0.60, 0.68, 0.69, 0.66, 0.90, 0.95]);
    let log = drive_session(&mut s, &budget, 1.0).map_err(err)?;
    ensure!(
        log.epochs_run == 8 && log.best_epoch == 3 && log.stop_reason == StopReason::Patience,
        "best at 3, patience 5: ran {} epochs, best {}, {:?}",
        log.epochs_run,
        log.best_epoch,
        log.stop_reason
    );
    ensure!(s.snapshot == Some(3), "snapshot is epoch {:?}", s.snapshot);
    ensure!(log.best_eval.map(|e| e.accuracy) == Some(0.70), "best evaluation {:?}", log.best_eval);

    // Random sequences against a direct simulation of the rule.
    let mut rng = RngSeed(505).rng();
    for _ in 0..500 {
        let patience = rng.random_range(1..=8);
        let cap = rng.random_range(1..=40);
        let acc: Vec<f64> = (0..cap).map(|_| (rng.random_range(0..20) as f64) / 20.0).collect();
        let (mut best, mut best_e, mut stop) = (f64::NEG_INFINITY, 0, cap);
        for (k, &a) in acc.iter().enumerate() {
            let e = k + 1;
            if a > best {
                best = a;
                best_e = e;
            }
            if e - best_e >= patience {
                stop = e;
                break;
            }
        }
        let b = TrainBudget {
            patience,
            max_time_s: 1e9,
            max_epochs: cap,
        };
        let mut s = Scripted::new(acc);
        let log = drive_session(&mut s, &b, 0.5).map_err(err)?;
        ensure!(
            log.epochs_run == stop && log.best_epoch == best_e && s.snapshot == Some(best_e),
            "patience {patience}: got ({}, {}), want ({stop}, {best_e})",
            log.epochs_run,
            log.best_epoch
        );
    }

    // Time budget: always improving, so only the clock can stop it.
    for _ in 0..500 {
        let cost = rng.random_range(0.05..5.0);
        let max_time = rng.random_range(0.5..60.0);
        let b = TrainBudget {
            patience: 3,
            max_time_s: max_time,
            max_epochs: 100_000,
        };
        let mut s = Scripted::new((1..=100_000).map(|e| 1.0 - 1.0 / e as f64).collect());
        let log = drive_session(&mut s, &b, cost).map_err(err)?;
        ensure!(log.stop_reason == StopReason::TimeBudget, "stopped by {:?}", log.stop_reason);
        ensure!(
            log.duration_s <= max_time + cost + 1e-9 && log.duration_s - cost <= max_time + 1e-9,
            "duration {} with budget {max_time} and epoch cost {cost}",
            log.duration_s
        );
    }

    // The real trainer: the returned model is the best validation snapshot.
    let mut rng = RngSeed(506).rng();
    let (c, d, n) = (4, 6, 120);
    let features: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels: Vec<usize> = (0..n).map(|i| ((features[i * d] > 0.0) as usize) * 2 + (i % 2)).collect();
    let window = LabeledBatch::new(d, features, labels).map_err(err)?;
    let model = StudentModel::random(c, d, 0.1, &mut rng);
    let cfg = TrainerConfig::default();
    let cost = EpochCost::default();
    let b = TrainBudget {
        patience: 4,
        max_time_s: 3.0,
        max_epochs: 50,
    };
    let out = retrain(&model, &window, &HyperParams::default(), &b, &cost, &cfg, RngSeed(7));
    let (train, valid) = time_split(&window, &cfg).unwrap();
    let epoch_s = cost.epoch_seconds(train.len());
    ensure!(out.train_duration_s <= b.max_time_s + epoch_s + 1e-9, "trainer overran: {}", out.train_duration_s);
    let again = out.final_model.evaluate(&valid).map_err(err)?;
    ensure!(Some(again) == out.best_eval, "returned model scores {again:?}, best was {:?}", out.best_eval);
    Ok("stop at 8, snapshot 3; 500 random patience runs; 500 budget runs within one epoch".into())
}

fn criterion_6() -> Outcome {
    let mut rng = RngSeed(606).rng();
    const DRAWS: usize = 1_000_000;
    let mut worst_z = 0.0f64;
    for case in 0..20 {
        let mu = rng.random_range(-2.0..2.0);
        let sigma = rng.random_range(0.05..2.0);
        let f_best = rng.random_range(-2.0..2.0);
        let xi = rng.random_range(0.0..0.1);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..DRAWS {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = (mu + sigma * z - f_best - xi).max(0.0);
            sum += v;
            sq += v * v;
        }
        let mean = sum / DRAWS as f64;
        let var = (sq / DRAWS as f64 - mean * mean).max(0.0) * DRAWS as f64 / (DRAWS - 1) as f64;
        let se = (var / DRAWS as f64).sqrt();
        let ei = expected_improvement(mu, sigma, f_best, xi);
        let gap = (ei - mean).abs();
        ensure!(gap <= 3.0 * se + 1e-12, "case {case}: EI {ei} vs MC {mean} (se {se})");
        if se > 0.0 {
            worst_z = worst_z.max(gap / se);
        }
    }

    let mut worst_interp = 0.0f64;
    for trial in 0..10 {
        let dim = 1 + trial % 3;
        let n = rng.random_range(3..=8);
        let pts = latin_hypercube(n, dim, &mut rng);
        let ys: Vec<f64> = (0..n).map(|_| 3.0 * normal(&mut rng)).collect();
        let gp = GpSurrogate::fit(
            &pts,
            &ys,
            &GpConfig {
                length_scales: vec![0.2],
                noise: 0.0,
            },
        )
        .map_err(err)?;
        for (p, y) in pts.iter().zip(&ys) {
            worst_interp = worst_interp.max((gp.posterior(p).0 - y).abs());
        }
    }
    ensure!(worst_interp <= 1e-6, "GP misses an observation by {worst_interp:.3e}");

    let objective = |x: f64| x * (10.0 * x).sin();
    let grid = 100_000;
    let x_star = (0..=grid)
        .map(|i| i as f64 / grid as f64)
        .max_by(|a, b| objective(*a).total_cmp(&objective(*b)))
        .unwrap();
    let cfg = EiConfig {
        init_points: 8,
        max_iters: 22,
        ..EiConfig::default()
    };
    let mut lands = Vec::new();
    for seed in 1..=3 {
        let mut evals = 0;
        let res = optimize_unit(
            1,
            |p| {
                evals += 1;
                objective(p[0])
            },
            &cfg,
            RngSeed(seed),
            &[],
        )
        .map_err(err)?;
        ensure!(evals <= 30, "seed {seed}: {evals} evaluations");
        let off = (res.best_point[0] - x_star).abs();
        ensure!(off <= 0.05, "seed {seed}: best {} vs grid optimum {x_star}", res.best_point[0]);
        lands.push(format!("{off:.3}/{evals}"));
    }
    Ok(format!(
        "EI worst {worst_z:.2} se, GP interpolation {worst_interp:.1e}, optimum x*={x_star:.4} off/evals {}",
        lands.join(" ")
    ))
}

fn experiments_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments")
}

fn load_spec(name: &str) -> Result<(ExperimentSpec, Config), String> {
    let (spec, cfg) = ExperimentSpec::load(&experiments_dir().join(format!("{name}.spec"))).map_err(err)?;
    spec.validate().map_err(err)?;
    cfg.validate().map_err(err)?;
    ensure!(cfg == Config::default(), "{name}.spec does not run on the shipped defaults");
    ensure!(cfg.streams.source == StreamSource::Library, "{name}.spec is not on the benchmark library");
    ensure!(spec.seeds.len() == 3, "{name}.spec has {} seeds", spec.seeds.len());
    Ok((spec, cfg))
}

fn run_spec(name: &str) -> Result<(ExperimentSpec, ExperimentReport), String> {
    let (spec, cfg) = load_spec(name)?;
    let report = run_experiment(&spec, &cfg).map_err(err)?;
    for line in format_table(&report).lines().chain(format_verdicts(&report.verdicts).lines()) {
        println!("    {line}");
    }
    Ok((spec, report))
}

/// Per-seed values of one cell, keyed by seed.
fn cell(runs: &[RunResult], policy: &str, cameras: Option<usize>, k: Option<f64>, f: fn(&RunResult) -> f64) -> BTreeMap<u64, f64> {
    runs.iter()
        .filter(|r| r.policy == policy && cameras.is_none_or(|c| r.cameras == c) && k.is_none_or(|k| r.upload_fraction == k))
        .map(|r| (r.seed, f(r)))
        .collect()
}

fn acc_pct(r: &RunResult) -> f64 {
    100.0 * r.accuracy
}

fn cycle(r: &RunResult) -> f64 {
    r.mean_cycle_s
}

fn mean(v: &BTreeMap<u64, f64>) -> f64 {
    v.values().sum::<f64>() / v.len() as f64
}

/// Majority of seeds in favor, and the means in the same direction by at
/// least `gap`. `strict` selects `>` over `>=` per seed.
fn majority(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>, gap: f64, strict: bool) -> Result<String, String> {
    ensure!(!a.is_empty() && a.len() == b.len() && a.keys().eq(b.keys()), "seed sets differ");
    let wins = a
        .iter()
        .filter(|(s, x)| if strict { **x > b[*s] } else { **x >= b[*s] })
        .count();
    let diff = mean(a) - mean(b);
    let line = format!("{wins}/{} seeds, mean gap {diff:+.2}", a.len());
    ensure!(2 * wins > a.len() && diff >= gap, "{line}");
    Ok(line)
}

fn criterion_7() -> Outcome {
    let (spec, report) = run_spec("table1")?;
    ensure!(spec.cameras == [7], "table1 cameras {:?}", spec.cameras);
    let chain = ["edgesync", "ams_like", "one_time", "no_adapt"];
    let mut parts = Vec::new();
    for w in chain.windows(2) {
        let a = cell(&report.runs, w[0], Some(7), None, acc_pct);
        let b = cell(&report.runs, w[1], Some(7), None, acc_pct);
        let line = majority(&a, &b, 1.0, true).map_err(|e| format!("{} > {}: {e}", w[0], w[1]))?;
        parts.push(format!("{} > {} ({line})", w[0], w[1]));
    }
    ensure!(report.all_pass(), "a declared claim failed");
    Ok(parts.join("; "))
}

fn criterion_8() -> Outcome {
    let (_, report) = run_spec("table2")?;
    let es = mean(&cell(&report.runs, "edgesync", None, None, cycle));
    let ams = mean(&cell(&report.runs, "ams_like", None, None, cycle));
    let star = mean(&cell(&report.runs, "edgesync_star", None, None, cycle));
    let line = format!(
        "cycle edgesync {es:.1} s vs ams_like {ams:.1} s (x{:.3}); edgesync_star {star:.1} s (+{:.1}%)",
        es / ams,
        100.0 * (star / es - 1.0)
    );
    ensure!(es <= 0.5 * ams && star >= 1.15 * es, "{line}");
    ensure!(report.all_pass(), "a declared claim failed");
    Ok(line)
}

fn criterion_9() -> Outcome {
    let (spec, report) = run_spec("table3")?;
    ensure!(spec.kind == ExperimentKind::Ablation, "table3 is not an ablation");
    let get = |p: &str| cell(&report.runs, p, None, None, acc_pct);
    let (es, f, tf, stf) = (get("edgesync"), get("edgesync_f"), get("edgesync_tf"), get("edgesync_stf"));
    let a = majority(&es, &f, 0.0, false).map_err(|e| format!("edgesync >= edgesync_f: {e}"))?;
    let b = majority(&f, &stf, 0.0, false).map_err(|e| format!("edgesync_f >= edgesync_stf: {e}"))?;
    let (mf, mtf, mstf) = (mean(&f), mean(&tf), mean(&stf));
    let line = format!("es>=f ({a}); f>=stf ({b}); stf {mstf:.2} <= tf {mtf:.2} <= f {mf:.2}");
    ensure!(mstf <= mtf && mtf <= mf, "{line}");
    ensure!(report.all_pass(), "a declared claim failed");
    Ok(line)
}

fn criterion_10() -> Outcome {
    let (spec, report) = run_spec("fig3")?;
    ensure!(spec.cameras == [1, 4, 7], "fig3 cameras {:?}", spec.cameras);
    let es: Vec<f64> = spec
        .cameras
        .iter()
        .map(|&c| mean(&cell(&report.runs, "edgesync", Some(c), None, acc_pct)))
        .collect();
    let na: Vec<f64> = spec
        .cameras
        .iter()
        .map(|&c| mean(&cell(&report.runs, "no_adapt", Some(c), None, acc_pct)))
        .collect();
    let spread = na.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - na.iter().cloned().fold(f64::INFINITY, f64::min);
    let line = format!("edgesync {es:.2?} over cameras {:?}; no_adapt spread {spread:.2}", spec.cameras);
    ensure!(es.windows(2).all(|w| w[1] <= w[0]) && spread < 1.5, "{line}");
    ensure!(report.all_pass(), "a declared claim failed");
    Ok(line)
}

fn criterion_11() -> Outcome {
    let (spec, report) = run_spec("fig5")?;
    ensure!(spec.fixed_cycle_s.is_some(), "fig5 has no fixed cycle");
    ensure!(
        spec.upload_fractions == [0.2, 0.4, 0.6, 0.7, 0.8, 1.0],
        "fig5 fractions {:?}",
        spec.upload_fractions
    );
    let means: Vec<f64> = spec
        .upload_fractions
        .iter()
        .map(|&k| mean(&cell(&report.runs, "edgesync", None, Some(k), acc_pct)))
        .collect();
    let (best_i, best) = means
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
    let line = format!(
        "means {means:.2?}; max at k={} ({best:.2}), k=0.2 trails by {:.2}",
        spec.upload_fractions[best_i],
        best - means[0]
    );
    ensure!(best_i < means.len() - 1 && best - means[0] >= 1.0, "{line}");
    ensure!(report.all_pass(), "a declared claim failed");
    Ok(line)
}

fn criterion_12() -> Outcome {
    let (spec, cfg) = load_spec("table1")?;
    let root = tempfile::tempdir().map_err(err)?;
    let mut dirs = Vec::new();
    for rep in 0..2 {
        let dir = root.path().join(format!("run{rep}"));
        let report = run_experiment(&spec, &cfg).map_err(err)?;
        write_report(&report, &dir).map_err(err)?;
        dirs.push(dir);
    }
    let list = |d: &Path| -> Result<Vec<String>, String> {
        let mut names: Vec<String> = fs::read_dir(d)
            .map_err(err)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()
            .map_err(err)?;
        names.sort();
        Ok(names)
    };
    let names = list(&dirs[0])?;
    ensure!(names == list(&dirs[1])?, "the two runs wrote different files");
    ensure!(!names.is_empty(), "no metric files written");
    let mut bytes = 0;
    for n in &names {
        let a = fs::read(dirs[0].join(n)).map_err(err)?;
        let b = fs::read(dirs[1].join(n)).map_err(err)?;
        ensure!(a == b, "{n} differs between runs");
        bytes += a.len();
    }
    Ok(format!("{} ({bytes} bytes) identical across two runs", names.join(", ")))
}

fn main() {
    let criteria: [Criterion; 12] = [
        (1, Duration::from_secs(1), criterion_1),
        (2, Duration::from_secs(5), criterion_2),
        (3, Duration::from_secs(5), criterion_3),
        (4, Duration::from_secs(10), criterion_4),
        (5, Duration::from_secs(1), criterion_5),
        (6, Duration::from_secs(30), criterion_6),
        (7, Duration::from_secs(300), criterion_7),
        (8, Duration::from_secs(300), criterion_8),
        (9, Duration::from_secs(300), criterion_9),
        (10, Duration::from_secs(300), criterion_10),
        (11, Duration::from_secs(300), criterion_11),
        (12, Duration::from_secs(600), criterion_12),
    ];
    let mut failed = Vec::new();
    for (n, limit, check) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(d) if took > limit => Err(format!("{d}; took {:.2} s, limit {} s", took.as_secs_f64(), limit.as_secs())),
            r => r,
        };
        match result {
            Ok(detail) => println!("criterion {n}: PASS ({:.2} s) {detail}", took.as_secs_f64()),
            Err(why) => {
                println!("criterion {n}: FAIL ({:.2} s) {why}", took.as_secs_f64());
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
