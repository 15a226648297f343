//! Multi-seed experiment harness: runs a matrix of (policy, cameras, upload
//! fraction, seed) simulations and judges declared ordering claims.
//!
//! Every verdict is computed from the per-run rows alone, so it can be
//! recomputed from an emitted `runs.csv` with [`read_runs_csv`] and
//! [`evaluate_claims`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, StreamSource};
use crate::error::{Error, Result};
use crate::sim::{resolve_policy, run_simulation, PolicyKind, POLICY_NAMES};
use crate::types::RngSeed;
use crate::util::write_atomic;

/// Order in which the ablation variants are expected to rank.
pub const ABLATION_CHAIN: [&str; 4] = ["edgesync", "edgesync_f", "edgesync_tf", "edgesync_stf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Comparison,
    /// Restricted to the ablation variants and `ams_like`; without declared
    /// claims, the adjacent pairs of [`ABLATION_CHAIN`] are checked.
    Ablation,
}

fn default_gap() -> f64 {
    1.0
}

/// A qualitative claim over the run matrix. Accuracy gaps and spreads are in
/// percentage points. `cameras` / `upload_fraction` pick the cell when the
/// matrix sweeps them; they default to the first entry of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Claim {
    /// `a` beats `b` on a majority of seeds and by `gap` points in mean.
    Greater {
        a: String,
        b: String,
        #[serde(default = "default_gap")]
        gap: f64,
        cameras: Option<usize>,
        upload_fraction: Option<f64>,
    },
    /// `a >= b` on a majority of seeds and in mean.
    AtLeast {
        a: String,
        b: String,
        cameras: Option<usize>,
        upload_fraction: Option<f64>,
    },
    /// `mean(low) <= mean(policy) <= mean(high)`.
    Between {
        policy: String,
        low: String,
        high: String,
        cameras: Option<usize>,
        upload_fraction: Option<f64>,
    },
    /// Mean accuracy never rises as the camera count grows.
    NonIncreasingInCameras { policy: String, upload_fraction: Option<f64> },
    /// Mean accuracy varies by less than `limit` points across camera counts.
    SpreadInCameras {
        policy: String,
        limit: f64,
        upload_fraction: Option<f64>,
    },
    /// Over the upload-fraction sweep the best mean sits below the largest
    /// fraction, and the smallest fraction trails the best by `min_drop`.
    InteriorMaxInFraction {
        policy: String,
        min_drop: f64,
        cameras: Option<usize>,
    },
    /// `mean cycle(a) <= ratio * mean cycle(b)`.
    CycleRatioAtMost {
        a: String,
        b: String,
        ratio: f64,
        cameras: Option<usize>,
        upload_fraction: Option<f64>,
    },
    /// `mean cycle(a) >= ratio * mean cycle(b)`.
    CycleRatioAtLeast {
        a: String,
        b: String,
        ratio: f64,
        cameras: Option<usize>,
        upload_fraction: Option<f64>,
    },
}

impl Claim {
    fn policies(&self) -> Vec<&str> {
        match self {
            Claim::Greater { a, b, .. }
            | Claim::AtLeast { a, b, .. }
            | Claim::CycleRatioAtMost { a, b, .. }
            | Claim::CycleRatioAtLeast { a, b, .. } => vec![a, b],
            Claim::Between { policy, low, high, .. } => vec![policy, low, high],
            Claim::NonIncreasingInCameras { policy, .. }
            | Claim::SpreadInCameras { policy, .. }
            | Claim::InteriorMaxInFraction { policy, .. } => vec![policy],
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Claim::Greater { a, b, gap, .. } => format!("{a} > {b} (majority, mean gap >= {gap})"),
            Claim::AtLeast { a, b, .. } => format!("{a} >= {b} (majority, mean)"),
            Claim::Between { policy, low, high, .. } => format!("{low} <= {policy} <= {high} (mean)"),
            Claim::NonIncreasingInCameras { policy, .. } => format!("{policy} non-increasing in cameras"),
            Claim::SpreadInCameras { policy, limit, .. } => format!("{policy} spread across cameras < {limit}"),
            Claim::InteriorMaxInFraction { policy, min_drop, .. } => {
                format!("{policy} interior max over k, smallest k trails by >= {min_drop}")
            }
            Claim::CycleRatioAtMost { a, b, ratio, .. } => format!("cycle({a}) <= {ratio} x cycle({b})"),
            Claim::CycleRatioAtLeast { a, b, ratio, .. } => format!("cycle({a}) >= {ratio} x cycle({b})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub kind: ExperimentKind,
    pub policies: Vec<String>,
    /// Camera counts to sweep; the config's count when empty.
    #[serde(default)]
    pub cameras: Vec<usize>,
    /// Upload fractions to sweep; the config's `k` when empty.
    #[serde(default)]
    pub upload_fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Pads every cyclic policy's cycles to this length.
    #[serde(default)]
    pub fixed_cycle_s: Option<f64>,
    /// Base run configuration, relative to this file.
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub claims: Vec<Claim>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            msg: e.message().to_string(),
        })
    }

    /// Reads a spec and the configuration it names (defaults when none).
    pub fn load(path: &Path) -> Result<(Self, Config)> {
        let spec = Self::from_toml(&fs::read_to_string(path)?, path)?;
        let cfg = match &spec.config {
            Some(c) => Config::load(&path.parent().unwrap_or(Path::new("")).join(c))?,
            None => Config::default(),
        };
        Ok((spec, cfg))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("experiment {:?}: {msg}", self.name)));
        if self.policies.is_empty() || self.seeds.is_empty() {
            return bad("needs at least one policy and one seed".into());
        }
        for p in &self.policies {
            if !POLICY_NAMES.contains(&p.as_str()) {
                return bad(format!("unknown policy {p:?}"));
            }
            if self.kind == ExperimentKind::Ablation && !ABLATION_CHAIN.contains(&p.as_str()) && p != "ams_like" {
                return bad(format!("{p} is not an ablation variant"));
            }
        }
        if has_duplicates(&self.policies) || has_duplicates(&self.seeds) || has_duplicates(&self.cameras) {
            return bad("duplicate policy, seed or camera count".into());
        }
        if self.cameras.contains(&0) {
            return bad("camera counts must be positive".into());
        }
        if self.upload_fractions.iter().any(|k| !(*k > 0.0 && *k <= 1.0)) {
            return bad("upload fractions must lie in (0, 1]".into());
        }
        if self.fixed_cycle_s.is_some_and(|c| !(c > 0.0)) {
            return bad("fixed_cycle_s must be positive".into());
        }
        if !self.claims.is_empty() && self.seeds.len() < 2 {
            return bad("ordering claims need at least two seeds".into());
        }
        for c in &self.claims {
            for p in c.policies() {
                if !self.policies.iter().any(|q| q == p) {
                    return bad(format!("claim `{}` names {p}, which is not run", c.describe()));
                }
            }
        }
        Ok(())
    }

    /// Declared claims, or the default chain for an ablation without any.
    pub fn effective_claims(&self) -> Vec<Claim> {
        if !self.claims.is_empty() || self.kind != ExperimentKind::Ablation {
            return self.claims.clone();
        }
        let present: Vec<&str> = ABLATION_CHAIN
            .iter()
            .copied()
            .filter(|p| self.policies.iter().any(|q| q == p))
            .collect();
        if self.seeds.len() < 2 {
            return Vec::new();
        }
        present
            .windows(2)
            .map(|w| Claim::AtLeast {
                a: w[0].to_string(),
                b: w[1].to_string(),
                cameras: None,
                upload_fraction: None,
            })
            .collect()
    }
}

fn has_duplicates<T: PartialOrd>(v: &[T]) -> bool {
    v.iter().enumerate().any(|(i, a)| v[..i].iter().any(|b| a == b))
}

/// One simulation of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub policy: String,
    pub cameras: usize,
    pub upload_fraction: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub mean_cycle_s: f64,
    pub update_cycles: usize,
    pub mean_label_s: f64,
    pub mean_train_s: f64,
    pub upload_bytes: f64,
    pub download_bytes: f64,
}

/// Mean and sample standard deviation over seeds for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub policy: String,
    pub cameras: usize,
    pub upload_fraction: f64,
    pub seeds: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub cycle_mean_s: f64,
    /// Mean bytes over seeds.
    pub upload_bytes: f64,
    pub download_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub claim: String,
    pub pass: bool,
    /// Seeds on which the claim held individually.
    pub wins: usize,
    pub seeds: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub name: String,
    pub runs: Vec<RunResult>,
    pub cells: Vec<CellSummary>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

struct Cell<'a> {
    policy: &'a str,
    cameras: usize,
    k: f64,
    seed: u64,
}

fn sweep_axes(spec: &ExperimentSpec, cfg: &Config) -> (Vec<usize>, Vec<f64>) {
    let cams = if spec.cameras.is_empty() {
        vec![cfg.streams.cameras]
    } else {
        spec.cameras.clone()
    };
    let ks = if spec.upload_fractions.is_empty() {
        vec![cfg.filter.upload_fraction]
    } else {
        spec.upload_fractions.clone()
    };
    (cams, ks)
}

fn run_cell(cell: &Cell, spec: &ExperimentSpec, cfg: &Config, stf_cycle: Option<f64>) -> Result<RunResult> {
    let mut cfg = cfg.clone();
    cfg.streams.cameras = cell.cameras;
    cfg.filter.upload_fraction = cell.k;
    let seed = RngSeed(cell.seed);
    let (streams, initial) = cfg.load_inputs(seed)?;
    let settings = cfg.sim_settings()?;
    let mut policies = cfg.policies;
    if policies.stf_cycle_s.is_none() {
        policies.stf_cycle_s = stf_cycle;
    }
    let mut policy = resolve_policy(cell.policy, &policies, &streams, &initial, &settings, seed)?;
    if policy.kind == PolicyKind::Cyclic && spec.fixed_cycle_s.is_some() {
        policy.fixed_cycle_s = spec.fixed_cycle_s;
    }
    let out = run_simulation(&streams, &initial, &policy, &settings, seed)?;
    let r = out.report;
    log::info!(
        "{} {} cameras={} k={} seed={}: accuracy {:.4}",
        spec.name,
        cell.policy,
        cell.cameras,
        cell.k,
        cell.seed,
        r.accuracy
    );
    Ok(RunResult {
        policy: cell.policy.to_string(),
        cameras: cell.cameras,
        upload_fraction: cell.k,
        seed: cell.seed,
        accuracy: r.accuracy,
        mean_cycle_s: r.mean_cycle_s,
        update_cycles: r.update_cycles,
        mean_label_s: r.mean_breakdown.label,
        mean_train_s: r.mean_breakdown.train,
        upload_bytes: r.upload_bytes,
        download_bytes: r.download_bytes,
    })
}

/// Runs the matrix in parallel and judges the claims. Results are ordered
/// by (policy as listed, cameras, upload fraction, seed), independent of
/// thread scheduling.
pub fn run_comparison(spec: &ExperimentSpec, cfg: &Config) -> Result<ExperimentReport> {
    spec.validate()?;
    cfg.validate()?;
    let (cams, ks) = sweep_axes(spec, cfg);
    if cfg.streams.source == StreamSource::Dir && cams.len() > 1 {
        return Err(Error::Config("camera sweeps need the synthetic library as stream source".into()));
    }
    let mut cells = Vec::new();
    for p in &spec.policies {
        for &c in &cams {
            for &k in &ks {
                for &s in &spec.seeds {
                    cells.push(Cell {
                        policy: p,
                        cameras: c,
                        k,
                        seed: s,
                    });
                }
            }
        }
    }
    // `edgesync_stf` reuses the measured `edgesync` cycle of the same cell
    // when that run is part of the matrix.
    let is_stf = |c: &Cell| c.policy == "edgesync_stf";
    let first: Vec<(usize, RunResult)> = cells
        .par_iter()
        .enumerate()
        .filter(|(_, c)| !is_stf(c))
        .map(|(i, c)| run_cell(c, spec, cfg, None).map(|r| (i, r)))
        .collect::<Result<_>>()?;
    let measured = |c: &Cell| {
        first
            .iter()
            .map(|(_, r)| r)
            .find(|r| r.policy == "edgesync" && r.cameras == c.cameras && r.upload_fraction == c.k && r.seed == c.seed)
            .map(|r| r.mean_cycle_s.max(cfg.costs.idle_wait_s))
    };
    let second: Vec<(usize, RunResult)> = cells
        .par_iter()
        .enumerate()
        .filter(|(_, c)| is_stf(c))
        .map(|(i, c)| run_cell(c, spec, cfg, measured(c)).map(|r| (i, r)))
        .collect::<Result<_>>()?;
    let mut all: Vec<(usize, RunResult)> = first.into_iter().chain(second).collect();
    all.sort_by_key(|(i, _)| *i);
    let runs: Vec<RunResult> = all.into_iter().map(|(_, r)| r).collect();
    let verdicts = evaluate_claims(&spec.effective_claims(), &runs)?;
    Ok(ExperimentReport {
        name: spec.name.clone(),
        cells: summarize(&runs),
        runs,
        verdicts,
    })
}

/// [`run_comparison`] for an ablation spec.
pub fn run_ablation(spec: &ExperimentSpec, cfg: &Config) -> Result<ExperimentReport> {
    if spec.kind != ExperimentKind::Ablation {
        return Err(Error::Config(format!("experiment {:?} is not an ablation", spec.name)));
    }
    run_comparison(spec, cfg)
}

pub fn run_experiment(spec: &ExperimentSpec, cfg: &Config) -> Result<ExperimentReport> {
    match spec.kind {
        ExperimentKind::Comparison => run_comparison(spec, cfg),
        ExperimentKind::Ablation => run_ablation(spec, cfg),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn summarize(runs: &[RunResult]) -> Vec<CellSummary> {
    let mut order: Vec<(String, usize, f64)> = Vec::new();
    for r in runs {
        let key = (r.policy.clone(), r.cameras, r.upload_fraction);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(policy, cameras, k)| {
            let rs: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.policy == policy && r.cameras == cameras && r.upload_fraction == k)
                .collect();
            let acc: Vec<f64> = rs.iter().map(|r| r.accuracy * 100.0).collect();
            let cyc: Vec<f64> = rs.iter().map(|r| r.mean_cycle_s).collect();
            CellSummary {
                policy,
                cameras,
                upload_fraction: k,
                seeds: rs.len(),
                accuracy_mean: mean(&acc),
                accuracy_sd: sample_sd(&acc),
                cycle_mean_s: mean(&cyc),
                upload_bytes: mean(&rs.iter().map(|r| r.upload_bytes).collect::<Vec<_>>()),
                download_bytes: mean(&rs.iter().map(|r| r.download_bytes).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// Per-seed values of one cell, keyed by seed.
struct Series(BTreeMap<u64, (f64, f64)>);

impl Series {
    fn acc(&self) -> Vec<f64> {
        self.0.values().map(|v| v.0).collect()
    }

    fn cycle(&self) -> Vec<f64> {
        self.0.values().map(|v| v.1).collect()
    }
}

struct Matrix<'a> {
    runs: &'a [RunResult],
    cams: Vec<usize>,
    ks: Vec<f64>,
}

impl<'a> Matrix<'a> {
    fn new(runs: &'a [RunResult]) -> Self {
        let mut seen_c = Vec::new();
        let mut seen_k: Vec<f64> = Vec::new();
        for r in runs {
            if !seen_c.contains(&r.cameras) {
                seen_c.push(r.cameras);
            }
            if !seen_k.contains(&r.upload_fraction) {
                seen_k.push(r.upload_fraction);
            }
        }
        Matrix {
            runs,
            cams: seen_c,
            ks: seen_k,
        }
    }

    fn pick(&self, cameras: Option<usize>, k: Option<f64>) -> Result<(usize, f64)> {
        let c = cameras.or(self.cams.first().copied());
        let k = k.or(self.ks.first().copied());
        match (c, k) {
            (Some(c), Some(k)) => Ok((c, k)),
            _ => Err(Error::Config("claims need at least one run".into())),
        }
    }

    /// Accuracy in points and mean cycle, per seed.
    fn series(&self, policy: &str, cameras: usize, k: f64) -> Result<Series> {
        let map: BTreeMap<u64, (f64, f64)> = self
            .runs
            .iter()
            .filter(|r| r.policy == policy && r.cameras == cameras && r.upload_fraction == k)
            .map(|r| (r.seed, (r.accuracy * 100.0, r.mean_cycle_s)))
            .collect();
        if map.is_empty() {
            return Err(Error::Config(format!("no runs for {policy} at cameras={cameras}, k={k}")));
        }
        Ok(Series(map))
    }

    fn paired(&self, a: &str, b: &str, cameras: Option<usize>, k: Option<f64>) -> Result<(Series, Series)> {
        let (c, k) = self.pick(cameras, k)?;
        let (sa, sb) = (self.series(a, c, k)?, self.series(b, c, k)?);
        if !sa.0.keys().eq(sb.0.keys()) {
            return Err(Error::Config(format!("{a} and {b} were run on different seeds")));
        }
        Ok((sa, sb))
    }
}

fn pairwise_wins(a: &[f64], b: &[f64], holds: impl Fn(f64, f64) -> bool) -> usize {
    a.iter().zip(b).filter(|(x, y)| holds(**x, **y)).count()
}

fn majority(wins: usize, n: usize) -> bool {
    2 * wins > n
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/")
}

/// Judges every claim against the per-run rows.
pub fn evaluate_claims(claims: &[Claim], runs: &[RunResult]) -> Result<Vec<Verdict>> {
    let m = Matrix::new(runs);
    claims.iter().map(|c| evaluate(c, &m)).collect()
}

fn evaluate(claim: &Claim, m: &Matrix) -> Result<Verdict> {
    let verdict = |pass, wins, seeds, detail| Verdict {
        claim: claim.describe(),
        pass,
        wins,
        seeds,
        detail,
    };
    Ok(match claim {
        Claim::Greater {
            a,
            b,
            gap,
            cameras,
            upload_fraction,
        } => {
            let (sa, sb) = m.paired(a, b, *cameras, *upload_fraction)?;
            let (xa, xb) = (sa.acc(), sb.acc());
            let wins = pairwise_wins(&xa, &xb, |x, y| x > y);
            let diff = mean(&xa) - mean(&xb);
            let detail = format!("mean {:.3} vs {:.3} (gap {diff:.3}); per seed {} vs {}", mean(&xa), mean(&xb), fmt_list(&xa), fmt_list(&xb));
            verdict(majority(wins, xa.len()) && diff >= *gap, wins, xa.len(), detail)
        }
        Claim::AtLeast {
            a,
            b,
            cameras,
            upload_fraction,
        } => {
            let (sa, sb) = m.paired(a, b, *cameras, *upload_fraction)?;
            let (xa, xb) = (sa.acc(), sb.acc());
            let wins = pairwise_wins(&xa, &xb, |x, y| x >= y);
            let detail = format!("mean {:.3} vs {:.3}; per seed {} vs {}", mean(&xa), mean(&xb), fmt_list(&xa), fmt_list(&xb));
            verdict(majority(wins, xa.len()) && mean(&xa) >= mean(&xb), wins, xa.len(), detail)
        }
        Claim::Between {
            policy,
            low,
            high,
            cameras,
            upload_fraction,
        } => {
            let (sx, sl) = m.paired(policy, low, *cameras, *upload_fraction)?;
            let (_, sh) = m.paired(policy, high, *cameras, *upload_fraction)?;
            let (x, l, h) = (sx.acc(), sl.acc(), sh.acc());
            let wins = (0..x.len()).filter(|&i| l[i] <= x[i] && x[i] <= h[i]).count();
            let (mx, ml, mh) = (mean(&x), mean(&l), mean(&h));
            let detail = format!("means {low} {ml:.3} <= {policy} {mx:.3} <= {high} {mh:.3}");
            verdict(ml <= mx && mx <= mh, wins, x.len(), detail)
        }
        Claim::NonIncreasingInCameras { policy, upload_fraction } => {
            let mut cams = m.cams.clone();
            cams.sort_unstable();
            let k = m.pick(None, *upload_fraction)?.1;
            let series: Vec<Series> = cams.iter().map(|&c| m.series(policy, c, k)).collect::<Result<_>>()?;
            let means: Vec<f64> = series.iter().map(|s| mean(&s.acc())).collect();
            let seeds = series[0].0.len();
            let wins = (0..seeds)
                .filter(|&i| series.windows(2).all(|w| w[1].acc().get(i) <= w[0].acc().get(i)))
                .count();
            let detail = format!("cameras {cams:?}: means {}", fmt_list(&means));
            verdict(means.windows(2).all(|w| w[1] <= w[0]), wins, seeds, detail)
        }
        Claim::SpreadInCameras {
            policy,
            limit,
            upload_fraction,
        } => {
            let k = m.pick(None, *upload_fraction)?.1;
            let means: Vec<f64> = m
                .cams
                .iter()
                .map(|&c| m.series(policy, c, k).map(|s| mean(&s.acc())))
                .collect::<Result<_>>()?;
            let spread = means.iter().cloned().fold(f64::MIN, f64::max) - means.iter().cloned().fold(f64::MAX, f64::min);
            let detail = format!("cameras {:?}: means {} (spread {spread:.3})", m.cams, fmt_list(&means));
            verdict(spread < *limit, 0, 0, detail)
        }
        Claim::InteriorMaxInFraction {
            policy,
            min_drop,
            cameras,
        } => {
            let c = m.pick(*cameras, None)?.0;
            let mut ks = m.ks.clone();
            ks.sort_by(f64::total_cmp);
            let means: Vec<f64> = ks
                .iter()
                .map(|&k| m.series(policy, c, k).map(|s| mean(&s.acc())))
                .collect::<Result<_>>()?;
            let best = means.iter().cloned().fold(f64::MIN, f64::max);
            let at = ks[means.iter().position(|&x| x == best).expect("non-empty")];
            let interior = ks.len() >= 2 && means[..ks.len() - 1].iter().any(|&x| x >= means[ks.len() - 1]);
            let drop = best - means[0];
            let detail = format!("k {ks:?}: means {} (max at k={at}, smallest k trails by {drop:.3})", fmt_list(&means));
            verdict(interior && at < ks[ks.len() - 1] && drop >= *min_drop, 0, 0, detail)
        }
        Claim::CycleRatioAtMost {
            a,
            b,
            ratio,
            cameras,
            upload_fraction,
        }
        | Claim::CycleRatioAtLeast {
            a,
            b,
            ratio,
            cameras,
            upload_fraction,
        } => {
            let at_most = matches!(claim, Claim::CycleRatioAtMost { .. });
            let (sa, sb) = m.paired(a, b, *cameras, *upload_fraction)?;
            let (ca, cb) = (sa.cycle(), sb.cycle());
            let holds = |x: f64, y: f64| if at_most { x <= ratio * y } else { x >= ratio * y };
            let wins = pairwise_wins(&ca, &cb, holds);
            let (ma, mb) = (mean(&ca), mean(&cb));
            let detail = format!("mean cycle {ma:.3} s vs {mb:.3} s (ratio {:.3})", ma / mb);
            verdict(mb > 0.0 && holds(ma, mb), wins, ca.len(), detail)
        }
    })
}

const RUNS_HEADER: &str = "policy,cameras,upload_fraction,seed,accuracy,mean_cycle_s,update_cycles,mean_label_s,mean_train_s,upload_bytes,download_bytes";

/// Per-run rows with shortest round-trip floats, so verdicts recompute exactly.
pub fn write_runs_csv<W: Write + ?Sized>(runs: &[RunResult], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{RUNS_HEADER}")?;
    for r in runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.policy,
            r.cameras,
            r.upload_fraction,
            r.seed,
            r.accuracy,
            r.mean_cycle_s,
            r.update_cycles,
            r.mean_label_s,
            r.mean_train_s,
            r.upload_bytes,
            r.download_bytes
        )?;
    }
    Ok(())
}

pub fn read_runs_csv<R: BufRead>(input: R, origin: &Path) -> Result<Vec<RunResult>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = input.lines();
    if lines.next().transpose()?.as_deref() != Some(RUNS_HEADER) {
        return Err(err(1, "unexpected runs.csv header".into()));
    }
    let mut runs = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let no = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(err(no, format!("expected 11 fields, got {}", f.len())));
        }
        let num = |j: usize| f[j].parse::<f64>().map_err(|_| err(no, format!("bad number {:?}", f[j])));
        let int = |j: usize| f[j].parse::<u64>().map_err(|_| err(no, format!("bad integer {:?}", f[j])));
        runs.push(RunResult {
            policy: f[0].to_string(),
            cameras: int(1)? as usize,
            upload_fraction: num(2)?,
            seed: int(3)?,
            accuracy: num(4)?,
            mean_cycle_s: num(5)?,
            update_cycles: int(6)? as usize,
            mean_label_s: num(7)?,
            mean_train_s: num(8)?,
            upload_bytes: num(9)?,
            download_bytes: num(10)?,
        });
    }
    Ok(runs)
}

/// Fixed-width table of cell means, one row per (policy, cameras, k).
pub fn format_table(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment {}", report.name);
    let _ = writeln!(
        s,
        "{:<14} {:>7} {:>5} {:>5} {:>9} {:>7} {:>9} {:>11} {:>11}",
        "policy", "cameras", "k", "seeds", "acc_mean", "acc_sd", "cycle_s", "upload_B", "download_B"
    );
    for c in &report.cells {
        let _ = writeln!(
            s,
            "{:<14} {:>7} {:>5.2} {:>5} {:>9.3} {:>7.3} {:>9.3} {:>11.0} {:>11.0}",
            c.policy, c.cameras, c.upload_fraction, c.seeds, c.accuracy_mean, c.accuracy_sd, c.cycle_mean_s, c.upload_bytes, c.download_bytes
        );
    }
    s
}

pub fn format_verdicts(verdicts: &[Verdict]) -> String {
    let mut s = String::new();
    for v in verdicts {
        let _ = writeln!(
            s,
            "{} | {} | wins {}/{} | {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.claim,
            v.wins,
            v.seeds,
            v.detail
        );
    }
    s
}

/// Writes `runs.csv`, `table.txt` and `verdicts.txt` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("runs.csv"), |w| write_runs_csv(&report.runs, w))?;
    write_atomic(&dir.join("table.txt"), |w| w.write_all(format_table(report).as_bytes()))?;
    write_atomic(&dir.join("verdicts.txt"), |w| w.write_all(format_verdicts(&report.verdicts).as_bytes()))?;
    Ok(())
}
