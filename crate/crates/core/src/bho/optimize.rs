//! Expected-improvement Bayesian optimization over the unit cube.

use rand::Rng;

use super::gp::{GpConfig, GpSurrogate};
use crate::error::{Error, Result};
use crate::types::{HyperParams, RngSeed};

/// Box over `(log10 learning_rate, momentum, log10 weight_decay)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub log10_lr: (f64, f64),
    pub momentum: (f64, f64),
    pub log10_wd: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox {
            log10_lr: (-4.0, -1.0),
            momentum: (0.0, 0.99),
            log10_wd: (-6.0, -2.0),
        }
    }
}

impl SearchBox {
    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.log10_lr, self.momentum, self.log10_wd] {
            if !(lo < hi) {
                return Err(Error::Config("search box bounds need lower < upper".into()));
            }
        }
        if self.momentum.0 < 0.0 || self.momentum.1 >= 1.0 {
            return Err(Error::Config("momentum bounds must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn dims(&self) -> [(f64, f64); 3] {
        [self.log10_lr, self.momentum, self.log10_wd]
    }

    pub fn from_unit(&self, u: &[f64]) -> HyperParams {
        let v: Vec<f64> = self
            .dims()
            .iter()
            .zip(u)
            .map(|(&(lo, hi), &x)| lo + (hi - lo) * x.clamp(0.0, 1.0))
            .collect();
        HyperParams {
            learning_rate: 10f64.powf(v[0]),
            momentum: v[1],
            weight_decay: 10f64.powf(v[2]),
        }
    }

    pub fn to_unit(&self, h: &HyperParams) -> Vec<f64> {
        let raw = [h.learning_rate.log10(), h.momentum, h.weight_decay.log10()];
        self.dims()
            .iter()
            .zip(raw)
            .map(|(&(lo, hi), x)| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn contains(&self, h: &HyperParams) -> bool {
        let raw = [h.learning_rate.log10(), h.momentum, h.weight_decay.log10()];
        self.dims()
            .iter()
            .zip(raw)
            .all(|(&(lo, hi), x)| x >= lo - 1e-12 && x <= hi + 1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EiConfig {
    pub xi: f64,
    pub candidate_count: usize,
    pub init_points: usize,
    /// Acquisition-driven evaluations after the initial design.
    pub max_iters: usize,
    /// Stop once the best value gains less than this over `stall_window` iterations.
    pub improvement_threshold: f64,
    pub stall_window: usize,
    pub gp: GpConfig,
}

impl Default for EiConfig {
    fn default() -> Self {
        EiConfig {
            xi: 0.01,
            candidate_count: 1000,
            init_points: 8,
            max_iters: 30,
            improvement_threshold: 0.002,
            stall_window: 5,
            gp: GpConfig::default(),
        }
    }
}

impl EiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_count == 0 || self.init_points == 0 || self.max_iters == 0 || self.stall_window == 0 {
            return Err(Error::Config("BO counts must be positive".into()));
        }
        if !(self.xi >= 0.0) || !(self.improvement_threshold > 0.0) {
            return Err(Error::Config("xi must be >= 0 and improvement_threshold > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Point in the unit cube.
    pub point: Vec<f64>,
    /// Value used by the surrogate (imputed when the objective was non-finite).
    pub value: f64,
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub history: Vec<Observation>,
}

/// Stratified (Latin hypercube) design of `n` points in `[0,1]^dim`.
pub fn latin_hypercube<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]; n];
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(strata.as_mut_slice(), rng);
        for (p, s) in pts.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

struct Tracker {
    history: Vec<Observation>,
    best: Option<(Vec<f64>, f64)>,
}

impl Tracker {
    fn record(&mut self, point: Vec<f64>, raw: f64) {
        if raw.is_finite() {
            if self.best.as_ref().is_none_or(|(_, b)| raw > *b) {
                self.best = Some((point.clone(), raw));
            }
            self.history.push(Observation {
                point,
                value: raw,
                imputed: false,
            });
        } else {
            let worst = self
                .history
                .iter()
                .filter(|o| !o.imputed)
                .map(|o| o.value)
                .fold(f64::INFINITY, f64::min);
            let value = if worst.is_finite() { worst } else { 0.0 };
            self.history.push(Observation {
                point,
                value,
                imputed: true,
            });
        }
    }

    fn best_value(&self) -> f64 {
        self.best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1)
    }
}

/// Maximizes `objective` over `[0,1]^dim`. `seeds` are evaluated first and
/// take the place of the leading points of the stratified design.
pub fn optimize_unit<F>(dim: usize, mut objective: F, cfg: &EiConfig, seed: RngSeed, seeds: &[Vec<f64>]) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> f64,
{
    cfg.validate()?;
    let mut rng = seed.rng();
    let mut design: Vec<Vec<f64>> = seeds.iter().map(|p| p.iter().map(|x| x.clamp(0.0, 1.0)).collect()).collect();
    let lhs = latin_hypercube(cfg.init_points, dim, &mut rng);
    design.extend(lhs.into_iter().skip(seeds.len()));
    design.truncate(cfg.init_points.max(seeds.len()));

    let mut t = Tracker {
        history: Vec::new(),
        best: None,
    };
    for p in design {
        let v = objective(&p);
        t.record(p, v);
    }

    let mut best_trace = vec![t.best_value()];
    for iter in 1..=cfg.max_iters {
        let pts: Vec<Vec<f64>> = t.history.iter().map(|o| o.point.clone()).collect();
        let vals: Vec<f64> = t.history.iter().map(|o| o.value).collect();
        let gp = GpSurrogate::fit(&pts, &vals, &cfg.gp)?;
        let f_best = t.best_value();
        let mut pick: Option<(Vec<f64>, f64)> = None;
        for _ in 0..cfg.candidate_count {
            let c: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            let ei = gp.expected_improvement(&c, f_best, cfg.xi);
            if pick.as_ref().is_none_or(|(_, e)| ei > *e) {
                pick = Some((c, ei));
            }
        }
        let (next, _) = pick.expect("candidate_count >= 1");
        let v = objective(&next);
        t.record(next, v);
        best_trace.push(t.best_value());
        if iter >= cfg.stall_window {
            let gain = best_trace[iter] - best_trace[iter - cfg.stall_window];
            if gain < cfg.improvement_threshold {
                break;
            }
        }
    }

    let (best_point, best_value) = t
        .best
        .ok_or_else(|| Error::validation("objective never returned a finite value"))?;
    Ok(OptimizeResult {
        best_point,
        best_value,
        history: t.history,
    })
}

/// Hyperparameter search: `optimize_unit` over a [`SearchBox`].
pub fn optimize<F>(
    mut objective: F,
    search: &SearchBox,
    cfg: &EiConfig,
    seed: RngSeed,
    seeds: &[HyperParams],
) -> Result<(HyperParams, f64, Vec<Observation>)>
where
    F: FnMut(&HyperParams) -> f64,
{
    search.validate()?;
    let unit_seeds: Vec<Vec<f64>> = seeds.iter().map(|h| search.to_unit(h)).collect();
    let res = optimize_unit(3, |u| objective(&search.from_unit(u)), cfg, seed, &unit_seeds)?;
    Ok((search.from_unit(&res.best_point), res.best_value, res.history))
}
