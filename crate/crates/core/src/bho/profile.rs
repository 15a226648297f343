//! Two-stage offline profiling. Stage 1 optimizes each training stream on its
//! own; the per-dimension mean of those optima (in the normalized, log-scaled
//! space) becomes `h0`. Stage 2 repeatedly optimizes on random segments mixed
//! from every stream, starting from the best point so far.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::optimize::{optimize, EiConfig, SearchBox};
use crate::error::{Error, Result};
use crate::model::{LabeledBatch, StudentModel};
use crate::stream::{FeatureStream, StreamRecord};
use crate::trainer::{retrain, retrain_split, EpochCost, TrainBudget, TrainerConfig};
use crate::types::{HyperParams, RngSeed};

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub ei: EiConfig,
    pub search: SearchBox,
    /// Leading stretch of each stream used by stage 1.
    pub window_s: f64,
    /// Length of each random segment drawn in stage 2.
    pub segment_s: f64,
    pub max_rounds: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig {
            ei: EiConfig::default(),
            search: SearchBox::default(),
            window_s: 100.0,
            segment_s: 30.0,
            max_rounds: 3,
        }
    }
}

impl ProfileConfig {
    pub fn validate(&self) -> Result<()> {
        self.ei.validate()?;
        self.search.validate()?;
        if !(self.window_s > 0.0) || !(self.segment_s > 0.0) || self.max_rounds == 0 {
            return Err(Error::Config("profile window, segment and rounds must be positive".into()));
        }
        Ok(())
    }
}

/// One objective evaluation. `stage` is 1 for per-stream searches (with
/// `group` the stream index) and 2 for mixed rounds (with `group` the round).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTrial {
    pub stage: u8,
    pub group: usize,
    pub h: HyperParams,
    pub value: f64,
    pub imputed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileResult {
    pub h: HyperParams,
    pub value: f64,
    pub h0: HyperParams,
    pub stage1: Vec<(HyperParams, f64)>,
    pub history: Vec<ProfileTrial>,
}

/// The generic procedure behind [`offline_profile`]. `stream_objective(s, h)`
/// scores `h` on stream `s`; `mixed_objective(round, h)` scores it on that
/// round's mixed segments.
pub fn profile_two_stage<F, G>(
    n_streams: usize,
    stream_objective: F,
    mixed_objective: G,
    cfg: &ProfileConfig,
    seed: RngSeed,
) -> Result<ProfileResult>
where
    F: Fn(usize, &HyperParams) -> f64 + Sync,
    G: Fn(usize, &HyperParams) -> f64,
{
    cfg.validate()?;
    if n_streams < 2 {
        return Err(Error::validation("offline profiling needs at least two streams"));
    }
    let box_ = &cfg.search;
    let stage1: Vec<_> = (0..n_streams)
        .into_par_iter()
        .map(|s| {
            optimize(
                |h| stream_objective(s, h),
                box_,
                &cfg.ei,
                seed.child_indexed("stage1", s as u64),
                &[],
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut history = Vec::new();
    let mut centre = [0.0f64; 3];
    for (s, (h, _, obs)) in stage1.iter().enumerate() {
        for (c, u) in centre.iter_mut().zip(box_.to_unit(h)) {
            *c += u / n_streams as f64;
        }
        history.extend(obs.iter().map(|o| ProfileTrial {
            stage: 1,
            group: s,
            h: box_.from_unit(&o.point),
            value: o.value,
            imputed: o.imputed,
        }));
    }
    let h0 = box_.from_unit(&centre);

    let mut best: Option<(HyperParams, f64)> = None;
    let mut start = h0;
    for round in 0..cfg.max_rounds {
        let (h, value, obs) = optimize(
            |h| mixed_objective(round, h),
            box_,
            &cfg.ei,
            seed.child_indexed("stage2", round as u64),
            &[start],
        )?;
        history.extend(obs.iter().map(|o| ProfileTrial {
            stage: 2,
            group: round,
            h: box_.from_unit(&o.point),
            value: o.value,
            imputed: o.imputed,
        }));
        let gain = best.map_or(f64::INFINITY, |(_, b)| value - b);
        if best.is_none_or(|(_, b)| value > b) {
            best = Some((h, value));
        }
        start = best.expect("set above").0;
        if gain < cfg.ei.improvement_threshold {
            break;
        }
    }
    let (h, value) = best.expect("max_rounds >= 1");
    Ok(ProfileResult {
        h,
        value,
        h0,
        stage1: stage1.into_iter().map(|(h, v, _)| (h, v)).collect(),
        history,
    })
}

/// How candidate hyperparameters are scored: an early-stopped retrain of
/// `initial` whose best validation accuracy is the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSetup {
    pub initial: StudentModel,
    pub budget: TrainBudget,
    pub cost: EpochCost,
    pub trainer: TrainerConfig,
}

fn batch(records: &[StreamRecord]) -> Result<LabeledBatch> {
    LabeledBatch::from_rows(records.iter().map(|r| (r.features.as_slice(), r.label)))
}

/// Offline profiling over training streams (none of which should be reused
/// for evaluation).
pub fn offline_profile(
    streams: &[FeatureStream],
    setup: &TrainingSetup,
    cfg: &ProfileConfig,
    seed: RngSeed,
) -> Result<ProfileResult> {
    cfg.validate()?;
    if streams.len() < 2 {
        return Err(Error::validation("offline profiling needs at least two streams"));
    }
    let mut windows = Vec::with_capacity(streams.len());
    for (i, s) in streams.iter().enumerate() {
        if s.meta.classes != setup.initial.classes() || s.meta.features != setup.initial.features() {
            return Err(Error::Dimension {
                what: "profiling stream",
                expected: setup.initial.features(),
                got: s.meta.features,
            });
        }
        if s.duration_s() < cfg.window_s {
            return Err(Error::validation(format!(
                "stream {i} lasts {:.1} s, shorter than the {:.1} s profiling window",
                s.duration_s(),
                cfg.window_s
            )));
        }
        windows.push(batch(s.between(0.0, cfg.window_s))?);
    }

    let score = |outcome: crate::trainer::TrainOutcome| outcome.best_eval.map_or(f64::NAN, |e| e.accuracy);
    let stream_objective = |s: usize, h: &HyperParams| {
        score(retrain(
            &setup.initial,
            &windows[s],
            h,
            &setup.budget,
            &setup.cost,
            &setup.trainer,
            seed.child_indexed("stage1-train", s as u64),
        ))
    };

    // Every round draws one segment per stream; each segment contributes its
    // leading share to training and its tail to validation.
    let mut mixed = Vec::with_capacity(cfg.max_rounds);
    for round in 0..cfg.max_rounds {
        let mut rng = seed.child_indexed("segments", round as u64).rng();
        let (mut train, mut valid) = (Vec::new(), Vec::new());
        for s in streams {
            let span = (s.duration_s() - cfg.segment_s).max(0.0);
            let start = rng.random::<f64>() * span;
            let seg = s.between(start, start + cfg.segment_s);
            let cut = seg.len() - ((seg.len() as f64 * setup.trainer.validation_fraction).round() as usize).min(seg.len());
            train.extend_from_slice(&seg[..cut]);
            valid.extend_from_slice(&seg[cut..]);
        }
        mixed.push((batch(&train)?, batch(&valid)?));
    }
    let mixed_objective = |round: usize, h: &HyperParams| {
        let (train, valid) = &mixed[round];
        score(retrain_split(
            &setup.initial,
            train,
            valid,
            h,
            &setup.budget,
            &setup.cost,
            &setup.trainer,
            seed.child_indexed("stage2-train", round as u64),
        ))
    };

    profile_two_stage(streams.len(), stream_objective, mixed_objective, cfg, seed)
}

const PROFILE_HEADER: &str = "EDGESYNC-PROFILE v1";

/// Plain-text profile record:
///
/// ```text
/// EDGESYNC-PROFILE v1
/// learning_rate=<f64>
/// momentum=<f64>
/// weight_decay=<f64>
/// value=<f64>
/// h0=<lr>,<momentum>,<wd>
/// history=stage,group,learning_rate,momentum,weight_decay,value,imputed
/// <one trial per line>
/// ```
pub fn write_profile<W: Write>(res: &ProfileResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{PROFILE_HEADER}")?;
    writeln!(out, "learning_rate={}", res.h.learning_rate)?;
    writeln!(out, "momentum={}", res.h.momentum)?;
    writeln!(out, "weight_decay={}", res.h.weight_decay)?;
    writeln!(out, "value={}", res.value)?;
    writeln!(out, "h0={},{},{}", res.h0.learning_rate, res.h0.momentum, res.h0.weight_decay)?;
    writeln!(out, "history=stage,group,learning_rate,momentum,weight_decay,value,imputed")?;
    for t in &res.history {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.stage, t.group, t.h.learning_rate, t.h.momentum, t.h.weight_decay, t.value, t.imputed as u8
        )?;
    }
    Ok(())
}

/// Reads back the hyperparameter triple of a profile file. The history is
/// informational and only checked for shape.
pub fn read_profile<R: BufRead>(input: R, origin: &Path) -> Result<HyperParams> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim_end() == PROFILE_HEADER => {}
        Some((_, Err(e))) => return Err(e.into()),
        _ => return Err(perr(1, format!("expected header `{PROFILE_HEADER}`"))),
    }
    let (mut lr, mut mom, mut wd) = (None, None, None);
    let mut in_history = false;
    for (i, line) in lines {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if in_history {
            if line.split(',').count() != 7 {
                return Err(perr(n, "history rows need 7 fields".into()));
            }
            continue;
        }
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| perr(n, format!("expected key=value, got `{line}`")))?;
        let num = || val.trim().parse::<f64>().map_err(|e| perr(n, format!("{key}: {e}")));
        match key.trim() {
            "learning_rate" => lr = Some(num()?),
            "momentum" => mom = Some(num()?),
            "weight_decay" => wd = Some(num()?),
            "value" | "h0" => {}
            "history" => in_history = true,
            other => return Err(perr(n, format!("unknown key `{other}`"))),
        }
    }
    match (lr, mom, wd) {
        (Some(a), Some(b), Some(c)) => {
            HyperParams::new(a, b, c).map_err(|e| perr(0, format!("invalid hyperparameters: {e}")))
        }
        _ => Err(perr(0, "missing learning_rate, momentum or weight_decay".into())),
    }
}
