//! Cloud-side retraining sessions: patience-based early stopping under a
//! simulated training-time budget, returning the best epoch's snapshot.

use crate::error::{Error, Result};
use crate::model::{Evaluation, LabeledBatch, StudentModel};
use crate::types::{HyperParams, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainBudget {
    /// Epochs without improvement tolerated before stopping.
    pub patience: usize,
    /// Simulated seconds; checked between epochs.
    pub max_time_s: f64,
    pub max_epochs: usize,
}

impl Default for TrainBudget {
    fn default() -> Self {
        TrainBudget {
            patience: 5,
            max_time_s: 15.0,
            max_epochs: 50,
        }
    }
}

impl TrainBudget {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("patience and max_epochs must be at least 1".into()));
        }
        if !(self.max_time_s > 0.0) {
            return Err(Error::Config("max_train_time_s must be positive".into()));
        }
        Ok(())
    }
}

/// Simulated cost of one epoch: `base_s + per_sample_s * n_train`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochCost {
    pub base_s: f64,
    pub per_sample_s: f64,
}

impl EpochCost {
    pub fn epoch_seconds(&self, train_samples: usize) -> f64 {
        self.base_s + self.per_sample_s * train_samples as f64
    }
}

impl Default for EpochCost {
    fn default() -> Self {
        EpochCost {
            base_s: 0.5,
            per_sample_s: 0.0035,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig {
    pub minibatch: usize,
    /// Trailing share of the window (by arrival order) held out for validation.
    pub validation_fraction: f64,
    /// Windows smaller than this are not trained on.
    pub min_window: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            minibatch: 32,
            validation_fraction: 0.2,
            min_window: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    TimeBudget,
    EpochCap,
    Diverged,
    /// Window too small; nothing was trained.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub final_model: StudentModel,
    pub epochs_run: usize,
    /// 1-based epoch whose snapshot was returned (0 if none).
    pub best_epoch: usize,
    pub best_eval: Option<Evaluation>,
    pub stop_reason: StopReason,
    pub train_duration_s: f64,
}

/// Validation accuracy decides, lower loss breaks ties.
pub fn improves(candidate: &Evaluation, best: Option<&Evaluation>) -> bool {
    match best {
        None => true,
        Some(b) => candidate.accuracy > b.accuracy || (candidate.accuracy == b.accuracy && candidate.loss < b.loss),
    }
}

/// One training session as seen by the stopping logic.
pub trait Session {
    /// Runs epoch `epoch` (1-based) and returns the validation evaluation.
    fn run_epoch(&mut self, epoch: usize) -> Result<Evaluation>;
    /// Called whenever `epoch` becomes the best so far.
    fn keep_best(&mut self, epoch: usize);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_eval: Option<Evaluation>,
    pub stop_reason: StopReason,
    pub duration_s: f64,
}

/// Drives `session` until `patience` epochs pass without improvement, the
/// accumulated cost exceeds `max_time_s`, or `max_epochs` is reached.
pub fn drive_session<S: Session>(session: &mut S, budget: &TrainBudget, epoch_cost_s: f64) -> Result<SessionLog> {
    let mut log = SessionLog {
        epochs_run: 0,
        best_epoch: 0,
        best_eval: None,
        stop_reason: StopReason::EpochCap,
        duration_s: 0.0,
    };
    loop {
        let epoch = log.epochs_run + 1;
        let eval = session.run_epoch(epoch)?;
        log.epochs_run = epoch;
        log.duration_s += epoch_cost_s;
        if improves(&eval, log.best_eval.as_ref()) {
            log.best_eval = Some(eval);
            log.best_epoch = epoch;
            session.keep_best(epoch);
        }
        if epoch - log.best_epoch >= budget.patience {
            log.stop_reason = StopReason::Patience;
            return Ok(log);
        }
        if log.duration_s > budget.max_time_s {
            log.stop_reason = StopReason::TimeBudget;
            return Ok(log);
        }
        if epoch >= budget.max_epochs {
            log.stop_reason = StopReason::EpochCap;
            return Ok(log);
        }
    }
}

struct ModelSession<'a> {
    model: StudentModel,
    best: Option<StudentModel>,
    train: &'a LabeledBatch,
    valid: &'a LabeledBatch,
    h: &'a HyperParams,
    minibatch: usize,
    rng: rand_chacha::ChaCha8Rng,
}

impl Session for ModelSession<'_> {
    fn run_epoch(&mut self, _epoch: usize) -> Result<Evaluation> {
        self.model.train_epoch(self.train, self.h, self.minibatch, &mut self.rng)?;
        self.model.evaluate(self.valid)
    }

    fn keep_best(&mut self, _epoch: usize) {
        self.best = Some(self.model.clone());
    }
}

fn skipped(model: &StudentModel) -> TrainOutcome {
    TrainOutcome {
        final_model: model.clone(),
        epochs_run: 0,
        best_epoch: 0,
        best_eval: None,
        stop_reason: StopReason::Skipped,
        train_duration_s: 0.0,
    }
}

fn diverged(model: &StudentModel, epoch: usize, duration: f64) -> TrainOutcome {
    log::warn!("retraining diverged at epoch {epoch}; keeping the previous model");
    TrainOutcome {
        final_model: model.clone(),
        epochs_run: epoch,
        best_epoch: 0,
        best_eval: None,
        stop_reason: StopReason::Diverged,
        train_duration_s: duration,
    }
}

/// Early-stopped retraining on a time-ordered window: the leading share
/// trains, the trailing `validation_fraction` validates, and the best
/// epoch's model comes back.
pub fn retrain(
    model: &StudentModel,
    window: &LabeledBatch,
    h: &HyperParams,
    budget: &TrainBudget,
    cost: &EpochCost,
    cfg: &TrainerConfig,
    seed: RngSeed,
) -> TrainOutcome {
    if window.len() < cfg.min_window.max(2) {
        return skipped(model);
    }
    let Some((train, valid)) = time_split(window, cfg) else {
        return skipped(model);
    };
    retrain_split(model, &train, &valid, h, budget, cost, cfg, seed)
}

/// [`retrain`] with an explicit train/validation split.
#[allow(clippy::too_many_arguments)]
pub fn retrain_split(
    model: &StudentModel,
    train: &LabeledBatch,
    valid: &LabeledBatch,
    h: &HyperParams,
    budget: &TrainBudget,
    cost: &EpochCost,
    cfg: &TrainerConfig,
    seed: RngSeed,
) -> TrainOutcome {
    if train.is_empty() || valid.is_empty() {
        return skipped(model);
    }
    let mut start = model.clone();
    start.reset_optimizer();
    let mut session = ModelSession {
        model: start,
        best: None,
        train,
        valid,
        h,
        minibatch: cfg.minibatch,
        rng: seed.rng(),
    };
    let epoch_cost = cost.epoch_seconds(train.len());
    match drive_session(&mut session, budget, epoch_cost) {
        Ok(log) => TrainOutcome {
            final_model: session.best.unwrap_or(session.model),
            epochs_run: log.epochs_run,
            best_epoch: log.best_epoch,
            best_eval: log.best_eval,
            stop_reason: log.stop_reason,
            train_duration_s: log.duration_s,
        },
        Err(Error::Diverged { epoch }) => diverged(model, epoch, epoch as f64 * epoch_cost),
        Err(e) => {
            log::warn!("retraining failed: {e}");
            skipped(model)
        }
    }
}

/// Splits a time-ordered window into its leading training share and trailing
/// validation share. `None` when either side would be empty.
pub fn time_split(window: &LabeledBatch, cfg: &TrainerConfig) -> Option<(LabeledBatch, LabeledBatch)> {
    if window.len() < 2 {
        return None;
    }
    let n_valid = ((window.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, window.len() - 1);
    match window.split_at(window.len() - n_valid) {
        (Some(t), Some(v)) => Some((t, v)),
        _ => None,
    }
}

/// Fixed-epoch training without a stopping rule: same train/validation split
/// as [`retrain`], but every epoch runs and the last model is returned. When
/// `max_time_s` is given, an epoch only starts if it fits.
#[allow(clippy::too_many_arguments)]
pub fn train_fixed(
    model: &StudentModel,
    window: &LabeledBatch,
    h: &HyperParams,
    epochs: usize,
    max_time_s: Option<f64>,
    cost: &EpochCost,
    cfg: &TrainerConfig,
    seed: RngSeed,
) -> TrainOutcome {
    if window.len() < cfg.min_window.max(2) {
        return skipped(model);
    }
    let Some((train, valid)) = time_split(window, cfg) else {
        return skipped(model);
    };
    let epoch_cost = cost.epoch_seconds(train.len());
    let mut m = model.clone();
    m.reset_optimizer();
    let mut rng = seed.rng();
    let mut duration = 0.0;
    let mut run = 0;
    let mut reason = StopReason::EpochCap;
    while run < epochs {
        if max_time_s.is_some_and(|limit| duration + epoch_cost > limit) {
            reason = StopReason::TimeBudget;
            break;
        }
        if m.train_epoch(&train, h, cfg.minibatch, &mut rng).is_err() {
            return diverged(model, run + 1, duration + epoch_cost);
        }
        duration += epoch_cost;
        run += 1;
    }
    if run == 0 {
        let mut out = skipped(model);
        out.stop_reason = reason;
        return out;
    }
    let eval = m.evaluate(&valid).ok();
    TrainOutcome {
        final_model: m,
        epochs_run: run,
        best_epoch: run,
        best_eval: eval,
        stop_reason: reason,
        train_duration_s: duration,
    }
}
