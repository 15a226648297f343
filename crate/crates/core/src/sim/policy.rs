//! Named policy presets. Every preset is a combination of a few switches, so
//! ablations and baselines share one simulation kernel.

use crate::error::{Error, Result};

pub const POLICY_NAMES: [&str; 9] = [
    "no_adapt",
    "one_time",
    "ams_like",
    "ekya_like",
    "edgesync",
    "edgesync_f",
    "edgesync_tf",
    "edgesync_stf",
    "edgesync_star",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    /// Never updates.
    NoAdapt,
    /// Adapts every edge once on its first `window_s` seconds, then freezes.
    OneTime { window_s: f64 },
    /// Runs update cycles for the whole stream.
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Urgency,
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    EarlyStop,
    FixedEpochs(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub name: String,
    pub kind: PolicyKind,
    pub selection: Selection,
    /// Share `k` of each window uploaded; 1.0 disables filtering.
    pub upload_fraction: f64,
    pub stop: StopMode,
    /// Pads every cycle to this length and caps training at what remains.
    pub fixed_cycle_s: Option<f64>,
    /// Train only on buffered samples younger than this.
    pub train_horizon_s: Option<f64>,
    /// Simulated online-profiling time charged per cycle.
    pub profiling_s: f64,
    /// Random hyperparameter trials run during online profiling.
    pub profiling_trials: usize,
}

/// Knobs the presets draw from; part of the run configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySettings {
    pub ams_fixed_epochs: usize,
    /// Epoch count for the fixed-epoch ablations (`_tf`, `_stf`, `_star`).
    pub ablation_fixed_epochs: usize,
    pub one_time_window_s: f64,
    pub ekya_window_s: f64,
    pub ekya_profiling_s: f64,
    pub ekya_trials: usize,
    /// Cycle length for `edgesync_stf`; measured from an `edgesync` run when unset.
    pub stf_cycle_s: Option<f64>,
}

impl Default for PolicySettings {
    fn default() -> Self {
        PolicySettings {
            ams_fixed_epochs: 30,
            ablation_fixed_epochs: 15,
            one_time_window_s: 100.0,
            ekya_window_s: 200.0,
            ekya_profiling_s: 7.84,
            ekya_trials: 4,
            stf_cycle_s: None,
        }
    }
}

impl PolicySettings {
    pub fn validate(&self) -> Result<()> {
        if self.ams_fixed_epochs == 0 || self.ablation_fixed_epochs == 0 || self.ekya_trials == 0 {
            return Err(Error::Config("policy epoch and trial counts must be positive".into()));
        }
        if !(self.one_time_window_s > 0.0) || !(self.ekya_window_s > 0.0) || !(self.ekya_profiling_s >= 0.0) {
            return Err(Error::Config("policy windows must be positive, profiling time non-negative".into()));
        }
        if self.stf_cycle_s.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("stf_cycle_s must be positive".into()));
        }
        Ok(())
    }
}

impl PolicyConfig {
    fn cyclic(name: &str, selection: Selection, upload_fraction: f64, stop: StopMode) -> Self {
        PolicyConfig {
            name: name.to_string(),
            kind: PolicyKind::Cyclic,
            selection,
            upload_fraction,
            stop,
            fixed_cycle_s: None,
            train_horizon_s: None,
            profiling_s: 0.0,
            profiling_trials: 0,
        }
    }

    /// Builds a named preset. `upload_fraction` is the filter's `k` for the
    /// presets that filter.
    pub fn preset(name: &str, upload_fraction: f64, s: &PolicySettings) -> Result<Self> {
        use Selection::*;
        use StopMode::*;
        let ablation = FixedEpochs(s.ablation_fixed_epochs);
        Ok(match name {
            "no_adapt" => PolicyConfig {
                kind: PolicyKind::NoAdapt,
                ..Self::cyclic(name, RoundRobin, 1.0, EarlyStop)
            },
            "one_time" => PolicyConfig {
                kind: PolicyKind::OneTime {
                    window_s: s.one_time_window_s,
                },
                ..Self::cyclic(name, RoundRobin, 1.0, EarlyStop)
            },
            "ams_like" => Self::cyclic(name, RoundRobin, 1.0, FixedEpochs(s.ams_fixed_epochs)),
            "ekya_like" => PolicyConfig {
                train_horizon_s: Some(s.ekya_window_s),
                profiling_s: s.ekya_profiling_s,
                profiling_trials: s.ekya_trials,
                ..Self::cyclic(name, RoundRobin, 1.0, EarlyStop)
            },
            "edgesync" => Self::cyclic(name, Urgency, upload_fraction, EarlyStop),
            "edgesync_f" => Self::cyclic(name, Urgency, 1.0, EarlyStop),
            "edgesync_tf" => Self::cyclic(name, Urgency, 1.0, ablation),
            "edgesync_stf" => PolicyConfig {
                fixed_cycle_s: s.stf_cycle_s,
                ..Self::cyclic(name, RoundRobin, 1.0, ablation)
            },
            "edgesync_star" => Self::cyclic(name, Urgency, upload_fraction, ablation),
            other => {
                return Err(Error::Config(format!(
                    "unknown policy `{other}` (expected one of {})",
                    POLICY_NAMES.join(", ")
                )))
            }
        })
    }

    /// `edgesync_stf` needs a cycle length before it can run.
    pub fn needs_measured_cycle(&self) -> bool {
        self.name == "edgesync_stf" && self.fixed_cycle_s.is_none()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.upload_fraction > 0.0 && self.upload_fraction <= 1.0) {
            return Err(Error::Config(format!("{}: upload fraction must lie in (0, 1]", self.name)));
        }
        if self.fixed_cycle_s.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config(format!("{}: fixed cycle must be positive", self.name)));
        }
        if let StopMode::FixedEpochs(0) = self.stop {
            return Err(Error::Config(format!("{}: fixed epoch count must be positive", self.name)));
        }
        Ok(())
    }
}
