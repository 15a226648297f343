//! Run configuration: one TOML file, every section optional, unknown keys
//! rejected. [`Config::validate`] checks every value before any work starts.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bho::{read_profile, EiConfig, GpConfig, ProfileConfig, SearchBox};
use crate::error::{Error, Result};
use crate::filter::{FilterConfig, TimelinessMode};
use crate::model::StudentModel;
use crate::sim::{CostModel, NetworkModel, PolicySettings, SimSettings, POLICY_NAMES};
use crate::stream::{benchmark_library, load_feature_file, split_across_cameras, FeatureStream, World, WorldConfig};
use crate::trainer::{EpochCost, TrainBudget, TrainerConfig};
use crate::types::{HyperParams, RngSeed};
use crate::urgency::UrgencyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSource {
    /// The synthetic catalog library, split across `cameras` edges.
    Library,
    /// Every `*.stream` file in `dir`, one per edge, in file-name order.
    Dir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamsSection {
    pub source: StreamSource,
    pub dir: Option<PathBuf>,
    pub cameras: usize,
    /// Seeds the synthetic world; the run seed is used when unset.
    pub world_seed: Option<u64>,
}

impl Default for StreamsSection {
    fn default() -> Self {
        StreamsSection {
            source: StreamSource::Library,
            dir: None,
            cameras: 7,
            world_seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Initial student checkpoint; the world's source-trained model when unset.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// A `profile-offline` result; overrides the triple above.
    pub profile: Option<PathBuf>,
}

impl Default for HyperSection {
    fn default() -> Self {
        let h = HyperParams::default();
        HyperSection {
            learning_rate: h.learning_rate,
            momentum: h.momentum,
            weight_decay: h.weight_decay,
            profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub upload_fraction: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `recency` or `literal`.
    pub timeliness_mode: String,
}

impl Default for FilterSection {
    fn default() -> Self {
        let f = FilterConfig::default();
        FilterSection {
            upload_fraction: f.upload_fraction,
            alpha: f.alpha,
            beta: f.beta,
            timeliness_mode: "recency".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UrgencySection {
    pub capacity: usize,
    pub segments: usize,
    pub decay: f64,
    pub weight_scale: f64,
}

impl Default for UrgencySection {
    fn default() -> Self {
        let u = UrgencyConfig::default();
        UrgencySection {
            capacity: u.capacity,
            segments: u.segments,
            decay: u.decay,
            weight_scale: u.weight_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub patience: usize,
    pub max_train_time_s: f64,
    pub max_epochs: usize,
    pub epoch_cost_base_s: f64,
    pub epoch_cost_per_sample_s: f64,
    pub minibatch: usize,
    pub validation_fraction: f64,
    pub min_window: usize,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let b = TrainBudget::default();
        let e = EpochCost::default();
        let t = TrainerConfig::default();
        TrainerSection {
            patience: b.patience,
            max_train_time_s: b.max_time_s,
            max_epochs: b.max_epochs,
            epoch_cost_base_s: e.base_s,
            epoch_cost_per_sample_s: e.per_sample_s,
            minibatch: t.minibatch,
            validation_fraction: t.validation_fraction,
            min_window: t.min_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostsSection {
    pub label_s_per_sample: f64,
    pub filter_s_per_sample: f64,
    pub idle_wait_s: f64,
}

impl Default for CostsSection {
    fn default() -> Self {
        let c = CostModel::default();
        CostsSection {
            label_s_per_sample: c.label_s_per_sample,
            filter_s_per_sample: c.filter_s_per_sample,
            idle_wait_s: c.idle_wait_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub policy: String,
    pub teacher_noise: f64,
    pub train_buffer_cap: usize,
    pub min_train_window: usize,
    /// Frames per second an edge can infer; 0 disables the cap.
    pub inference_cap_hz: f64,
    pub series_resolution_s: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let s = SimSettings::default();
        SimSection {
            policy: "edgesync".into(),
            teacher_noise: s.teacher_noise,
            train_buffer_cap: s.train_buffer_cap,
            min_train_window: s.min_train_window,
            inference_cap_hz: s.inference_cap_hz.unwrap_or(0.0),
            series_resolution_s: s.series_resolution_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfilingSection {
    pub xi: f64,
    pub candidate_count: usize,
    pub init_points: usize,
    pub max_iters: usize,
    pub improvement_threshold: f64,
    pub stall_window: usize,
    pub length_scale: f64,
    pub noise: f64,
    pub log10_lr: [f64; 2],
    pub momentum: [f64; 2],
    pub log10_wd: [f64; 2],
    pub window_s: f64,
    pub segment_s: f64,
    pub max_rounds: usize,
}

impl Default for ProfilingSection {
    fn default() -> Self {
        let p = ProfileConfig::default();
        ProfilingSection {
            xi: p.ei.xi,
            candidate_count: p.ei.candidate_count,
            init_points: p.ei.init_points,
            max_iters: p.ei.max_iters,
            improvement_threshold: p.ei.improvement_threshold,
            stall_window: p.ei.stall_window,
            length_scale: p.ei.gp.length_scales[0],
            noise: p.ei.gp.noise,
            log10_lr: p.search.log10_lr.into(),
            momentum: p.search.momentum.into(),
            log10_wd: p.search.log10_wd.into(),
            window_s: p.window_s,
            segment_s: p.segment_s,
            max_rounds: p.max_rounds,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub world: WorldConfig,
    pub streams: StreamsSection,
    pub model: ModelSection,
    pub hyperparams: HyperSection,
    pub filter: FilterSection,
    pub urgency: UrgencySection,
    pub trainer: TrainerSection,
    pub network: NetworkModel,
    pub costs: CostsSection,
    pub sim: SimSection,
    pub policies: PolicySettings,
    pub profiling: ProfilingSection,
}

impl Config {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                msg: e.message().to_string(),
            }
        })
    }

    /// Reads a file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.streams.dir);
        rebase(&mut cfg.model.checkpoint);
        rebase(&mut cfg.hyperparams.profile);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.streams.cameras == 0 {
            return Err(Error::Config("streams.cameras must be at least 1".into()));
        }
        if self.streams.source == StreamSource::Dir && self.streams.dir.is_none() {
            return Err(Error::Config("streams.source = \"dir\" needs streams.dir".into()));
        }
        if !POLICY_NAMES.contains(&self.sim.policy.as_str()) {
            return Err(Error::Config(format!(
                "unknown policy {:?}; expected one of {}",
                self.sim.policy,
                POLICY_NAMES.join(", ")
            )));
        }
        if !(self.sim.inference_cap_hz >= 0.0) {
            return Err(Error::Config("sim.inference_cap_hz must be >= 0".into()));
        }
        self.policies.validate()?;
        self.sim_settings()?.validate()?;
        self.profile_config().validate()?;
        Ok(())
    }

    pub fn hyperparams(&self) -> Result<HyperParams> {
        match &self.hyperparams.profile {
            Some(p) => read_profile(BufReader::new(File::open(p)?), p),
            None => {
                let h = &self.hyperparams;
                HyperParams::new(h.learning_rate, h.momentum, h.weight_decay).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }

    /// Everything the simulator needs, with the hyperparameters resolved.
    pub fn sim_settings(&self) -> Result<SimSettings> {
        let t = &self.trainer;
        let f = &self.filter;
        let u = &self.urgency;
        Ok(SimSettings {
            net: self.network,
            costs: CostModel {
                label_s_per_sample: self.costs.label_s_per_sample,
                filter_s_per_sample: self.costs.filter_s_per_sample,
                epoch: EpochCost {
                    base_s: t.epoch_cost_base_s,
                    per_sample_s: t.epoch_cost_per_sample_s,
                },
                idle_wait_s: self.costs.idle_wait_s,
            },
            budget: TrainBudget {
                patience: t.patience,
                max_time_s: t.max_train_time_s,
                max_epochs: t.max_epochs,
            },
            trainer: TrainerConfig {
                minibatch: t.minibatch,
                validation_fraction: t.validation_fraction,
                min_window: t.min_window,
            },
            filter: FilterConfig {
                upload_fraction: f.upload_fraction,
                alpha: f.alpha,
                beta: f.beta,
                timeliness_mode: f.timeliness_mode.parse::<TimelinessMode>()?,
            },
            urgency: UrgencyConfig {
                capacity: u.capacity,
                segments: u.segments,
                decay: u.decay,
                weight_scale: u.weight_scale,
            },
            h: self.hyperparams()?,
            teacher_noise: self.sim.teacher_noise,
            train_buffer_cap: self.sim.train_buffer_cap,
            min_train_window: self.sim.min_train_window,
            inference_cap_hz: (self.sim.inference_cap_hz > 0.0).then_some(self.sim.inference_cap_hz),
            series_resolution_s: self.sim.series_resolution_s,
            record_trace: false,
        })
    }

    pub fn profile_config(&self) -> ProfileConfig {
        let p = &self.profiling;
        ProfileConfig {
            ei: EiConfig {
                xi: p.xi,
                candidate_count: p.candidate_count,
                init_points: p.init_points,
                max_iters: p.max_iters,
                improvement_threshold: p.improvement_threshold,
                stall_window: p.stall_window,
                gp: GpConfig {
                    length_scales: vec![p.length_scale],
                    noise: p.noise,
                },
            },
            search: SearchBox {
                log10_lr: p.log10_lr.into(),
                momentum: p.momentum.into(),
                log10_wd: p.log10_wd.into(),
            },
            window_s: p.window_s,
            segment_s: p.segment_s,
            max_rounds: p.max_rounds,
        }
    }

    pub fn world(&self, run_seed: RngSeed) -> Result<World> {
        World::new(self.world.clone(), RngSeed(self.streams.world_seed.unwrap_or(run_seed.0)))
    }

    /// One stream per edge, plus the model every edge starts from.
    pub fn load_inputs(&self, run_seed: RngSeed) -> Result<(Vec<FeatureStream>, StudentModel)> {
        let world = self.world(run_seed)?;
        let streams = match self.streams.source {
            StreamSource::Library => split_across_cameras(&benchmark_library(&world)?, self.streams.cameras)?,
            StreamSource::Dir => {
                let dir = self.streams.dir.as_deref().expect("validated");
                load_stream_dir(dir)?
            }
        };
        let initial = match &self.model.checkpoint {
            Some(p) => StudentModel::read_checkpoint(BufReader::new(File::open(p)?), p)?,
            None => world.pretrained_model()?,
        };
        Ok((streams, initial))
    }
}

/// Loads every `*.stream` file in `dir`, sorted by file name.
pub fn load_stream_dir(dir: &Path) -> Result<Vec<FeatureStream>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "stream"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no .stream files in {}", dir.display())));
    }
    paths.iter().map(|p| load_feature_file(p)).collect()
}
