//! The fixed benchmark catalog. A seeded [`World`] fixes the canonical class
//! geometry (what the source model is trained on) and a deployment-domain
//! offset shared by every video; each video then adds its own scene offset and
//! a drift pattern drawn from the catalog.

use rand::Rng;
use rand_distr::StandardNormal;

use super::schedule::{generate, DriftSchedule, Phase, PhaseParams, Transition};
use super::{FeatureStream, StreamMeta, StreamRecord};
use crate::error::{Error, Result};
use crate::model::{LabeledBatch, StudentModel};
use crate::trainer::{train_fixed, EpochCost, TrainerConfig};
use crate::types::{HyperParams, RngSeed, DEFAULT_CLASSES, DEFAULT_FEATURES};

/// Catalog names, in generation order. Stable across versions.
pub const CATALOG: [&str; 5] = ["slow-drift", "fast-drift", "abrupt-shift", "class-imbalance-shift", "stationary"];

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub classes: usize,
    pub features: usize,
    pub rate_hz: f64,
    /// Mean length of one catalog video, seconds.
    pub video_s: f64,
    /// Video lengths are drawn uniformly from `video_s * (1 ± video_length_jitter)`.
    pub video_length_jitter: f64,
    /// Expected distance between two canonical class means.
    pub class_separation: f64,
    pub sigma: f64,
    /// Per-class offset shared by every deployment video.
    pub domain_offset: f64,
    /// Per-class offset specific to one video.
    pub scene_offset: f64,
    /// Global shift specific to one video.
    pub scene_shift: f64,
    /// Multiplies every drift magnitude below.
    pub drift_scale: f64,
    pub slow_step: f64,
    pub fast_step: f64,
    pub abrupt_offset: f64,
    /// Probability mass moved onto two dominant classes by the imbalance shift.
    pub imbalance_mass: f64,
    pub library_videos: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            classes: DEFAULT_CLASSES,
            features: DEFAULT_FEATURES,
            rate_hz: 2.0,
            video_s: 1200.0,
            video_length_jitter: 0.0,
            class_separation: 4.0,
            sigma: 1.0,
            domain_offset: 1.5,
            scene_offset: 1.0,
            scene_shift: 1.0,
            drift_scale: 1.0,
            slow_step: 3.0,
            fast_step: 4.0,
            abrupt_offset: 6.0,
            imbalance_mass: 0.6,
            library_videos: 21,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.features == 0 {
            return Err(Error::Config("world needs >= 2 classes and >= 1 feature".into()));
        }
        if !(self.rate_hz > 0.0) || !(self.video_s > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::Config("rate_hz, video_s and sigma must be positive".into()));
        }
        let mags = [
            self.class_separation,
            self.domain_offset,
            self.scene_offset,
            self.scene_shift,
            self.drift_scale,
            self.slow_step,
            self.fast_step,
            self.abrupt_offset,
        ];
        if mags.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Config("world magnitudes must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.video_length_jitter) {
            return Err(Error::Config("video_length_jitter must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.imbalance_mass) {
            return Err(Error::Config("imbalance_mass must lie in [0, 1)".into()));
        }
        if self.library_videos == 0 {
            return Err(Error::Config("library_videos must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub cfg: WorldConfig,
    seed: RngSeed,
    canonical: Vec<Vec<f64>>,
    domain: Vec<Vec<f64>>,
}

/// Random vector with expected norm `scale`.
fn gaussian_vec<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let s = scale / (dim as f64).sqrt();
    (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

impl World {
    pub fn new(cfg: WorldConfig, seed: RngSeed) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed.child("world").rng();
        // Pairwise distance of two independent draws is sqrt(2) times their norm.
        let radius = cfg.class_separation / std::f64::consts::SQRT_2;
        let canonical = (0..cfg.classes).map(|_| gaussian_vec(cfg.features, radius, &mut rng)).collect();
        let domain = (0..cfg.classes)
            .map(|_| gaussian_vec(cfg.features, cfg.domain_offset, &mut rng))
            .collect();
        Ok(World {
            cfg,
            seed,
            canonical,
            domain,
        })
    }

    pub fn meta(&self) -> StreamMeta {
        StreamMeta {
            classes: self.cfg.classes,
            features: self.cfg.features,
            rate_hz: self.cfg.rate_hz,
        }
    }

    fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.cfg.classes as f64; self.cfg.classes]
    }

    /// The source distribution the pretrained model sees.
    pub fn source_params(&self) -> PhaseParams {
        PhaseParams {
            means: self.canonical.clone(),
            sigma: self.cfg.sigma,
            priors: self.uniform(),
            shift: vec![0.0; self.cfg.features],
        }
    }

    /// Labeled draws from the source distribution.
    pub fn source_batch(&self, n: usize, seed: RngSeed) -> Result<LabeledBatch> {
        let params = self.source_params();
        let mut rng = seed.rng();
        let mut feats = Vec::with_capacity(n * self.cfg.features);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let (y, x) = params.sample(&mut rng);
            feats.extend(x);
            labels.push(y);
        }
        LabeledBatch::new(self.cfg.features, feats, labels)
    }

    /// The student every edge starts from: a softmax head fitted to the
    /// source distribution only.
    pub fn pretrained_model(&self) -> Result<StudentModel> {
        let data = self.source_batch(3000, self.seed.child("pretrain-data"))?;
        let model = StudentModel::zeros(self.cfg.classes, self.cfg.features);
        let h = HyperParams::new(0.05, 0.9, 1e-4)?;
        let out = train_fixed(
            &model,
            &data,
            &h,
            40,
            None,
            &EpochCost::default(),
            &TrainerConfig::default(),
            self.seed.child("pretrain-train"),
        );
        Ok(out.final_model)
    }

    /// Drift schedule of library video `index`, whose pattern is `kind`.
    pub fn video_schedule(&self, kind: &str, index: usize) -> Result<DriftSchedule> {
        let c = &self.cfg;
        let d = c.features;
        let mut rng = self.seed.child_indexed("video-schedule", index as u64).rng();
        let stretch = 1.0 + c.video_length_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let scene: Vec<Vec<f64>> = (0..c.classes).map(|_| gaussian_vec(d, c.scene_offset, &mut rng)).collect();
        let shift = gaussian_vec(d, c.scene_shift, &mut rng);
        let base: Vec<Vec<f64>> = (0..c.classes)
            .map(|k| add(&add(&self.canonical[k], &self.domain[k]), &scene[k]))
            .collect();
        let params = |means: Vec<Vec<f64>>, priors: Vec<f64>, shift: Vec<f64>| PhaseParams {
            means,
            sigma: c.sigma,
            priors,
            shift,
        };
        let jitter = |means: &[Vec<f64>], mag: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            means.iter().map(|m| add(m, &gaussian_vec(d, mag, rng))).collect()
        };
        let s = c.drift_scale;
        let t = c.video_s * stretch;
        let phases = match kind {
            "stationary" => vec![Phase {
                duration_s: t,
                params: params(base, self.uniform(), shift),
                transition: Transition::Abrupt,
            }],
            "slow-drift" => {
                // Cumulative random walk, blended over each whole phase.
                let n = 4;
                let mut means = base.clone();
                let mut out = vec![Phase {
                    duration_s: t / (n as f64 + 1.0),
                    params: params(base, self.uniform(), shift.clone()),
                    transition: Transition::Abrupt,
                }];
                for _ in 0..n {
                    means = jitter(&means, c.slow_step * s, &mut rng);
                    out.push(Phase {
                        duration_s: t / (n as f64 + 1.0),
                        params: params(means.clone(), self.uniform(), shift.clone()),
                        transition: Transition::Blend {
                            seconds: t / (n as f64 + 1.0),
                        },
                    });
                }
                out
            }
            "fast-drift" => {
                // Short excursions around the scene's base geometry.
                let n = 12;
                let len = t / n as f64;
                let mut out = vec![Phase {
                    duration_s: len,
                    params: params(base.clone(), self.uniform(), shift.clone()),
                    transition: Transition::Abrupt,
                }];
                for _ in 1..n {
                    let g = add(&shift, &gaussian_vec(d, 0.5 * c.fast_step * s, &mut rng));
                    out.push(Phase {
                        duration_s: len,
                        params: params(jitter(&base, c.fast_step * s, &mut rng), self.uniform(), g),
                        transition: Transition::Blend { seconds: len / 2.0 },
                    });
                }
                out
            }
            "abrupt-shift" => {
                let moved = jitter(&base, c.abrupt_offset * s, &mut rng);
                let g = add(&shift, &gaussian_vec(d, c.abrupt_offset * s, &mut rng));
                vec![
                    Phase {
                        duration_s: t / 2.0,
                        params: params(base, self.uniform(), shift),
                        transition: Transition::Abrupt,
                    },
                    Phase {
                        duration_s: t / 2.0,
                        params: params(moved, self.uniform(), g),
                        transition: Transition::Abrupt,
                    },
                ]
            }
            "class-imbalance-shift" => {
                let k = c.classes;
                let a = rng.random_range(0..k);
                let b = (a + 1 + rng.random_range(0..k - 1)) % k;
                let mut skew = vec![(1.0 - c.imbalance_mass) / k as f64; k];
                skew[a] += c.imbalance_mass / 2.0;
                skew[b] += c.imbalance_mass / 2.0;
                let drifted = jitter(&base, c.slow_step * s, &mut rng);
                vec![
                    Phase {
                        duration_s: t / 3.0,
                        params: params(base, self.uniform(), shift.clone()),
                        transition: Transition::Abrupt,
                    },
                    Phase {
                        duration_s: 2.0 * t / 3.0,
                        params: params(drifted, skew, shift),
                        transition: Transition::Blend { seconds: t / 3.0 },
                    },
                ]
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown schedule `{other}` (expected one of {})",
                    CATALOG.join(", ")
                )))
            }
        };
        Ok(DriftSchedule {
            name: format!("{kind}#{index}"),
            classes: c.classes,
            features: d,
            rate_hz: c.rate_hz,
            phases,
        })
    }

    pub fn video(&self, kind: &str, index: usize) -> Result<FeatureStream> {
        let schedule = self.video_schedule(kind, index)?;
        generate(&schedule, self.seed.child_indexed("video-samples", index as u64))
    }
}

/// One stream per catalog entry, in [`CATALOG`] order.
pub fn standard_benchmark_suite(cfg: &WorldConfig, seed: RngSeed) -> Result<Vec<FeatureStream>> {
    let world = World::new(cfg.clone(), seed)?;
    CATALOG.iter().enumerate().map(|(i, k)| world.video(k, i)).collect()
}

/// `cfg.library_videos` distinct videos cycling through the catalog.
pub fn benchmark_library(world: &World) -> Result<Vec<FeatureStream>> {
    (0..world.cfg.library_videos)
        .map(|v| world.video(CATALOG[v % CATALOG.len()], v))
        .collect()
}

/// Concatenates `videos` and cuts the result into `cameras` equal,
/// contiguous streams, so every camera count covers the same frames.
/// Timestamps restart at `1 / rate` on each camera.
pub fn split_across_cameras(videos: &[FeatureStream], cameras: usize) -> Result<Vec<FeatureStream>> {
    if cameras == 0 {
        return Err(Error::Config("camera count must be positive".into()));
    }
    let meta = videos
        .first()
        .ok_or_else(|| Error::validation("no videos to split"))?
        .meta;
    if videos.iter().any(|v| v.meta != meta) {
        return Err(Error::validation("videos disagree on C, D or rate"));
    }
    let all: Vec<&StreamRecord> = videos.iter().flat_map(|v| &v.records).collect();
    let per = all.len() / cameras;
    if per == 0 {
        return Err(Error::validation("fewer frames than cameras"));
    }
    Ok((0..cameras)
        .map(|c| FeatureStream {
            meta,
            name: format!("camera-{c}"),
            records: all[c * per..(c + 1) * per]
                .iter()
                .enumerate()
                .map(|(j, r)| StreamRecord {
                    time: (j + 1) as f64 / meta.rate_hz,
                    label: r.label,
                    features: r.features.clone(),
                })
                .collect(),
        })
        .collect())
}
