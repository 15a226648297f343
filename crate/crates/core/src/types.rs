//! Domain types shared by every module, and the seed-splitting scheme that
//! feeds all randomness in the crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type EdgeId = usize;
pub type ClassId = usize;

/// Default number of classes (people, bicycles, cars, motorcycles, buses, trucks).
pub const DEFAULT_CLASSES: usize = 6;
/// Default embedding width handed to the trainable head.
pub const DEFAULT_FEATURES: usize = 32;

/// One sampled frame as seen by an edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub edge_id: EdgeId,
    /// Arrival order on the owning edge.
    pub seq: u64,
    /// Simulated seconds.
    pub arrival_time: f64,
    pub features: Vec<f64>,
    pub true_label: ClassId,
    pub predicted_label: Option<ClassId>,
    pub probs: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(edge_id: EdgeId, seq: u64, arrival_time: f64, features: Vec<f64>, true_label: ClassId) -> Self {
        Sample {
            edge_id,
            seq,
            arrival_time,
            features,
            true_label,
            predicted_label: None,
            probs: None,
        }
    }

    /// Attaches an inference result; the predicted label is derived from `probs`.
    pub fn with_inference(mut self, probs: Vec<f64>) -> Self {
        self.predicted_label = Some(argmax(&probs));
        self.probs = Some(probs);
        self
    }

    /// Checks the probability-vector invariants for `classes` classes.
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.true_label >= classes {
            return Err(Error::validation(format!(
                "label {} out of range for {} classes",
                self.true_label, classes
            )));
        }
        if let Some(p) = &self.probs {
            if p.len() != classes {
                return Err(Error::Dimension {
                    what: "probs",
                    expected: classes,
                    got: p.len(),
                });
            }
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::validation("probability entry outside [0,1]"));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::validation(format!("probabilities sum to {sum}")));
            }
            if self.predicted_label != Some(argmax(p)) {
                return Err(Error::validation("predicted label is not argmax(probs)"));
            }
        }
        Ok(())
    }
}

/// SGD hyperparameters tuned by the offline profiler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl HyperParams {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        let h = HyperParams {
            learning_rate,
            momentum,
            weight_decay,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::validation("learning_rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::validation("weight_decay must be finite and non-negative"));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.003,
            momentum: 0.9,
            weight_decay: 1e-4,
        }
    }
}

/// Root of every random stream in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn child(self, tag: &str) -> RngSeed {
        split_seed(self, tag)
    }

    pub fn child_indexed(self, tag: &str, index: u64) -> RngSeed {
        RngSeed(splitmix64(split_seed(self, tag).0 ^ splitmix64(index.wrapping_add(0x5bd1_e995))))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed for a named stream: FNV-1a over the tag, mixed into
/// the parent with two SplitMix64 rounds.
///
/// Panics if `stream_tag` is empty.
pub fn split_seed(parent: RngSeed, stream_tag: &str) -> RngSeed {
    assert!(!stream_tag.is_empty(), "stream tag must be non-empty");
    RngSeed(splitmix64(parent.0 ^ splitmix64(fnv1a(stream_tag.as_bytes()))))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
