use rand::Rng;
use rand_distr::StandardNormal;

use super::{FeatureStream, StreamMeta, StreamRecord};
use crate::error::{Error, Result};
use crate::types::{argmax, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transition {
    Abrupt,
    /// Linear interpolation from the previous phase over this many seconds.
    Blend { seconds: f64 },
}

/// Class-conditional Gaussians `N(mean_c + shift, sigma^2 I)` with class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseParams {
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub priors: Vec<f64>,
    pub shift: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub duration_s: f64,
    pub params: PhaseParams,
    pub transition: Transition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSchedule {
    pub name: String,
    pub classes: usize,
    pub features: usize,
    pub rate_hz: f64,
    pub phases: Vec<Phase>,
}

impl PhaseParams {
    fn lerp(&self, other: &PhaseParams, w: f64) -> PhaseParams {
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect::<Vec<_>>();
        PhaseParams {
            means: self.means.iter().zip(&other.means).map(|(a, b)| mix(a, b)).collect(),
            sigma: (1.0 - w) * self.sigma + w * other.sigma,
            priors: mix(&self.priors, &other.priors),
            shift: mix(&self.shift, &other.shift),
        }
    }

    /// Log-posterior (up to a constant) of every class for `x`.
    fn log_posterior(&self, x: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        self.means
            .iter()
            .zip(&self.priors)
            .map(|(mu, &p)| {
                let d2: f64 = x.iter().zip(mu).zip(&self.shift).map(|((v, m), s)| (v - m - s).powi(2)).sum();
                if p > 0.0 {
                    p.ln() - d2 * inv
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = self.priors.len() - 1;
        for (c, &p) in self.priors.iter().enumerate() {
            acc += p;
            if u < acc {
                label = c;
                break;
            }
        }
        let x = self.means[label]
            .iter()
            .zip(&self.shift)
            .map(|(m, s)| m + s + self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        (label, x)
    }
}

impl DriftSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::validation("drift schedule has no phases"));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::validation("sampling rate must be positive"));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration_s > 0.0) {
                return Err(Error::validation(format!("phase {i} has non-positive duration")));
            }
            let pr = &p.params;
            if pr.priors.len() != self.classes || pr.means.len() != self.classes {
                return Err(Error::validation(format!("phase {i} does not cover {} classes", self.classes)));
            }
            if pr.means.iter().any(|m| m.len() != self.features) || pr.shift.len() != self.features {
                return Err(Error::validation(format!("phase {i} has wrong feature width")));
            }
            if pr.priors.iter().any(|&p| p < 0.0) || (pr.priors.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::validation(format!("phase {i} priors do not sum to 1")));
            }
            if !(pr.sigma >= 0.0) {
                return Err(Error::validation(format!("phase {i} has negative sigma")));
            }
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_s).sum()
    }

    /// Effective generative parameters at time `t`.
    pub fn params_at(&self, t: f64) -> PhaseParams {
        let mut start = 0.0;
        for (i, p) in self.phases.iter().enumerate() {
            let end = start + p.duration_s;
            if t < end || i + 1 == self.phases.len() {
                let tau = t - start;
                return match p.transition {
                    Transition::Blend { seconds } if i > 0 && tau < seconds => {
                        let prev = self.params_at(start - 1e-9);
                        prev.lerp(&p.params, (tau / seconds).clamp(0.0, 1.0))
                    }
                    _ => p.params.clone(),
                };
            }
            start = end;
        }
        unreachable!("schedule has at least one phase")
    }
}

/// Samples a stream at `rate_hz`; the first record arrives at `1 / rate_hz`.
pub fn generate(schedule: &DriftSchedule, seed: RngSeed) -> Result<FeatureStream> {
    schedule.validate()?;
    let mut rng = seed.rng();
    let n = (schedule.duration_s() * schedule.rate_hz).round() as usize;
    let mut records = Vec::with_capacity(n);
    for j in 0..n {
        let time = (j + 1) as f64 / schedule.rate_hz;
        let params = schedule.params_at(time);
        let (label, features) = params.sample(&mut rng);
        records.push(StreamRecord { time, label, features });
    }
    Ok(FeatureStream {
        meta: StreamMeta {
            classes: schedule.classes,
            features: schedule.features,
            rate_hz: schedule.rate_hz,
        },
        name: schedule.name.clone(),
        records,
    })
}

/// Monte-Carlo accuracy of the Bayes-optimal classifier for fixed phase parameters.
pub fn bayes_accuracy(params: &PhaseParams, draws: usize, seed: RngSeed) -> f64 {
    let mut rng = seed.rng();
    let mut correct = 0usize;
    for _ in 0..draws {
        let (y, x) = params.sample(&mut rng);
        if argmax(&params.log_posterior(&x)) == y {
            correct += 1;
        }
    }
    correct as f64 / draws.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(means: Vec<Vec<f64>>, sigma: f64) -> PhaseParams {
        let c = means.len();
        let d = means[0].len();
        PhaseParams {
            means,
            sigma,
            priors: vec![1.0 / c as f64; c],
            shift: vec![0.0; d],
        }
    }

    fn schedule(phases: Vec<Phase>) -> DriftSchedule {
        DriftSchedule {
            name: "test".into(),
            classes: phases[0].params.means.len(),
            features: phases[0].params.means[0].len(),
            rate_hz: 2.0,
            phases,
        }
    }

    #[test]
    fn zero_sigma_gives_identical_features_per_class() {
        let means = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]];
        let s = schedule(vec![Phase {
            duration_s: 50.0,
            params: params(means.clone(), 0.0),
            transition: Transition::Abrupt,
        }]);
        let stream = generate(&s, RngSeed(3)).unwrap();
        assert_eq!(stream.len(), 100);
        for r in &stream.records {
            assert_eq!(r.features, means[r.label]);
        }
        assert!(stream.records.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn same_seed_same_stream() {
        let s = schedule(vec![Phase {
            duration_s: 30.0,
            params: params(vec![vec![1.0], vec![-1.0]], 1.0),
            transition: Transition::Abrupt,
        }]);
        assert_eq!(generate(&s, RngSeed(8)).unwrap(), generate(&s, RngSeed(8)).unwrap());
        assert_ne!(generate(&s, RngSeed(8)).unwrap(), generate(&s, RngSeed(9)).unwrap());
    }

    #[test]
    fn blend_interpolates() {
        let a = params(vec![vec![0.0], vec![1.0]], 1.0);
        let b = params(vec![vec![10.0], vec![11.0]], 1.0);
        let s = schedule(vec![
            Phase {
                duration_s: 10.0,
                params: a,
                transition: Transition::Abrupt,
            },
            Phase {
                duration_s: 10.0,
                params: b,
                transition: Transition::Blend { seconds: 4.0 },
            },
        ]);
        assert!((s.params_at(12.0).means[0][0] - 5.0).abs() < 1e-9);
        assert_eq!(s.params_at(15.0).means[0][0], 10.0);
        assert_eq!(s.params_at(5.0).means[0][0], 0.0);
    }

    #[test]
    fn invalid_priors_rejected() {
        let mut p = params(vec![vec![0.0], vec![1.0]], 1.0);
        p.priors = vec![0.7, 0.7];
        let s = schedule(vec![Phase {
            duration_s: 1.0,
            params: p,
            transition: Transition::Abrupt,
        }]);
        assert!(generate(&s, RngSeed(1)).is_err());
    }
}
