//! Edge-side sample filtering: every cached sample is scored by prediction
//! entropy (adaptability) plus a sigmoid of its age (timeliness), and the
//! top fraction is uploaded.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::entropy;
use crate::types::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimelinessMode {
    /// `1 / (1 + exp(i/T))`: newer samples score higher.
    #[default]
    RecencyDecay,
    /// `1 / (1 + exp(-i/T))`: older samples score higher.
    AsPrinted,
}

impl std::str::FromStr for TimelinessMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recency" | "recency_decay" => Ok(TimelinessMode::RecencyDecay),
            "literal" | "as_printed" => Ok(TimelinessMode::AsPrinted),
            other => Err(Error::Config(format!("unknown timeliness mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Fraction `k` of the window that gets uploaded, in `(0, 1]`.
    pub upload_fraction: f64,
    pub alpha: f64,
    pub beta: f64,
    pub timeliness_mode: TimelinessMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            upload_fraction: 0.7,
            alpha: 1.0,
            beta: 1.0,
            timeliness_mode: TimelinessMode::RecencyDecay,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.upload_fraction > 0.0 && self.upload_fraction <= 1.0) {
            return Err(Error::Config("upload_fraction must lie in (0, 1]".into()));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::Config("alpha and beta must be finite and non-negative".into()));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::Config("at least one of alpha, beta must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    pub adaptability: f64,
    pub timeliness: f64,
    pub combined: f64,
}

/// A sample chosen for upload, with its age index inside the window
/// (0 = newest) and its score.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub index: usize,
    pub score: QualityScore,
    pub sample: Sample,
}

pub fn timeliness_score(i: usize, window: usize, mode: TimelinessMode) -> Result<f64> {
    if window == 0 {
        return Err(Error::validation("window size must be positive"));
    }
    let r = i as f64 / window as f64;
    Ok(match mode {
        TimelinessMode::RecencyDecay => 1.0 / (1.0 + r.exp()),
        TimelinessMode::AsPrinted => 1.0 / (1.0 + (-r).exp()),
    })
}

pub fn score_sample(sample: &Sample, i: usize, cfg: &FilterConfig, window: usize) -> Result<QualityScore> {
    let probs = sample
        .probs
        .as_deref()
        .ok_or_else(|| Error::validation("sample has no inference result to score"))?;
    let adaptability = entropy(probs)?;
    let timeliness = timeliness_score(i, window, cfg.timeliness_mode)?;
    Ok(QualityScore {
        adaptability,
        timeliness,
        combined: cfg.alpha * adaptability + cfg.beta * timeliness,
    })
}

/// `ceil(k * n)` clamped to `[1, n]`, robust to round-off when `k * n` is
/// integral (0.7 * 10 must give 7, not 8).
pub fn upload_count(fraction: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let x = fraction * n as f64;
    let r = x.round();
    let count = if (x - r).abs() < 1e-9 { r } else { x.ceil() };
    (count as usize).clamp(1, n)
}

/// Orders by descending combined score, then by smaller age index.
fn rank(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Selects the top `ceil(k * T)` samples of `cache`, where `cache` is in
/// arrival order (oldest first) and `T = cache.len()`. The result is sorted
/// by descending score.
pub fn filter_window(cache: &[Sample], cfg: &FilterConfig) -> Result<Vec<Selected>> {
    let window = cache.len();
    if window == 0 {
        return Ok(Vec::new());
    }
    let mut scored = Vec::with_capacity(window);
    for (pos, sample) in cache.iter().enumerate() {
        let i = window - 1 - pos;
        let score = score_sample(sample, i, cfg, window)?;
        scored.push((score, i, pos));
    }
    let keep = upload_count(cfg.upload_fraction, window);
    if keep < window {
        scored.select_nth_unstable_by(keep - 1, |a, b| rank((a.0.combined, a.1), (b.0.combined, b.1)));
        scored.truncate(keep);
    }
    scored.sort_unstable_by(|a, b| rank((a.0.combined, a.1), (b.0.combined, b.1)));
    Ok(scored
        .into_iter()
        .map(|(score, index, pos)| Selected {
            index,
            score,
            sample: cache[pos].clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(probs: Vec<f64>) -> Sample {
        Sample::new(0, 0, 0.0, vec![0.0], 0).with_inference(probs)
    }

    #[test]
    fn timeliness_values() {
        for mode in [TimelinessMode::RecencyDecay, TimelinessMode::AsPrinted] {
            assert_eq!(timeliness_score(0, 17, mode).unwrap(), 0.5);
        }
        let rec = timeliness_score(10, 10, TimelinessMode::RecencyDecay).unwrap();
        let lit = timeliness_score(10, 10, TimelinessMode::AsPrinted).unwrap();
        assert!((rec - 0.268941).abs() < 1e-6);
        assert!((lit - 0.731059).abs() < 1e-6);
        assert!(timeliness_score(0, 0, TimelinessMode::RecencyDecay).is_err());
    }

    #[test]
    fn combined_score_cases() {
        let cfg = FilterConfig {
            alpha: 1.0,
            beta: 1.0,
            ..FilterConfig::default()
        };
        let q = score_sample(&sample(vec![1.0 / 6.0; 6]), 0, &cfg, 5).unwrap();
        assert!((q.combined - 2.291759).abs() < 1e-6);
        let mut onehot = vec![0.0; 6];
        onehot[2] = 1.0;
        let q = score_sample(&sample(onehot), 0, &cfg, 5).unwrap();
        assert_eq!(q.combined, 0.5);

        let only_time = FilterConfig { alpha: 0.0, ..cfg };
        let q = score_sample(&sample(vec![0.5, 0.5]), 3, &only_time, 5).unwrap();
        assert_eq!(q.combined, q.timeliness);

        let bare = Sample::new(0, 0, 0.0, vec![0.0], 0);
        assert!(score_sample(&bare, 0, &cfg, 5).is_err());
    }

    #[test]
    fn upload_count_is_exact_on_integral_products() {
        assert_eq!(upload_count(0.7, 10), 7);
        assert_eq!(upload_count(0.2, 5), 1);
        assert_eq!(upload_count(0.01, 5), 1);
        assert_eq!(upload_count(1.0, 9), 9);
        assert_eq!(upload_count(0.7, 11), 8);
        assert_eq!(upload_count(0.6, 0), 0);
    }

    #[test]
    fn seventy_percent_of_ten() {
        let cache: Vec<Sample> = (0..10).map(|_| sample(vec![0.5, 0.5])).collect();
        let cfg = FilterConfig::default();
        let out = filter_window(&cache, &cfg).unwrap();
        assert_eq!(out.len(), 7);
        // Equal entropy, so the newest seven win (index 0..7).
        let idx: Vec<usize> = out.iter().map(|s| s.index).collect();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn empty_cache_selects_nothing() {
        assert!(filter_window(&[], &FilterConfig::default()).unwrap().is_empty());
    }
}
