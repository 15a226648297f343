//! Gaussian-process surrogate over the unit cube: zero prior mean on
//! standardized targets, squared-exponential kernel with fixed length scales.

use statrs::function::erf::erfc;

use super::linalg::{cholesky, solve_lower, solve_upper_transposed};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    /// One length scale per input dimension (a single entry is broadcast).
    pub length_scales: Vec<f64>,
    /// Observation noise variance, in standardized units.
    pub noise: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            length_scales: vec![0.2],
            noise: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GpSurrogate {
    dim: usize,
    points: Vec<Vec<f64>>,
    length_scales: Vec<f64>,
    noise: f64,
    y_mean: f64,
    y_scale: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

impl GpSurrogate {
    pub fn fit(points: &[Vec<f64>], values: &[f64], cfg: &GpConfig) -> Result<Self> {
        let n = points.len();
        if n == 0 || n != values.len() {
            return Err(Error::validation("GP needs at least one observation and matching values"));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::validation("GP observations have mixed dimensions"));
        }
        let length_scales = match cfg.length_scales.as_slice() {
            [l] => vec![*l; dim],
            ls if ls.len() == dim => ls.to_vec(),
            ls => {
                return Err(Error::Dimension {
                    what: "length scales",
                    expected: dim,
                    got: ls.len(),
                })
            }
        };
        if length_scales.iter().any(|&l| !(l > 0.0)) || !(cfg.noise >= 0.0) {
            return Err(Error::validation("length scales must be positive and noise non-negative"));
        }

        let y_mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 1e-24 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = values.iter().map(|v| (v - y_mean) / y_scale).collect();

        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = se_kernel(&points[i], &points[j], &length_scales);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] += cfg.noise;
        }
        let chol = cholesky(&k, n).map_err(|pivot| Error::Factorization(format!("non-positive pivot at row {pivot}")))?;
        let alpha = solve_upper_transposed(&chol, n, &solve_lower(&chol, n, &ys));
        Ok(GpSurrogate {
            dim,
            points: points.to_vec(),
            length_scales,
            noise: cfg.noise,
            y_mean,
            y_scale,
            chol,
            alpha,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn to_standardized(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    /// Posterior mean and variance in standardized units (prior variance 1).
    pub fn posterior_standardized(&self, query: &[f64]) -> (f64, f64) {
        let n = self.points.len();
        let ks: Vec<f64> = self.points.iter().map(|p| se_kernel(p, query, &self.length_scales)).collect();
        let mean = ks.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.chol, n, &ks);
        let var = 1.0 - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Posterior mean and variance in the objective's own units.
    pub fn posterior(&self, query: &[f64]) -> (f64, f64) {
        let (m, v) = self.posterior_standardized(query);
        (self.y_mean + self.y_scale * m, v * self.y_scale * self.y_scale)
    }

    /// Expected improvement over `f_best` (maximization), objective units.
    pub fn expected_improvement(&self, query: &[f64], f_best: f64, xi: f64) -> f64 {
        let (mu, var) = self.posterior(query);
        expected_improvement(mu, var.sqrt(), f_best, xi)
    }
}

fn se_kernel(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    (-0.5 * r2).exp()
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Closed-form `E[max(f - f_best - xi, 0)]` for `f ~ N(mu, sigma^2)`; zero when `sigma = 0`.
pub fn expected_improvement(mu: f64, sigma: f64, f_best: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) {
        return 0.0;
    }
    let gap = mu - f_best - xi;
    let z = gap / sigma;
    (gap * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}
