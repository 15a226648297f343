//! The trainable edge head: a softmax classifier over frozen backbone
//! features, trained with momentum SGD and an additive L2 weight-decay term.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{argmax, ClassId, HyperParams};

/// Softmax regression parameters plus momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    classes: usize,
    features: usize,
    /// Row-major `classes x features`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    vel_weights: Vec<f64>,
    vel_biases: Vec<f64>,
    session_epochs: usize,
}

/// Labeled training or validation data, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<ClassId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Gradient of the regularized mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LabeledBatch {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<ClassId>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::validation("labeled batch must be non-empty"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::Dimension {
                what: "batch features",
                expected: dim * labels.len(),
                got: features.len(),
            });
        }
        Ok(LabeledBatch { dim, features, labels })
    }

    pub fn from_rows<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], ClassId)>,
    {
        let mut dim = None;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (x, y) in rows {
            let d = *dim.get_or_insert(x.len());
            if x.len() != d {
                return Err(Error::Dimension {
                    what: "batch row",
                    expected: d,
                    got: x.len(),
                });
            }
            features.extend_from_slice(x);
            labels.push(y);
        }
        LabeledBatch::new(dim.unwrap_or(0), features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> ClassId {
        self.labels[i]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    /// Splits into `[0, at)` and `[at, len)`. Either side may be empty, in
    /// which case `None` is returned for it.
    pub fn split_at(&self, at: usize) -> (Option<LabeledBatch>, Option<LabeledBatch>) {
        let at = at.min(self.len());
        let part = |lo: usize, hi: usize| {
            (hi > lo).then(|| LabeledBatch {
                dim: self.dim,
                features: self.features[lo * self.dim..hi * self.dim].to_vec(),
                labels: self.labels[lo..hi].to_vec(),
            })
        };
        (part(0, at), part(at, self.len()))
    }
}

impl StudentModel {
    pub fn zeros(classes: usize, features: usize) -> Self {
        assert!(classes >= 2 && features >= 1, "model needs >= 2 classes and >= 1 feature");
        StudentModel {
            classes,
            features,
            weights: vec![0.0; classes * features],
            biases: vec![0.0; classes],
            vel_weights: vec![0.0; classes * features],
            vel_biases: vec![0.0; classes],
            session_epochs: 0,
        }
    }

    pub fn from_parts(classes: usize, features: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        let mut m = StudentModel::zeros(classes, features);
        if weights.len() != classes * features {
            return Err(Error::Dimension {
                what: "weights",
                expected: classes * features,
                got: weights.len(),
            });
        }
        if biases.len() != classes {
            return Err(Error::Dimension {
                what: "biases",
                expected: classes,
                got: biases.len(),
            });
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::validation("model parameters must be finite"));
        }
        m.weights = weights;
        m.biases = biases;
        Ok(m)
    }

    /// Gaussian-initialized parameters, mostly for tests and benches.
    pub fn random<R: Rng>(classes: usize, features: usize, scale: f64, rng: &mut R) -> Self {
        let mut m = StudentModel::zeros(classes, features);
        let normal = rand_distr::Normal::new(0.0, scale).expect("valid scale");
        for w in m.weights.iter_mut().chain(m.biases.iter_mut()) {
            *w = rng.sample(normal);
        }
        m
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// Number of parameters shipped back to an edge after retraining.
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Zeroes the momentum buffers; called at the start of every retraining session.
    pub fn reset_optimizer(&mut self) {
        self.vel_weights.iter_mut().for_each(|v| *v = 0.0);
        self.vel_biases.iter_mut().for_each(|v| *v = 0.0);
        self.session_epochs = 0;
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.features {
            return Err(Error::Dimension {
                what: "features",
                expected: self.features,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.features..(c + 1) * self.features];
            *o = self.biases[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn probs_into(&self, x: &[f64], out: &mut [f64]) {
        self.logits_into(x, out);
        softmax_in_place(out);
    }

    /// Class probabilities for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut p = vec![0.0; self.classes];
        self.probs_into(x, &mut p);
        Ok(p)
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        Ok(argmax(&self.forward(x)?))
    }

    fn check_batch(&self, batch: &LabeledBatch) -> Result<()> {
        if batch.dim() != self.features {
            return Err(Error::Dimension {
                what: "batch features",
                expected: self.features,
                got: batch.dim(),
            });
        }
        if let Some(&y) = batch.labels().iter().find(|&&y| y >= self.classes) {
            return Err(Error::validation(format!("label {y} out of range")));
        }
        Ok(())
    }

    /// Accuracy and mean cross-entropy over a batch.
    pub fn evaluate(&self, batch: &LabeledBatch) -> Result<Evaluation> {
        self.check_batch(batch)?;
        let mut p = vec![0.0; self.classes];
        let mut correct = 0usize;
        let mut loss = 0.0;
        for i in 0..batch.len() {
            self.probs_into(batch.row(i), &mut p);
            let y = batch.label(i);
            if argmax(&p) == y {
                correct += 1;
            }
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
        }
        let n = batch.len() as f64;
        Ok(Evaluation {
            accuracy: correct as f64 / n,
            loss: loss / n,
        })
    }

    /// Regularized objective `mean CE + weight_decay/2 * |W|^2`, whose gradient
    /// is what [`StudentModel::gradient`] returns.
    pub fn objective(&self, batch: &LabeledBatch, weight_decay: f64) -> Result<f64> {
        let eval = self.evaluate(batch)?;
        let l2: f64 = self.weights.iter().map(|w| w * w).sum();
        Ok(eval.loss + 0.5 * weight_decay * l2)
    }

    /// Analytic gradient of [`StudentModel::objective`] over the whole batch.
    pub fn gradient(&self, batch: &LabeledBatch, weight_decay: f64) -> Result<Gradients> {
        self.check_batch(batch)?;
        let idx: Vec<usize> = (0..batch.len()).collect();
        let mut g = Gradients {
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.classes],
        };
        self.accumulate_gradient(batch, &idx, &mut g);
        for (gw, w) in g.weights.iter_mut().zip(&self.weights) {
            *gw += weight_decay * w;
        }
        Ok(g)
    }

    /// Mean-CE gradient over `idx` written into `g` (overwriting it); returns the summed loss.
    fn accumulate_gradient(&self, batch: &LabeledBatch, idx: &[usize], g: &mut Gradients) -> f64 {
        g.weights.iter_mut().for_each(|v| *v = 0.0);
        g.biases.iter_mut().for_each(|v| *v = 0.0);
        let mut p = vec![0.0; self.classes];
        let mut loss = 0.0;
        let d = self.features;
        for &i in idx {
            let x = batch.row(i);
            let y = batch.label(i);
            self.probs_into(x, &mut p);
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            p[y] -= 1.0;
            for (c, &err) in p.iter().enumerate() {
                g.biases[c] += err;
                for (gw, &xv) in g.weights[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *gw += err * xv;
                }
            }
        }
        let n = idx.len() as f64;
        g.weights.iter_mut().for_each(|v| *v /= n);
        g.biases.iter_mut().for_each(|v| *v /= n);
        loss
    }

    /// One pass of mini-batch momentum SGD. Returns the sample-weighted mean
    /// cross-entropy, each mini-batch's loss taken before its update.
    pub fn train_epoch<R: Rng>(
        &mut self,
        batch: &LabeledBatch,
        h: &HyperParams,
        minibatch: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.check_batch(batch)?;
        let minibatch = minibatch.max(1);
        self.session_epochs += 1;
        let epoch = self.session_epochs;

        let mut order: Vec<usize> = (0..batch.len()).collect();
        order.shuffle(rng);

        let mut g = Gradients {
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.classes],
        };
        let mut total = 0.0;
        for chunk in order.chunks(minibatch) {
            total += self.accumulate_gradient(batch, chunk, &mut g);
            if !total.is_finite() || g.weights.iter().chain(&g.biases).any(|v| !v.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            for (gw, w) in g.weights.iter_mut().zip(&self.weights) {
                *gw += h.weight_decay * w;
            }
            step(&mut self.weights, &mut self.vel_weights, &g.weights, h);
            step(&mut self.biases, &mut self.vel_biases, &g.biases, h);
        }
        if self.weights.iter().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        Ok(total / batch.len() as f64)
    }

    /// Writes the textual checkpoint: a header line, `C` rows of weights, then the biases.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "EDGESYNC-MODEL v1 C={} D={}", self.classes, self.features)?;
        for c in 0..self.classes {
            writeln!(out, "{}", join(&self.weights[c * self.features..(c + 1) * self.features]))?;
        }
        writeln!(out, "{}", join(&self.biases))
    }

    pub fn read_checkpoint<R: BufRead>(input: R, origin: &std::path::Path) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| err(1, "empty checkpoint"))??;
        let mut parts = header.split_whitespace();
        if parts.next() != Some("EDGESYNC-MODEL") || parts.next() != Some("v1") {
            return Err(err(1, "bad checkpoint header"));
        }
        let mut field = |key: &str| -> Result<usize> {
            parts
                .next()
                .and_then(|p| p.strip_prefix(key))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(1, &format!("missing {key}")))
        };
        let classes = field("C=")?;
        let features = field("D=")?;
        if classes < 2 || features < 1 {
            return Err(err(1, "degenerate shape"));
        }
        let mut weights = Vec::with_capacity(classes * features);
        for row in 0..=classes {
            let line_no = row + 2;
            let line = lines.next().ok_or_else(|| err(line_no, "truncated checkpoint"))??;
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| err(line_no, &e.to_string()))?;
            let expected = if row < classes { features } else { classes };
            if vals.len() != expected {
                return Err(err(line_no, &format!("expected {expected} values, got {}", vals.len())));
            }
            if row < classes {
                weights.extend(vals);
            } else {
                return StudentModel::from_parts(classes, features, weights, vals);
            }
        }
        unreachable!()
    }
}

fn step(params: &mut [f64], vel: &mut [f64], grad: &[f64], h: &HyperParams) {
    for ((p, v), g) in params.iter_mut().zip(vel.iter_mut()).zip(grad) {
        *v = h.momentum * *v + g;
        *p -= h.learning_rate * *v;
    }
}

fn join(vals: &[f64]) -> String {
    vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::validation("probability vector has a negative or non-finite entry"));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::validation(format!("probabilities sum to {sum}")));
    }
    Ok(0.0 - probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_batch(n: usize, d: usize, c: usize, r: &mut ChaCha8Rng) -> LabeledBatch {
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let features = (0..n * d).map(|_| r.sample(normal)).collect();
        let labels = (0..n).map(|_| r.random_range(0..c)).collect();
        LabeledBatch::new(d, features, labels).unwrap()
    }

    /// Direct softmax written independently of the optimized path.
    fn naive_probs(m: &StudentModel, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = (0..m.classes())
            .map(|c| {
                let mut s = m.biases()[c];
                for j in 0..m.features() {
                    s += m.weights()[c * m.features() + j] * x[j];
                }
                s
            })
            .collect();
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        z.iter().map(|v| v.exp() / denom).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = StudentModel::zeros(6, 4);
        let p = m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        for v in p {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_row_dominates() {
        let mut m = StudentModel::zeros(3, 2);
        m.weights_mut()[0] = 100.0;
        m.weights_mut()[1] = 100.0;
        let p = m.forward(&[1.0, 1.0]).unwrap();
        assert!(p[0] > 1.0 - 1e-12);
    }

    #[test]
    fn forward_matches_naive() {
        let mut r = rng(7);
        for _ in 0..10 {
            let m = StudentModel::random(6, 8, 0.7, &mut r);
            let x: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
            let fast = m.forward(&x).unwrap();
            let slow = naive_probs(&m, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((fast.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let m = StudentModel::zeros(3, 4);
        assert!(matches!(m.forward(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn entropy_cases() {
        assert!((entropy(&[1.0 / 6.0; 6]).unwrap() - 6f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        let h = entropy(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((h - 2f64.ln()).abs() < 1e-12);
        assert!(entropy(&[-0.1, 1.1]).is_err());
        assert!(entropy(&[0.3, 0.3]).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let mut r = rng(3);
        let batch = random_batch(50, 5, 4, &mut r);
        let mut m = StudentModel::random(4, 5, 0.3, &mut r);
        let before = m.clone();
        let h = HyperParams::new(0.0, 0.9, 1e-3).unwrap();
        let loss = m.train_epoch(&batch, &h, 32, &mut r).unwrap();
        assert_eq!(m.weights(), before.weights());
        assert_eq!(m.biases(), before.biases());
        let eval = before.evaluate(&batch).unwrap();
        assert!((loss - eval.loss).abs() < 1e-12);
    }

    #[test]
    fn single_sample_step_closed_form() {
        let mut r = rng(11);
        let m0 = StudentModel::random(3, 4, 0.5, &mut r);
        let x = vec![0.5, -1.0, 2.0, 0.25];
        let y = 2;
        let batch = LabeledBatch::new(4, x.clone(), vec![y]).unwrap();
        let lr = 0.1;
        let h = HyperParams::new(lr, 0.0, 0.0).unwrap();
        let mut m = m0.clone();
        m.train_epoch(&batch, &h, 32, &mut r).unwrap();
        let p = naive_probs(&m0, &x);
        for c in 0..3 {
            let err = p[c] - if c == y { 1.0 } else { 0.0 };
            for j in 0..4 {
                let expected = m0.weights()[c * 4 + j] - lr * err * x[j];
                assert!((m.weights()[c * 4 + j] - expected).abs() < 1e-14);
            }
            assert!((m.biases()[c] - (m0.biases()[c] - lr * err)).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(5);
        let m = StudentModel::random(3, 4, 0.5, &mut r);
        let batch = random_batch(12, 4, 3, &mut r);
        let wd = 0.01;
        let g = m.gradient(&batch, wd).unwrap();
        let eps = 1e-5;
        for k in 0..m.weights().len() {
            let mut hi = m.clone();
            hi.weights_mut()[k] += eps;
            let mut lo = m.clone();
            lo.weights_mut()[k] -= eps;
            let fd = (hi.objective(&batch, wd).unwrap() - lo.objective(&batch, wd).unwrap()) / (2.0 * eps);
            let rel = (fd - g.weights[k]).abs() / fd.abs().max(g.weights[k].abs()).max(1e-8);
            assert!(rel < 1e-5, "weight {k}: fd {fd} vs {}", g.weights[k]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let batch = LabeledBatch::new(2, vec![1e200, -1e200], vec![0]).unwrap();
        let mut m = StudentModel::zeros(2, 2);
        let h = HyperParams::new(1e100, 0.0, 0.0).unwrap();
        let mut r = rng(1);
        let res = (0..3).try_for_each(|_| m.train_epoch(&batch, &h, 32, &mut r).map(|_| ()));
        assert!(matches!(res, Err(Error::Diverged { .. })));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut r = rng(9);
        let m = StudentModel::random(6, 5, 1.0, &mut r);
        let mut buf = Vec::new();
        m.write_checkpoint(&mut buf).unwrap();
        let back = StudentModel::read_checkpoint(&buf[..], std::path::Path::new("mem")).unwrap();
        assert_eq!(back.weights(), m.weights());
        assert_eq!(back.biases(), m.biases());

        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(StudentModel::read_checkpoint(truncated.as_bytes(), std::path::Path::new("mem")).is_err());
    }
}
