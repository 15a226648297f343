//! Cloud-side accuracy banks and the urgency degree used to pick which edge
//! model to retrain next.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::types::{ClassId, EdgeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrgencyConfig {
    /// Bank capacity `n`.
    pub capacity: usize,
    /// Segment count `m`; must divide `capacity`.
    pub segments: usize,
    /// Logistic decay horizon; defaults to `segments`.
    pub decay: f64,
    /// Constant multiplier on every segment weight; defaults to `segments`.
    pub weight_scale: f64,
}

impl Default for UrgencyConfig {
    fn default() -> Self {
        UrgencyConfig {
            capacity: 90,
            segments: 10,
            decay: 10.0,
            weight_scale: 10.0,
        }
    }
}

impl UrgencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segments == 0 || self.capacity == 0 {
            return Err(Error::Config("bank capacity and segment count must be positive".into()));
        }
        if self.capacity % self.segments != 0 {
            return Err(Error::Config(format!(
                "bank capacity {} is not divisible by segment count {}",
                self.capacity, self.segments
            )));
        }
        if !(self.decay > 0.0 && self.weight_scale > 0.0) {
            return Err(Error::Config("urgency decay and weight scale must be positive".into()));
        }
        Ok(())
    }

    pub fn segment_length(&self) -> usize {
        self.capacity / self.segments
    }

    /// Weight of segment `i` (0 = oldest).
    pub fn weight(&self, i: usize) -> f64 {
        let x = i as f64 / self.decay;
        self.weight_scale / (1.0 + (-x).exp())
    }
}

/// Bounded FIFO of correctness flags, newest at the back.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyBank {
    capacity: usize,
    bits: VecDeque<(bool, u64)>,
}

impl AccuracyBank {
    pub fn new(capacity: usize) -> Self {
        AccuracyBank {
            capacity,
            bits: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.bits.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Correctness flags, oldest first.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().map(|&(b, _)| b)
    }

    pub fn push(&mut self, correct: bool, index: u64) {
        self.bits.push_back((correct, index));
        while self.bits.len() > self.capacity {
            self.bits.pop_front();
        }
    }

    /// Appends one flag per `(edge prediction, teacher label)` pair.
    pub fn record_results<I>(&mut self, labeled: I)
    where
        I: IntoIterator<Item = (ClassId, ClassId, u64)>,
    {
        for (pred, teacher, index) in labeled {
            self.push(pred == teacher, index);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UrgencyReport {
    pub edge_id: EdgeId,
    pub degree: f64,
    pub segment_accuracies: Vec<f64>,
}

/// Mean accuracy of each contiguous segment, segment 0 oldest.
pub fn segment_accuracies(bank: &AccuracyBank, cfg: &UrgencyConfig) -> Option<Vec<f64>> {
    if !bank.is_full() || bank.capacity() != cfg.capacity {
        return None;
    }
    let len = cfg.segment_length();
    let mut acc = vec![0.0; cfg.segments];
    for (j, bit) in bank.bits().enumerate() {
        if bit {
            acc[j / len] += 1.0;
        }
    }
    acc.iter_mut().for_each(|a| *a /= len as f64);
    Some(acc)
}

/// Urgency degree of a full bank: sum over segments of the drop from the
/// oldest segment's accuracy, weighted by a logistic ramp that favors newer
/// segments. Returns `None` until the bank is full.
pub fn urgency_degree(edge_id: EdgeId, bank: &AccuracyBank, cfg: &UrgencyConfig) -> Option<UrgencyReport> {
    let wa = segment_accuracies(bank, cfg)?;
    let degree = wa
        .iter()
        .enumerate()
        .map(|(i, &a)| (wa[0] - a) * cfg.weight(i))
        .sum();
    Some(UrgencyReport {
        edge_id,
        degree,
        segment_accuracies: wa,
    })
}

/// Picks the edge with the largest degree among `reports`; ties go to the
/// least recently trained edge, then the lowest id. With no reports, falls
/// back to the least recently trained of all `edge_count` edges.
/// `last_trained[e]` is the cycle at which edge `e` was last retrained.
pub fn select_edge(reports: &[UrgencyReport], last_trained: &[Option<u64>]) -> EdgeId {
    let recency = |e: EdgeId| last_trained.get(e).copied().flatten().map_or(-1i128, i128::from);
    if reports.is_empty() {
        return (0..last_trained.len())
            .min_by_key(|&e| (recency(e), e))
            .unwrap_or(0);
    }
    let mut best = &reports[0];
    for r in &reports[1..] {
        let better = match r.degree.total_cmp(&best.degree) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => (recency(r.edge_id), r.edge_id) < (recency(best.edge_id), best.edge_id),
        };
        if better {
            best = r;
        }
    }
    best.edge_id
}
