//! The event loop. Edges infer every frame with whatever model they hold;
//! the cloud runs one update cycle at a time: collect filtered uploads from
//! every edge, label them, pick an edge, retrain it and ship the new head.
//! Models are installed at the cycle's end and only affect later frames.

use std::collections::VecDeque;

use rand::Rng;

use super::metrics::{CycleRecord, MetricsReport, TraceRow};
use super::network::NetworkModel;
use super::policy::{PolicyConfig, PolicyKind, Selection, StopMode};
use crate::bho::SearchBox;
use crate::error::{Error, Result};
use crate::filter::{filter_window, FilterConfig};
use crate::model::{LabeledBatch, StudentModel};
use crate::stream::FeatureStream;
use crate::trainer::{retrain, train_fixed, EpochCost, StopReason, TrainBudget, TrainOutcome, TrainerConfig};
use crate::types::{ClassId, EdgeId, HyperParams, RngSeed, Sample};
use crate::urgency::{select_edge, urgency_degree, AccuracyBank, UrgencyConfig};

/// Simulated compute costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Teacher labeling time per uploaded sample.
    pub label_s_per_sample: f64,
    /// Edge-side scoring time per cached sample (only when filtering).
    pub filter_s_per_sample: f64,
    pub epoch: EpochCost,
    /// Minimum length of a cycle that trained nothing.
    pub idle_wait_s: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            label_s_per_sample: 0.06,
            filter_s_per_sample: 0.0005,
            epoch: EpochCost::default(),
            idle_wait_s: 1.0,
        }
    }
}

/// Everything a run needs besides the streams, the policy and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub net: NetworkModel,
    pub costs: CostModel,
    pub budget: TrainBudget,
    pub trainer: TrainerConfig,
    pub filter: FilterConfig,
    pub urgency: UrgencyConfig,
    pub h: HyperParams,
    /// Probability that the teacher returns a wrong label.
    pub teacher_noise: f64,
    /// Newest labeled samples the cloud keeps per edge.
    pub train_buffer_cap: usize,
    /// A retraining window holds the samples labeled since the edge's last
    /// update, topped up with older stored ones to at least this many.
    pub min_train_window: usize,
    /// Edge inference throughput in frames per second; `None` is unlimited.
    pub inference_cap_hz: Option<f64>,
    /// Bin width of the accuracy-over-time series.
    pub series_resolution_s: f64,
    pub record_trace: bool,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            net: NetworkModel::default(),
            costs: CostModel::default(),
            budget: TrainBudget::default(),
            trainer: TrainerConfig::default(),
            filter: FilterConfig::default(),
            urgency: UrgencyConfig::default(),
            h: HyperParams::default(),
            teacher_noise: 0.02,
            train_buffer_cap: 400,
            min_train_window: 150,
            inference_cap_hz: Some(30.0),
            series_resolution_s: 60.0,
            record_trace: false,
        }
    }
}

impl SimSettings {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.budget.validate()?;
        self.filter.validate()?;
        self.urgency.validate()?;
        self.h.validate()?;
        let c = &self.costs;
        if [c.label_s_per_sample, c.filter_s_per_sample, c.epoch.base_s, c.epoch.per_sample_s, c.idle_wait_s]
            .iter()
            .any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return Err(Error::Config("cost constants must be finite and non-negative".into()));
        }
        if !(c.idle_wait_s > 0.0) {
            return Err(Error::Config("idle_wait_s must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.teacher_noise) {
            return Err(Error::Config("teacher_noise must lie in [0, 1)".into()));
        }
        if self.train_buffer_cap < self.trainer.min_window || self.min_train_window > self.train_buffer_cap {
            return Err(Error::Config(
                "need min_window <= train_buffer_cap and min_train_window <= train_buffer_cap".into(),
            ));
        }
        if self.inference_cap_hz.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("inference_cap_hz must be positive".into()));
        }
        if !(self.series_resolution_s > 0.0) {
            return Err(Error::Config("series_resolution_s must be positive".into()));
        }
        if !(self.trainer.validation_fraction > 0.0 && self.trainer.validation_fraction < 1.0) || self.trainer.minibatch == 0 {
            return Err(Error::Config("validation_fraction must lie in (0, 1) and minibatch >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub report: MetricsReport,
    /// Per-frame rows, present when `record_trace` is set.
    pub trace: Vec<TraceRow>,
}

struct Labeled {
    features: Vec<f64>,
    label: ClassId,
    arrival: f64,
}

struct EdgeState<'a> {
    stream: &'a FeatureStream,
    model: StudentModel,
    version: u32,
    next: usize,
    queue_free_at: f64,
    /// Inferred samples not yet uploaded, with their inference completion time.
    cache: VecDeque<(f64, Sample)>,
    buffer: VecDeque<Labeled>,
    /// Buffer entries labeled since the last update.
    fresh: usize,
    bank: AccuracyBank,
    last_trained: Option<u64>,
    correct: usize,
    total: usize,
}

struct Sim<'a> {
    edges: Vec<EdgeState<'a>>,
    settings: &'a SimSettings,
    policy: &'a PolicyConfig,
    seed: RngSeed,
    teacher: rand_chacha::ChaCha8Rng,
    trace: Vec<TraceRow>,
    bins: Vec<(usize, usize)>,
    cycles: Vec<CycleRecord>,
    upload_bytes: f64,
    download_bytes: f64,
    rr_next: usize,
}

impl Sim<'_> {
    /// Infers every frame that arrives at or before `t` with the edge's current model.
    fn advance(&mut self, t: f64) -> Result<()> {
        let cap = self.settings.inference_cap_hz;
        let res = self.settings.series_resolution_s;
        for (e, edge) in self.edges.iter_mut().enumerate() {
            while let Some(rec) = edge.stream.records.get(edge.next).filter(|r| r.time <= t) {
                let probs = edge.model.forward(&rec.features)?;
                let done = match cap {
                    Some(hz) => rec.time.max(edge.queue_free_at) + 1.0 / hz,
                    None => rec.time,
                };
                edge.queue_free_at = done;
                let sample = Sample::new(e, edge.next as u64, rec.time, rec.features.clone(), rec.label).with_inference(probs);
                let pred = sample.predicted_label.expect("set by with_inference");
                let ok = pred == rec.label;
                edge.correct += ok as usize;
                edge.total += 1;
                let bin = (rec.time / res) as usize;
                if self.bins.len() <= bin {
                    self.bins.resize(bin + 1, (0, 0));
                }
                self.bins[bin].0 += ok as usize;
                self.bins[bin].1 += 1;
                if self.settings.record_trace {
                    self.trace.push(TraceRow {
                        edge_id: e,
                        seq: edge.next as u64,
                        time: rec.time,
                        label: rec.label,
                        predicted: pred,
                        model_version: edge.version,
                    });
                }
                edge.cache.push_back((done, sample));
                edge.next += 1;
            }
        }
        Ok(())
    }

    fn teacher_label(&mut self, truth: ClassId, classes: usize) -> ClassId {
        if self.settings.teacher_noise > 0.0 && self.teacher.random::<f64>() < self.settings.teacher_noise {
            (truth + 1 + self.teacher.random_range(0..classes - 1)) % classes
        } else {
            truth
        }
    }

    /// Drains `edge`'s cache up to `t`, filters it, labels the uploads and
    /// files them into the bank and the training buffer. Returns
    /// `(window size, uploaded)`.
    fn collect(&mut self, e: EdgeId, t: f64, fraction: f64) -> Result<(usize, usize)> {
        let edge = &mut self.edges[e];
        let ready = edge.cache.iter().take_while(|(done, _)| *done <= t).count();
        let window: Vec<Sample> = edge.cache.drain(..ready).map(|(_, s)| s).collect();
        if window.is_empty() {
            return Ok((0, 0));
        }
        let mut chosen: Vec<Sample> = if fraction < 1.0 {
            let cfg = FilterConfig {
                upload_fraction: fraction,
                ..self.settings.filter
            };
            filter_window(&window, &cfg)?.into_iter().map(|s| s.sample).collect()
        } else {
            window.clone()
        };
        chosen.sort_by_key(|s| s.seq);
        let classes = self.edges[e].model.classes();
        let cap = self.settings.train_buffer_cap;
        for s in &chosen {
            let teacher = self.teacher_label(s.true_label, classes);
            let edge = &mut self.edges[e];
            edge.bank.record_results([(s.predicted_label.expect("inferred"), teacher, s.seq)]);
            edge.buffer.push_back(Labeled {
                features: s.features.clone(),
                label: teacher,
                arrival: s.arrival_time,
            });
            edge.fresh += 1;
            while edge.buffer.len() > cap {
                edge.buffer.pop_front();
            }
        }
        Ok((window.len(), chosen.len()))
    }

    /// Buffered samples the policy trains on; `None` below the minimum window.
    fn training_window(&self, e: EdgeId, now: f64) -> Result<Option<LabeledBatch>> {
        let edge = &self.edges[e];
        let take = edge.fresh.max(self.settings.min_train_window).min(edge.buffer.len());
        let from = self.policy.train_horizon_s.map_or(f64::NEG_INFINITY, |h| now - h);
        let rows: Vec<&Labeled> = edge.buffer.iter().skip(edge.buffer.len() - take).filter(|l| l.arrival >= from).collect();
        if rows.len() < self.settings.trainer.min_window.max(1) {
            return Ok(None);
        }
        LabeledBatch::from_rows(rows.into_iter().map(|l| (l.features.as_slice(), l.label))).map(Some)
    }

    /// Trains edge `e` according to the policy. `time_cap` bounds the
    /// simulated training time when the cycle length is fixed.
    fn train(&self, e: EdgeId, window: &LabeledBatch, time_cap: Option<f64>, cycle: u64) -> TrainOutcome {
        let s = self.settings;
        let model = &self.edges[e].model;
        let seed = self.seed.child_indexed("train", cycle);
        let mut budget = s.budget;
        if let Some(cap) = time_cap {
            budget.max_time_s = budget.max_time_s.min(cap.max(f64::MIN_POSITIVE));
        }
        if time_cap.is_some_and(|c| c <= 0.0) {
            return train_fixed(model, window, &s.h, 1, Some(0.0), &s.costs.epoch, &s.trainer, seed);
        }
        match self.policy.stop {
            StopMode::FixedEpochs(n) => train_fixed(model, window, &s.h, n, time_cap, &s.costs.epoch, &s.trainer, seed),
            StopMode::EarlyStop if self.policy.profiling_trials > 0 => {
                // Online profiling: a few random configurations next to the
                // configured one; the best validation score wins.
                let mut rng = self.seed.child_indexed("profile", cycle).rng();
                let search = SearchBox::default();
                let mut best = retrain(model, window, &s.h, &budget, &s.costs.epoch, &s.trainer, seed);
                for trial in 0..self.policy.profiling_trials {
                    let u: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                    let h = search.from_unit(&u);
                    let out = retrain(model, window, &h, &budget, &s.costs.epoch, &s.trainer, seed.child_indexed("trial", trial as u64));
                    let score = |o: &TrainOutcome| o.best_eval.map_or(f64::NEG_INFINITY, |v| v.accuracy);
                    if score(&out) > score(&best) {
                        best = TrainOutcome {
                            train_duration_s: best.train_duration_s,
                            ..out
                        };
                    }
                }
                best
            }
            StopMode::EarlyStop => retrain(model, window, &s.h, &budget, &s.costs.epoch, &s.trainer, seed),
        }
    }

    fn urgency_snapshot(&self) -> Vec<Option<f64>> {
        self.edges
            .iter()
            .enumerate()
            .map(|(e, edge)| urgency_degree(e, &edge.bank, &self.settings.urgency).map(|r| r.degree))
            .collect()
    }

    fn pick(&mut self, urgency: &[Option<f64>]) -> EdgeId {
        let k = self.edges.len();
        match self.policy.selection {
            Selection::Urgency => {
                let reports: Vec<_> = self
                    .edges
                    .iter()
                    .enumerate()
                    .filter_map(|(e, edge)| urgency_degree(e, &edge.bank, &self.settings.urgency))
                    .collect();
                debug_assert_eq!(reports.len(), urgency.iter().flatten().count());
                let last: Vec<Option<u64>> = self.edges.iter().map(|e| e.last_trained).collect();
                select_edge(&reports, &last)
            }
            Selection::RoundRobin => {
                let e = self.rr_next;
                self.rr_next = (self.rr_next + 1) % k;
                e
            }
        }
    }

    fn install(&mut self, e: EdgeId, model: StudentModel, cycle: u64) {
        let edge = &mut self.edges[e];
        edge.model = model;
        edge.version += 1;
        edge.last_trained = Some(cycle);
        edge.fresh = 0;
    }

    fn cyclic(&mut self, end: f64) -> Result<()> {
        let s = self.settings;
        let params = self.edges[0].model.parameter_count();
        let fraction = self.policy.upload_fraction;
        let mut t = 0.0;
        let mut cycle: u64 = 0;
        while t < end {
            self.advance(t)?;
            let k = self.edges.len();
            let (mut t_filter, mut t_upload, mut window_size, mut uploaded) = (0.0f64, 0.0f64, 0, 0);
            for e in 0..k {
                let (w, n) = self.collect(e, t, fraction)?;
                if fraction < 1.0 {
                    t_filter = t_filter.max(s.costs.filter_s_per_sample * w as f64);
                }
                t_upload = t_upload.max(s.net.upload_seconds(n));
                window_size += w;
                uploaded += n;
            }
            self.upload_bytes += s.net.upload_bytes(uploaded);
            let t_label = s.costs.label_s_per_sample * uploaded as f64;

            let urgency = self.urgency_snapshot();
            let chosen = self.pick(&urgency);
            let mut t_profile = 0.0;
            let t_download_est = s.net.download_seconds(params);
            let window = self.training_window(chosen, t)?;
            let train_samples = window.as_ref().map_or(0, |w| w.len());
            let mut outcome = None;
            if let Some(window) = &window {
                t_profile = self.policy.profiling_s;
                let cap = self
                    .policy
                    .fixed_cycle_s
                    .map(|c| c - (t_filter + t_upload + t_label + t_profile + t_download_est));
                outcome = Some(self.train(chosen, window, cap, cycle));
            }
            let trained = outcome
                .as_ref()
                .is_some_and(|o| o.epochs_run > 0 && !matches!(o.stop_reason, StopReason::Diverged | StopReason::Skipped));
            let t_train = outcome.as_ref().map_or(0.0, |o| o.train_duration_s);
            let t_download = if trained { t_download_est } else { 0.0 };
            if trained {
                self.download_bytes += s.net.download_bytes(params);
            }
            let busy = t_filter + t_upload + t_label + t_profile + t_train + t_download;
            let mut floor = self.policy.fixed_cycle_s.unwrap_or(0.0);
            if !trained {
                floor = floor.max(s.costs.idle_wait_s);
            }
            let t_idle = (floor - busy).max(0.0);
            let t_end = t + busy + t_idle;

            self.cycles.push(CycleRecord {
                cycle,
                edge_id: Some(chosen),
                start_s: t,
                t_filter,
                t_upload,
                t_label,
                t_profile,
                t_train,
                t_download,
                t_idle,
                samples_uploaded: uploaded,
                window_size,
                train_samples,
                epochs: outcome.as_ref().map_or(0, |o| o.epochs_run),
                stop_reason: outcome.as_ref().map(|o| o.stop_reason),
                trained,
                d_at_selection: urgency[chosen],
                urgency,
            });

            self.advance(t_end)?;
            if let (true, Some(o)) = (trained, outcome) {
                self.install(chosen, o.final_model, cycle);
            }
            t = t_end;
            cycle += 1;
        }
        Ok(())
    }

    fn one_time(&mut self, window_s: f64) -> Result<()> {
        let s = self.settings;
        let params = self.edges[0].model.parameter_count();
        let mut t = window_s;
        self.advance(t)?;
        for e in 0..self.edges.len() {
            let (w, n) = self.collect(e, window_s, 1.0)?;
            self.upload_bytes += s.net.upload_bytes(n);
            let t_upload = s.net.upload_seconds(n);
            let t_label = s.costs.label_s_per_sample * n as f64;
            let window = self.training_window(e, t)?;
            let cycle = self.cycles.len() as u64;
            let seed = self.seed.child_indexed("train", cycle);
            let outcome = window
                .as_ref()
                .map(|w| retrain(&self.edges[e].model, w, &s.h, &s.budget, &s.costs.epoch, &s.trainer, seed));
            let trained = outcome
                .as_ref()
                .is_some_and(|o| o.epochs_run > 0 && !matches!(o.stop_reason, StopReason::Diverged | StopReason::Skipped));
            let t_train = outcome.as_ref().map_or(0.0, |o| o.train_duration_s);
            let t_download = if trained { s.net.download_seconds(params) } else { 0.0 };
            if trained {
                self.download_bytes += s.net.download_bytes(params);
            }
            let t_end = t + t_upload + t_label + t_train + t_download;
            self.cycles.push(CycleRecord {
                cycle,
                edge_id: Some(e),
                start_s: t,
                t_filter: 0.0,
                t_upload,
                t_label,
                t_profile: 0.0,
                t_train,
                t_download,
                t_idle: 0.0,
                samples_uploaded: n,
                window_size: w,
                train_samples: window.as_ref().map_or(0, |w| w.len()),
                epochs: outcome.as_ref().map_or(0, |o| o.epochs_run),
                stop_reason: outcome.as_ref().map(|o| o.stop_reason),
                trained,
                d_at_selection: None,
                urgency: vec![None; self.edges.len()],
            });
            self.advance(t_end)?;
            if let (true, Some(o)) = (trained, outcome) {
                self.install(e, o.final_model, cycle);
            }
            t = t_end;
        }
        Ok(())
    }
}

/// Runs one policy over one stream per edge. Deterministic in
/// `(streams, initial, policy, settings, seed)`.
pub fn run_simulation(
    streams: &[FeatureStream],
    initial: &StudentModel,
    policy: &PolicyConfig,
    settings: &SimSettings,
    seed: RngSeed,
) -> Result<SimOutput> {
    settings.validate()?;
    policy.validate()?;
    if streams.is_empty() {
        return Err(Error::validation("simulation needs at least one edge stream"));
    }
    if policy.needs_measured_cycle() {
        return Err(Error::Config(format!("{} needs a fixed cycle length", policy.name)));
    }
    for (e, s) in streams.iter().enumerate() {
        if s.meta.classes != initial.classes() || s.meta.features != initial.features() {
            return Err(Error::validation(format!(
                "stream {e} has C={} D={}, the model expects C={} D={}",
                s.meta.classes,
                s.meta.features,
                initial.classes(),
                initial.features()
            )));
        }
    }
    let end = streams.iter().map(|s| s.duration_s()).fold(0.0, f64::max);
    let mut sim = Sim {
        edges: streams
            .iter()
            .map(|stream| EdgeState {
                stream,
                model: initial.clone(),
                version: 0,
                next: 0,
                queue_free_at: 0.0,
                cache: VecDeque::new(),
                buffer: VecDeque::new(),
                fresh: 0,
                bank: AccuracyBank::new(settings.urgency.capacity),
                last_trained: None,
                correct: 0,
                total: 0,
            })
            .collect(),
        settings,
        policy,
        seed,
        teacher: seed.child("teacher").rng(),
        trace: Vec::new(),
        bins: Vec::new(),
        cycles: Vec::new(),
        upload_bytes: 0.0,
        download_bytes: 0.0,
        rr_next: 0,
    };
    match policy.kind {
        PolicyKind::NoAdapt => {}
        PolicyKind::OneTime { window_s } => {
            if window_s < end {
                sim.one_time(window_s)?;
            }
        }
        PolicyKind::Cyclic => sim.cyclic(end)?,
    }
    sim.advance(f64::INFINITY)?;

    let report = MetricsReport::assemble(
        &policy.name,
        end,
        sim.edges.iter().map(|e| (e.correct, e.total)).collect(),
        sim.cycles,
        sim.upload_bytes,
        sim.download_bytes,
        settings.series_resolution_s,
        sim.bins,
    );
    Ok(SimOutput {
        report,
        trace: sim.trace,
    })
}
