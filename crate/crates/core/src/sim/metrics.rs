//! Per-run metrics, their CSV/summary writers, and recomputation from a
//! per-frame trace.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::StopReason;
use crate::types::{ClassId, EdgeId};

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: u64,
    pub edge_id: Option<EdgeId>,
    pub start_s: f64,
    pub t_filter: f64,
    pub t_upload: f64,
    pub t_label: f64,
    pub t_profile: f64,
    pub t_train: f64,
    pub t_download: f64,
    /// Padding up to a fixed cycle length, or the wait after an empty cycle.
    pub t_idle: f64,
    pub samples_uploaded: usize,
    /// Frames that entered this cycle's windows, summed over edges.
    pub window_size: usize,
    pub train_samples: usize,
    pub epochs: usize,
    pub stop_reason: Option<StopReason>,
    /// Whether a new model was shipped.
    pub trained: bool,
    pub d_at_selection: Option<f64>,
    /// Urgency degree of every edge when the selection was made.
    pub urgency: Vec<Option<f64>>,
}

impl CycleRecord {
    pub fn total(&self) -> f64 {
        self.t_filter + self.t_upload + self.t_label + self.t_profile + self.t_train + self.t_download + self.t_idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Breakdown {
    pub filter: f64,
    pub upload: f64,
    pub label: f64,
    pub profile: f64,
    pub train: f64,
    pub download: f64,
    pub idle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub start_s: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub policy: String,
    pub duration_s: f64,
    pub samples: usize,
    pub correct: usize,
    /// Fraction of frames predicted correctly; frames arrive at a fixed
    /// rate, so this is the time average.
    pub accuracy: f64,
    pub edge_accuracy: Vec<f64>,
    pub cycles: Vec<CycleRecord>,
    /// Cycles that shipped a model.
    pub update_cycles: usize,
    /// Mean length of the cycles that shipped a model.
    pub mean_cycle_s: f64,
    pub mean_breakdown: Breakdown,
    pub upload_bytes: f64,
    pub download_bytes: f64,
    pub upload_bps: f64,
    pub download_bps: f64,
    pub series: Vec<SeriesPoint>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl MetricsReport {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        policy: &str,
        duration_s: f64,
        per_edge: Vec<(usize, usize)>,
        cycles: Vec<CycleRecord>,
        upload_bytes: f64,
        download_bytes: f64,
        resolution_s: f64,
        bins: Vec<(usize, usize)>,
    ) -> Self {
        let correct = per_edge.iter().map(|p| p.0).sum();
        let samples = per_edge.iter().map(|p| p.1).sum();
        let updates: Vec<&CycleRecord> = cycles.iter().filter(|c| c.trained).collect();
        let n = updates.len().max(1) as f64;
        let mut b = Breakdown::default();
        for c in &updates {
            b.filter += c.t_filter / n;
            b.upload += c.t_upload / n;
            b.label += c.t_label / n;
            b.profile += c.t_profile / n;
            b.train += c.t_train / n;
            b.download += c.t_download / n;
            b.idle += c.t_idle / n;
        }
        let mean_cycle_s = updates.iter().fold(0.0, |acc, c| acc + c.total()) / n;
        let rate = |bytes: f64| if duration_s > 0.0 { bytes * 8.0 / duration_s } else { 0.0 };
        MetricsReport {
            policy: policy.to_string(),
            duration_s,
            samples,
            correct,
            accuracy: ratio(correct, samples),
            edge_accuracy: per_edge.iter().map(|&(c, t)| ratio(c, t)).collect(),
            update_cycles: updates.len(),
            mean_cycle_s,
            mean_breakdown: b,
            upload_bytes,
            download_bytes,
            upload_bps: rate(upload_bytes),
            download_bps: rate(download_bytes),
            series: bins
                .into_iter()
                .enumerate()
                .map(|(i, (correct, total))| SeriesPoint {
                    start_s: i as f64 * resolution_s,
                    correct,
                    total,
                })
                .collect(),
            cycles,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

pub fn stop_reason_name(r: Option<StopReason>) -> &'static str {
    match r {
        None => "",
        Some(StopReason::Patience) => "patience",
        Some(StopReason::TimeBudget) => "time_budget",
        Some(StopReason::EpochCap) => "epoch_cap",
        Some(StopReason::Diverged) => "diverged",
        Some(StopReason::Skipped) => "skipped",
    }
}

/// One row per cycle, with an `urgency_<edge>` column per edge.
pub fn write_metrics_csv<W: Write + ?Sized>(report: &MetricsReport, edges: usize, out: &mut W) -> std::io::Result<()> {
    write!(
        out,
        "cycle,edge_id,start_s,t_filter,t_upload,t_label,t_profile,t_train,t_download,t_idle,total_s,\
         samples_uploaded,window_size,train_samples,epochs,stop_reason,trained,d_at_selection"
    )?;
    for e in 0..edges {
        write!(out, ",urgency_{e}")?;
    }
    writeln!(out)?;
    for c in &report.cycles {
        write!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
            c.cycle,
            c.edge_id.map_or(String::new(), |e| e.to_string()),
            c.start_s,
            c.t_filter,
            c.t_upload,
            c.t_label,
            c.t_profile,
            c.t_train,
            c.t_download,
            c.t_idle,
            c.total(),
            c.samples_uploaded,
            c.window_size,
            c.train_samples,
            c.epochs,
            stop_reason_name(c.stop_reason),
            c.trained as u8,
            opt(c.d_at_selection)
        )?;
        for e in 0..edges {
            write!(out, ",{}", opt(c.urgency.get(e).copied().flatten()))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Headline numbers as `key = value` lines.
pub fn write_summary<W: Write + ?Sized>(report: &MetricsReport, out: &mut W) -> std::io::Result<()> {
    let b = &report.mean_breakdown;
    writeln!(out, "policy = {}", report.policy)?;
    writeln!(out, "duration_s = {:.3}", report.duration_s)?;
    writeln!(out, "frames = {}", report.samples)?;
    writeln!(out, "accuracy = {:.6}", report.accuracy)?;
    for (e, a) in report.edge_accuracy.iter().enumerate() {
        writeln!(out, "accuracy_edge_{e} = {a:.6}")?;
    }
    writeln!(out, "cycles = {}", report.cycles.len())?;
    writeln!(out, "update_cycles = {}", report.update_cycles)?;
    writeln!(out, "mean_cycle_s = {:.6}", report.mean_cycle_s)?;
    writeln!(out, "mean_filter_s = {:.6}", b.filter)?;
    writeln!(out, "mean_upload_s = {:.6}", b.upload)?;
    writeln!(out, "mean_label_s = {:.6}", b.label)?;
    writeln!(out, "mean_profile_s = {:.6}", b.profile)?;
    writeln!(out, "mean_train_s = {:.6}", b.train)?;
    writeln!(out, "mean_download_s = {:.6}", b.download)?;
    writeln!(out, "mean_idle_s = {:.6}", b.idle)?;
    writeln!(out, "upload_bytes = {:.0}", report.upload_bytes)?;
    writeln!(out, "download_bytes = {:.0}", report.download_bytes)?;
    writeln!(out, "upload_kbps = {:.6}", report.upload_bps / 1e3)?;
    writeln!(out, "download_kbps = {:.6}", report.download_bps / 1e3)?;
    Ok(())
}

/// Accuracy-over-time series.
pub fn write_series_csv<W: Write + ?Sized>(report: &MetricsReport, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "start_s,frames,correct,accuracy")?;
    for p in &report.series {
        writeln!(out, "{:.3},{},{},{:.6}", p.start_s, p.total, p.correct, ratio(p.correct, p.total))?;
    }
    Ok(())
}

/// One inferred frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub edge_id: EdgeId,
    pub seq: u64,
    pub time: f64,
    pub label: ClassId,
    pub predicted: ClassId,
    /// Number of models installed on the edge before this frame.
    pub model_version: u32,
}

pub fn write_trace_csv<W: Write + ?Sized>(trace: &[TraceRow], out: &mut W) -> std::io::Result<()> {
    writeln!(out, "edge_id,seq,time,label,predicted,correct,model_version")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.edge_id,
            r.seq,
            r.time,
            r.label,
            r.predicted,
            (r.label == r.predicted) as u8,
            r.model_version
        )?;
    }
    Ok(())
}

pub fn read_trace_csv<R: BufRead>(input: R, origin: &Path) -> Result<Vec<TraceRow>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate().skip(1) {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(i + 1, format!("expected 7 fields, got {}", f.len())));
        }
        let bad = |what: &str| err(i + 1, format!("bad {what}"));
        rows.push(TraceRow {
            edge_id: f[0].parse().map_err(|_| bad("edge_id"))?,
            seq: f[1].parse().map_err(|_| bad("seq"))?,
            time: f[2].parse().map_err(|_| bad("time"))?,
            label: f[3].parse().map_err(|_| bad("label"))?,
            predicted: f[4].parse().map_err(|_| bad("predicted"))?,
            model_version: f[6].parse().map_err(|_| bad("model_version"))?,
        });
    }
    Ok(rows)
}

/// `(overall accuracy, per-edge accuracy)` straight from a trace.
pub fn accuracy_from_trace(trace: &[TraceRow], edges: usize) -> (f64, Vec<f64>) {
    let mut per = vec![(0usize, 0usize); edges];
    for r in trace {
        if let Some(p) = per.get_mut(r.edge_id) {
            p.0 += (r.label == r.predicted) as usize;
            p.1 += 1;
        }
    }
    let correct = per.iter().map(|p| p.0).sum();
    let total = per.iter().map(|p| p.1).sum();
    (ratio(correct, total), per.iter().map(|&(c, t)| ratio(c, t)).collect())
}
