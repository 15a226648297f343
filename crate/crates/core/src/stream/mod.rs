//! Feature streams: the synthetic drift generator, the on-disk stream format,
//! and the fixed benchmark catalog.

mod catalog;
mod io;
mod schedule;

pub use catalog::{
    benchmark_library, split_across_cameras, standard_benchmark_suite, World, WorldConfig, CATALOG,
};
pub use io::{load_feature_file, read_stream, save_feature_file, write_stream};
pub use schedule::{bayes_accuracy, generate, DriftSchedule, Phase, PhaseParams, Transition};

use crate::types::ClassId;

/// One frame's worth of pre-extracted features.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRecord {
    pub time: f64,
    pub label: ClassId,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamMeta {
    pub classes: usize,
    pub features: usize,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    pub meta: StreamMeta,
    /// Free-form description of where the stream came from; not serialized.
    pub name: String,
    pub records: Vec<StreamRecord>,
}

impl FeatureStream {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time)
    }

    /// Same header fields and records; the name is ignored.
    pub fn same_data(&self, other: &FeatureStream) -> bool {
        self.meta == other.meta && self.records == other.records
    }

    /// Records with `start <= time < end`.
    pub fn between(&self, start: f64, end: f64) -> &[StreamRecord] {
        let lo = self.records.partition_point(|r| r.time < start);
        let hi = self.records.partition_point(|r| r.time < end);
        &self.records[lo..hi]
    }
}
