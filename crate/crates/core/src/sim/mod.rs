//! Deterministic simulation of K edges and one cloud.

mod kernel;
mod metrics;
mod network;
mod policy;

pub use kernel::{run_simulation, CostModel, SimOutput, SimSettings};
pub use metrics::{
    accuracy_from_trace, read_trace_csv, stop_reason_name, write_metrics_csv, write_series_csv, write_summary,
    write_trace_csv, Breakdown, CycleRecord, MetricsReport, SeriesPoint, TraceRow,
};
pub use network::NetworkModel;
pub use policy::{PolicyConfig, PolicyKind, PolicySettings, Selection, StopMode, POLICY_NAMES};

use crate::error::Result;
use crate::model::StudentModel;
use crate::stream::FeatureStream;
use crate::types::RngSeed;

/// Builds the named preset, measuring `edgesync`'s mean cycle on the same
/// streams first when `edgesync_stf` has no cycle length configured.
pub fn resolve_policy(
    name: &str,
    policy_settings: &PolicySettings,
    streams: &[FeatureStream],
    initial: &StudentModel,
    settings: &SimSettings,
    seed: RngSeed,
) -> Result<PolicyConfig> {
    let k = settings.filter.upload_fraction;
    let mut policy = PolicyConfig::preset(name, k, policy_settings)?;
    if policy.needs_measured_cycle() {
        let reference = PolicyConfig::preset("edgesync", k, policy_settings)?;
        let quiet = SimSettings {
            record_trace: false,
            ..settings.clone()
        };
        let out = run_simulation(streams, initial, &reference, &quiet, seed)?;
        log::info!("{name}: using edgesync's mean cycle of {:.3} s", out.report.mean_cycle_s);
        policy.fixed_cycle_s = Some(out.report.mean_cycle_s.max(settings.costs.idle_wait_s));
    }
    Ok(policy)
}
