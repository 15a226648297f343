use crate::error::{Error, Result};

/// Analytic link model; transfers cost `bytes * 8 / bandwidth + rtt`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkModel {
    /// Per-edge uplink, bits per second.
    pub uplink_bps: f64,
    pub downlink_bps: f64,
    pub rtt_s: f64,
    /// One uploaded record: features, prediction and index.
    pub bytes_per_sample: f64,
    pub bytes_per_param: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            uplink_bps: 1e6,
            downlink_bps: 1e7,
            rtt_s: 0.05,
            bytes_per_sample: 2275.0,
            bytes_per_param: 4.0,
        }
    }
}

impl NetworkModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.uplink_bps, self.downlink_bps, self.rtt_s, self.bytes_per_sample, self.bytes_per_param];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("network parameters must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn upload_bytes(&self, samples: usize) -> f64 {
        samples as f64 * self.bytes_per_sample
    }

    /// Zero when nothing is sent.
    pub fn upload_seconds(&self, samples: usize) -> f64 {
        if samples == 0 {
            0.0
        } else {
            self.upload_bytes(samples) * 8.0 / self.uplink_bps + self.rtt_s
        }
    }

    pub fn download_bytes(&self, params: usize) -> f64 {
        params as f64 * self.bytes_per_param
    }

    pub fn download_seconds(&self, params: usize) -> f64 {
        self.download_bytes(params) * 8.0 / self.downlink_bps + self.rtt_s
    }
}
