//! Offline hyperparameter search: a Gaussian-process surrogate with
//! expected-improvement acquisition and the two-stage profiling procedure.

mod gp;
mod linalg;
mod optimize;
mod profile;

pub use gp::{expected_improvement, normal_cdf, normal_pdf, GpConfig, GpSurrogate};
pub use optimize::{latin_hypercube, optimize, optimize_unit, EiConfig, Observation, OptimizeResult, SearchBox};
pub use profile::{
    offline_profile, profile_two_stage, read_profile, write_profile, ProfileConfig, ProfileResult, ProfileTrial,
    TrainingSetup,
};
