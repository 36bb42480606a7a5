//! Declarative scenarios: TOML input, the run pipeline and JSON certificates.

mod certificate;
mod config;
mod run;

pub use certificate::{
    compare, Certificate, CheckResult, CompareError, ConservationSummary, FieldDiff, FluxEntry,
    OracleSummary, RadiationSummary, SpectrumSummary, COMPARE_NOISE_FLOOR,
};
pub use config::*;
pub use run::{run, source_extent, RunOptions, RunOutput, Stages};
