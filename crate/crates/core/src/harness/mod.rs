//! Configuration, end-to-end runs, trace verification and parameter sweeps.

mod config;
mod run;
mod sweep;
mod trace;
mod verify;

pub use config::{Outputs, RunConfig, NECESSARY_SCAN_MAX_STEPS};
pub use run::{
    collective_check, run, run_and_write, run_pipeline, CertificateSummary, CollectiveCheck, FixedCostReport, Ratios,
    RunArtifacts, RunOutcome, RunReport,
};
pub use sweep::{grid, instantiate, sweep, to_csv, Axis, CellStatus, SweepRow};
pub use trace::{StepRecord, Trace, TraceHeader, TraceRecord, TraceSummary};
pub use verify::{verify_file, verify_trace, ClassOutcome, VerifyReport};
