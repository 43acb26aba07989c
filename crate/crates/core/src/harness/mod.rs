//! Scenarios, reference paths, the closed-loop runner, metrics and sweeps.

pub mod check;
pub mod metrics;
pub mod reference;
pub mod runner;
pub mod scenario;
pub mod sweep;
pub mod trace;

pub use metrics::{interaction_summary, rmse, InteractionSummary, RunMetrics};
pub use reference::{generate_reference, PathKind, RefPose, ReferenceTrajectory};
pub use runner::{run_scenario, RunOutput};
pub use scenario::{builtin_config, profile_defaults, Profile, RunConfig, Scenario};
pub use sweep::{run_sweep, summarize, SweepRow, SweepSpec, SweepSummary};
pub use trace::{TraceRow, TRACE_SCHEMA_VERSION};
