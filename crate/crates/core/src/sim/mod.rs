//! Deterministic discrete-event cloud running the three case-study workloads.

mod engine;
pub mod metrics;
pub mod models;
pub mod scenario;
pub mod trace;

pub use engine::{run, run_once, SimOutput};
pub use metrics::{BillingClass, MetricsReport, WorkloadMetrics};
pub use scenario::{ModelSpec, Scenario, ScenarioError, ScriptedEvent, WorkloadSpec};
pub use trace::{notice_violations, Trace, TraceRow};
