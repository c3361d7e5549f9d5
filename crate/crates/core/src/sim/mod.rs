// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Deterministic discrete-event simulation of a full hierarchy.

pub mod engine;
pub mod oracle;
pub mod scenario;
pub mod trace;

pub use engine::{resolution, run, visit_periods, RunOutput, SimError, AUDIT_CHANNEL};
pub use oracle::{serial_oracle, OracleState};
pub use scenario::{corpus_scenario, workload_contention, ConfigError, Scenario};
pub use trace::{read_trace, write_trace, EventBody, TraceError, TraceEvent};
