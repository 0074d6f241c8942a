//! Scenario orchestration: configuration, the per-tick scheduler, reports,
//! ledger verification and settlement audit.

pub mod actors;
pub mod audit;
pub mod config;
pub mod eval;
pub mod index;
pub mod report;
pub mod run;
pub mod verify;

pub use audit::{audit_blocks, audit_file, AuditError, AuditReport, Discrepancy};
pub use config::{keys, CongestionEvent, ScenarioConfig, ScenarioKind, VppServiceRequest};
pub use eval::{oracle_eval, EvalError};
pub use report::ReportBundle;
pub use run::{build_genesis, run, run_to_dir, RunError, RunOutput};
pub use verify::{verify_bytes, verify_files, VerifyReport};
