//! Simulated prosumers: trace ingestion and the per-tick agent.

pub mod agent;
pub mod traces;

pub use agent::{
    prosumer_step, AssetParams, Compliance, Earnings, Environment, Obligation, Prosumer, ProsumerConfig,
    ProsumerState, Strategy,
};
pub use traces::{load_traces, parse_traces, Trace, TraceError};
