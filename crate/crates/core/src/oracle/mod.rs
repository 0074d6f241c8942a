//! Off-chain oracle: pure computation services plus the loop that answers
//! on-chain requests.

use thiserror::Error;

pub mod baseline;
pub mod clearing;
pub mod coalition;
pub mod flex;
pub mod forecast;
pub mod service;
pub mod wire;

pub use baseline::compute_baseline;
pub use clearing::{clear_market, BookOrder};
pub use coalition::{form_coalition, CoalitionPlan};
pub use flex::{select_flexibility, Candidate, FlexSelection};
pub use forecast::{forecast, Horizon};
pub use service::{oracle_step, OracleRequestRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("insufficient history: need {needed}, have {got}")]
    InsufficientHistory { needed: usize, got: usize },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid request: {0}")]
    Invalid(String),
}
