//! Proof-of-authority ledger, energy smart contracts and oracle services
//! for simulating blockchain-managed smart grids.
//!
//! Layers, bottom up:
//!
//! - [`codec`] and [`crypto`]: canonical bytes, hashing, keys.
//! - [`ledger`]: transactions, blocks, validator nodes, the simulated
//!   network and the ledger file.
//! - [`contracts`]: meter, demand-response, market and VPP contracts.
//! - [`oracle`]: forecasting, market clearing, flexibility selection,
//!   coalition formation and baselines, plus the request/response loop.
//! - [`prosumer`]: trace loading and prosumer agents.
//! - [`harness`]: scenario configuration, runs, verification and audit.

pub mod codec;
pub mod contracts;
pub mod crypto;
pub mod ledger;
pub mod oracle;
pub mod prosumer;
pub mod harness;
