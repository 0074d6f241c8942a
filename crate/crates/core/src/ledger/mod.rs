//! Signed transactions, proof-of-authority blocks, replication and storage.

pub mod block;
pub mod chain;
pub mod genesis;
pub mod network;
pub mod node;
pub mod store;
pub mod tx;

pub use block::{propose_block, validate_block, Block, BlockHeader, RejectReason, ValidatorSet};
pub use chain::{replay_chain, ChainError, ChainView, Replay};
pub use genesis::{genesis_block, GenesisAccount, GenesisConfig};
pub use network::{Network, NetworkConfig};
pub use node::{node_step, MessageBody, Node, NodeMessage};
pub use store::{decode_ledger, encode_ledger, read_ledger, write_ledger, FrameError};
pub use tx::{sign_transaction, verify_transaction, KeyRegistry, Transaction, TxKind};
