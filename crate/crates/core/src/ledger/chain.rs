//! Full-chain replay and read-only chain views.

use thiserror::Error;

use crate::codec::Canonical;
use crate::contracts::meter::EnergyReading;
use crate::contracts::{Receipt, WorldState};
use crate::crypto::{Address, Hash32};

use super::block::{validate_block, Block, RejectReason, ValidatorSet};
use super::genesis::{genesis_block, GenesisConfig, GenesisError};
use super::tx::{KeyRegistry, Transaction, TxKind};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid genesis: {0}")]
    Genesis(#[from] GenesisError),
    #[error("chain is empty")]
    Empty,
    #[error("block 0 does not match the genesis configuration")]
    GenesisMismatch,
    #[error("block at height {height} rejected: {reason}")]
    Rejected { height: u64, reason: RejectReason },
}

impl ChainError {
    /// Height of the offending block, when one is identified.
    pub fn height(&self) -> Option<u64> {
        match self {
            ChainError::GenesisMismatch => Some(0),
            ChainError::Rejected { height, .. } => Some(*height),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Replay {
    pub world: WorldState,
    /// Receipts per block, aligned with the replayed blocks.
    pub receipts: Vec<Vec<Receipt>>,
    pub tip_hash: Hash32,
}

/// Validates every link and state root from genesis to tip.
pub fn replay_chain(blocks: &[Block], genesis: &GenesisConfig) -> Result<Replay, ChainError> {
    let vset = genesis.validator_set()?;
    let registry = genesis.registry()?;
    replay_with(blocks, genesis, &vset, &registry)
}

pub fn replay_with(
    blocks: &[Block],
    genesis: &GenesisConfig,
    vset: &ValidatorSet,
    registry: &KeyRegistry,
) -> Result<Replay, ChainError> {
    let first = blocks.first().ok_or(ChainError::Empty)?;
    if *first != genesis_block(genesis) {
        return Err(ChainError::GenesisMismatch);
    }
    let mut world = WorldState::new();
    let mut receipts = vec![Vec::new()];
    for pair in blocks.windows(2) {
        let executed = validate_block(&pair[0], &world, &pair[1], vset, registry).map_err(|reason| {
            ChainError::Rejected {
                height: pair[0].height() + 1,
                reason,
            }
        })?;
        world = executed.state;
        receipts.push(executed.receipts);
    }
    Ok(Replay {
        world,
        receipts,
        tip_hash: blocks.last().expect("non-empty").hash(),
    })
}

/// Read-only snapshot of a node's adopted chain.
#[derive(Debug, Clone, Copy)]
pub struct ChainView<'a> {
    pub blocks: &'a [Block],
    pub receipts: &'a [Vec<Receipt>],
    pub world: &'a WorldState,
}

impl<'a> ChainView<'a> {
    pub fn tip(&self) -> &'a Block {
        self.blocks.last().expect("chain holds genesis")
    }

    /// Committed transactions with their receipts and block tick, in chain
    /// order.
    pub fn transactions(&self) -> impl Iterator<Item = (&'a Block, &'a Transaction, &'a Receipt)> + 'a {
        self.blocks.iter().zip(self.receipts).flat_map(|(b, rs)| {
            b.transactions.iter().zip(rs).map(move |(tx, r)| (b, tx, r))
        })
    }

    /// Readings accepted by meter `meter`, in chain order.
    pub fn meter_readings(&self, meter: &Address) -> Vec<EnergyReading> {
        self.transactions()
            .filter(|(_, tx, r)| r.success && tx.kind == TxKind::MeterUpdate && tx.receiver == *meter)
            .filter_map(|(_, tx, _)| EnergyReading::from_canonical_bytes(&tx.payload).ok())
            .collect()
    }
}
