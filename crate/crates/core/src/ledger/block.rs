//! Blocks, the validator schedule, block production and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical_struct;
use crate::codec::{Canonical, CodecError, Writer};
use crate::contracts::{apply_transaction, ExecContext, Receipt, WorldState};
use crate::crypto::{sha256, sha256_concat, Address, Hash32, KeyPair, Signature};

use super::tx::{verify_transaction, KeyRegistry, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Hash32,
    pub tick: u64,
    pub authority: Address,
    /// Hash of the canonical transaction list.
    pub tx_root: Hash32,
    pub state_root: Hash32,
}
canonical_struct!(BlockHeader { height, prev_hash, tick, authority, tx_root, state_root });

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    /// Authority signature over the canonical header.
    pub signature: Signature,
    pub transactions: Vec<Transaction>,
}
canonical_struct!(Block { header, signature, transactions });

pub fn tx_root(txs: &[Transaction]) -> Hash32 {
    let mut w = Writer::new();
    w.put_vec(txs);
    sha256(&w.into_bytes())
}

impl Block {
    pub fn height(&self) -> u64 {
        self.header.height
    }

    /// `sha256(canonical header || signature)`.
    pub fn hash(&self) -> Hash32 {
        sha256_concat(&[&self.header.to_canonical_bytes(), &self.signature.0])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidatorSetError {
    #[error("validator set is empty")]
    Empty,
    #[error("validator {0} listed twice")]
    Duplicate(Address),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorSet {
    validators: Vec<Address>,
}

impl ValidatorSet {
    pub fn new(validators: Vec<Address>) -> Result<Self, ValidatorSetError> {
        if validators.is_empty() {
            return Err(ValidatorSetError::Empty);
        }
        for (i, v) in validators.iter().enumerate() {
            if validators[..i].contains(v) {
                return Err(ValidatorSetError::Duplicate(*v));
            }
        }
        Ok(Self { validators })
    }

    pub fn validators(&self) -> &[Address] {
        &self.validators
    }

    pub fn len(&self) -> usize {
        self.validators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.validators.is_empty()
    }

    /// Round-robin by height.
    pub fn scheduled(&self, height: u64) -> Address {
        self.validators[(height % self.validators.len() as u64) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("wrong authority: expected {expected}, got {got}")]
    WrongAuthority { expected: Address, got: Address },
    #[error("bad prev hash")]
    BadPrevHash,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("bad signature")]
    BadSignature,
    #[error("bad state root")]
    BadStateRoot,
    #[error("bad transaction: {0}")]
    BadTx(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposeError {
    #[error("{got} is not scheduled for height {height} (expected {expected})")]
    NotScheduled { height: u64, expected: Address, got: Address },
    #[error("tick {tick} does not follow parent tick {parent}")]
    StaleTick { tick: u64, parent: u64 },
}

/// Result of executing a block's transactions on its parent state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Executed {
    pub block: Block,
    pub state: WorldState,
    pub receipts: Vec<Receipt>,
}

/// Builds and signs the next block. `pending` should be sorted by
/// `(sender, nonce)`; entries that fail signature or nonce checks are left
/// out.
pub fn propose_block(
    parent: &Block,
    parent_state: &WorldState,
    pending: &[Transaction],
    authority: &KeyPair,
    vset: &ValidatorSet,
    registry: &KeyRegistry,
    tick: u64,
) -> Result<Executed, ProposeError> {
    let height = parent.height() + 1;
    let expected = vset.scheduled(height);
    if authority.address() != expected {
        return Err(ProposeError::NotScheduled {
            height,
            expected,
            got: authority.address(),
        });
    }
    if tick <= parent.header.tick {
        return Err(ProposeError::StaleTick {
            tick,
            parent: parent.header.tick,
        });
    }
    let mut sorted: Vec<&Transaction> = pending.iter().collect();
    sorted.sort_by_key(|tx| (tx.sender, tx.nonce));
    let ctx = ExecContext { tick };
    let mut state = parent_state.clone();
    let mut included = Vec::new();
    let mut receipts = Vec::new();
    for tx in sorted {
        if included.last().is_some_and(|prev: &Transaction| (prev.sender, prev.nonce) == (tx.sender, tx.nonce)) {
            continue;
        }
        if !verify_transaction(tx, registry) {
            continue;
        }
        if let Ok(receipt) = apply_transaction(&mut state, tx, &ctx) {
            included.push(tx.clone());
            receipts.push(receipt);
        }
    }
    let header = BlockHeader {
        height,
        prev_hash: parent.hash(),
        tick,
        authority: expected,
        tx_root: tx_root(&included),
        state_root: state.root(),
    };
    let signature = authority.sign(&header.to_canonical_bytes());
    Ok(Executed {
        block: Block {
            header,
            signature,
            transactions: included,
        },
        state,
        receipts,
    })
}

/// Checks `block` as the child of `parent` and returns the executed result.
pub fn validate_block(
    parent: &Block,
    parent_state: &WorldState,
    block: &Block,
    vset: &ValidatorSet,
    registry: &KeyRegistry,
) -> Result<Executed, RejectReason> {
    let h = &block.header;
    if h.height != parent.height() + 1 || h.prev_hash != parent.hash() {
        return Err(RejectReason::BadPrevHash);
    }
    let expected = vset.scheduled(h.height);
    if h.authority != expected {
        return Err(RejectReason::WrongAuthority {
            expected,
            got: h.authority,
        });
    }
    if h.tick <= parent.header.tick {
        return Err(RejectReason::BadHeader(format!(
            "tick {} does not follow parent tick {}",
            h.tick, parent.header.tick
        )));
    }
    let key = registry.get(&h.authority).ok_or(RejectReason::BadSignature)?;
    if !key.verify(&h.to_canonical_bytes(), &block.signature) {
        return Err(RejectReason::BadSignature);
    }
    if h.tx_root != tx_root(&block.transactions) {
        return Err(RejectReason::BadTx("transaction root mismatch".into()));
    }
    let ctx = ExecContext { tick: h.tick };
    let mut state = parent_state.clone();
    let mut receipts = Vec::with_capacity(block.transactions.len());
    for (i, tx) in block.transactions.iter().enumerate() {
        if i > 0 {
            let prev = &block.transactions[i - 1];
            if (prev.sender, prev.nonce) >= (tx.sender, tx.nonce) {
                return Err(RejectReason::BadTx(format!("transaction {i} out of (sender, nonce) order")));
            }
        }
        if !verify_transaction(tx, registry) {
            return Err(RejectReason::BadTx(format!("transaction {i} signature invalid")));
        }
        let receipt =
            apply_transaction(&mut state, tx, &ctx).map_err(|e| RejectReason::BadTx(format!("transaction {i}: {e}")))?;
        receipts.push(receipt);
    }
    if state.root() != h.state_root {
        return Err(RejectReason::BadStateRoot);
    }
    Ok(Executed {
        block: block.clone(),
        state,
        receipts,
    })
}

/// Strict decode of a block frame.
pub fn decode_block(bytes: &[u8]) -> Result<Block, CodecError> {
    Block::from_canonical_bytes(bytes)
}
