//! A replicating validator node driven one tick at a time.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contracts::{Receipt, WorldState};
use crate::crypto::{Address, KeyPair};

use super::block::{propose_block, validate_block, Block, Executed, ValidatorSet};
use super::chain::ChainView;
use super::tx::{verify_transaction, KeyRegistry, Transaction};

/// Heights of post-block world state kept for fork handling.
pub const STATE_WINDOW: u64 = 64;

/// Ticks without a newly adopted block before a node asks a peer for its
/// chain.
pub const SYNC_INTERVAL: u64 = 3;

/// Sender id used for messages from clients outside the validator set.
pub const CLIENT: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MessageBody {
    BlockAnnounce(Block),
    TxSubmit { tx: Transaction, submitted_at: u64 },
    ChainRequest { from_height: u64 },
    ChainResponse { blocks: Vec<Block> },
}

impl MessageBody {
    pub fn is_announce(&self) -> bool {
        matches!(self, MessageBody::BlockAnnounce(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMessage {
    pub from: usize,
    pub to: usize,
    pub body: MessageBody,
    pub deliver_at_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recipient {
    All,
    Node(usize),
}

/// A message leaving a node; the network assigns the delivery tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: Recipient,
    pub body: MessageBody,
}

/// Parameters shared by every node of a network.
#[derive(Debug)]
pub struct Consensus {
    pub vset: ValidatorSet,
    pub registry: KeyRegistry,
    pub genesis: Block,
}

#[derive(Debug, Clone)]
struct Pending {
    tx: Transaction,
    submitted_at: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeStats {
    pub proposed: u64,
    pub adopted: u64,
    pub reorgs: u64,
    pub dropped_messages: u64,
}

#[derive(Debug)]
pub struct Node {
    pub id: usize,
    key: Option<KeyPair>,
    consensus: Arc<Consensus>,
    blocks: Vec<Block>,
    receipts: Vec<Vec<Receipt>>,
    states: BTreeMap<u64, WorldState>,
    mempool: BTreeMap<(Address, u64), Pending>,
    last_proposal: Option<u64>,
    last_progress: u64,
    pub stats: NodeStats,
}

impl Node {
    pub fn new(id: usize, key: Option<KeyPair>, consensus: Arc<Consensus>) -> Self {
        let genesis = consensus.genesis.clone();
        Self {
            id,
            key,
            consensus,
            blocks: vec![genesis],
            receipts: vec![Vec::new()],
            states: BTreeMap::from([(0, WorldState::new())]),
            mempool: BTreeMap::new(),
            last_proposal: None,
            last_progress: 0,
            stats: NodeStats::default(),
        }
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain holds genesis")
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &WorldState {
        &self.states[&self.tip().height()]
    }

    pub fn view(&self) -> ChainView<'_> {
        ChainView {
            blocks: &self.blocks,
            receipts: &self.receipts,
            world: self.state(),
        }
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    /// Processes `inbox` in order, then proposes if this node is scheduled
    /// for the next height and has not proposed at `tick`.
    pub fn step(&mut self, inbox: Vec<NodeMessage>, tick: u64) -> Vec<Outgoing> {
        let mut out = Vec::new();
        let before = self.stats.adopted;
        for msg in inbox {
            debug_assert!(msg.deliver_at_tick <= tick);
            self.handle(msg, &mut out);
        }
        self.maybe_propose(tick, &mut out);
        if self.stats.adopted != before {
            self.last_progress = tick;
        } else {
            self.maybe_sync(tick, &mut out);
        }
        out
    }

    fn handle(&mut self, msg: NodeMessage, out: &mut Vec<Outgoing>) {
        match msg.body {
            MessageBody::TxSubmit { tx, submitted_at } => {
                let fresh = tx.nonce >= self.state().nonce(&tx.sender);
                if fresh && verify_transaction(&tx, &self.consensus.registry) {
                    self.mempool
                        .entry((tx.sender, tx.nonce))
                        .or_insert(Pending { tx, submitted_at });
                } else {
                    self.stats.dropped_messages += 1;
                }
            }
            MessageBody::BlockAnnounce(block) => self.on_announce(block, msg.from, out),
            MessageBody::ChainRequest { from_height } => {
                let from = from_height.max(1) as usize;
                if from < self.blocks.len() && msg.from != CLIENT {
                    out.push(Outgoing {
                        to: Recipient::Node(msg.from),
                        body: MessageBody::ChainResponse {
                            blocks: self.blocks[from..].to_vec(),
                        },
                    });
                }
            }
            MessageBody::ChainResponse { blocks } => self.on_chain(blocks, out),
        }
    }

    fn has_block(&self, block: &Block) -> bool {
        self.blocks
            .get(block.height() as usize)
            .is_some_and(|b| b.hash() == block.hash())
    }

    fn attaches_at(&self, block: &Block) -> bool {
        let h = block.height();
        h >= 1
            && self
                .blocks
                .get(h as usize - 1)
                .is_some_and(|parent| parent.hash() == block.header.prev_hash)
    }

    fn on_announce(&mut self, block: Block, from: usize, out: &mut Vec<Outgoing>) {
        if self.has_block(&block) {
            return;
        }
        if self.attaches_at(&block) {
            let fork = block.height();
            self.consider_chain(fork, vec![block], out);
        } else if block.height() > self.tip().height() && from != CLIENT {
            let from_height = self.tip().height().saturating_sub(STATE_WINDOW - 1).max(1);
            out.push(Outgoing {
                to: Recipient::Node(from),
                body: MessageBody::ChainRequest { from_height },
            });
        } else {
            self.stats.dropped_messages += 1;
        }
    }

    fn on_chain(&mut self, blocks: Vec<Block>, out: &mut Vec<Outgoing>) {
        let Some(start) = blocks.iter().position(|b| !self.has_block(b)) else {
            return;
        };
        if !self.attaches_at(&blocks[start]) {
            self.stats.dropped_messages += 1;
            return;
        }
        let fork = blocks[start].height();
        self.consider_chain(fork, blocks[start..].to_vec(), out);
    }

    /// Longest chain wins, ties go to the lower tip hash. `candidate` holds
    /// consecutive blocks starting at height `fork`, whose parent is ours.
    fn consider_chain(&mut self, fork: u64, candidate: Vec<Block>, out: &mut Vec<Outgoing>) {
        let Some(base) = self.states.get(&(fork - 1)) else {
            self.stats.dropped_messages += 1;
            return;
        };
        let c = &self.consensus;
        let mut executed: Vec<Executed> = Vec::new();
        for block in &candidate {
            let (parent, state) = match executed.last() {
                Some(e) => (&e.block, &e.state),
                None => (&self.blocks[fork as usize - 1], base),
            };
            match validate_block(parent, state, block, &c.vset, &c.registry) {
                Ok(e) => executed.push(e),
                Err(_) => {
                    self.stats.dropped_messages += 1;
                    break;
                }
            }
        }
        let Some(new_tip) = executed.last() else {
            return;
        };
        let (ours, theirs) = (self.tip(), &new_tip.block);
        let better = theirs.height() > ours.height() || (theirs.height() == ours.height() && theirs.hash() < ours.hash());
        if !better {
            return;
        }
        if (fork as usize) < self.blocks.len() {
            self.stats.reorgs += 1;
        }
        let orphaned: Vec<Block> = self.blocks.drain(fork as usize..).collect();
        self.receipts.truncate(fork as usize);
        self.states.retain(|h, _| *h < fork);
        for block in &orphaned {
            for tx in &block.transactions {
                self.mempool.entry((tx.sender, tx.nonce)).or_insert(Pending {
                    tx: tx.clone(),
                    submitted_at: block.header.tick.saturating_sub(1),
                });
            }
        }
        for e in executed {
            out.push(Outgoing {
                to: Recipient::All,
                body: MessageBody::BlockAnnounce(e.block.clone()),
            });
            self.adopt(e.block, e.state, e.receipts);
        }
    }

    fn adopt(&mut self, block: Block, state: WorldState, receipts: Vec<Receipt>) {
        let height = block.height();
        self.blocks.push(block);
        self.receipts.push(receipts);
        self.states.insert(height, state);
        self.states.retain(|h, _| h + STATE_WINDOW > height);
        let world = &self.states[&height];
        self.mempool.retain(|(sender, nonce), _| *nonce >= world.nonce(sender));
        self.stats.adopted += 1;
    }

    /// Pulls from a rotating peer when no block has arrived for a while, so
    /// lost announcements cannot stall a node for good.
    fn maybe_sync(&mut self, tick: u64, out: &mut Vec<Outgoing>) {
        let n = self.consensus.vset.len();
        if n < 2 || tick < self.last_progress + SYNC_INTERVAL {
            return;
        }
        self.last_progress = tick;
        let peer = (self.id + 1 + (tick as usize % (n - 1))) % n;
        out.push(Outgoing {
            to: Recipient::Node(peer),
            body: MessageBody::ChainRequest {
                from_height: self.tip().height(),
            },
        });
    }

    fn maybe_propose(&mut self, tick: u64, out: &mut Vec<Outgoing>) {
        let Some(key) = &self.key else { return };
        let tip = self.tip();
        if self.consensus.vset.scheduled(tip.height() + 1) != key.address()
            || tick <= tip.header.tick
            || self.last_proposal == Some(tick)
        {
            return;
        }
        let pending: Vec<Transaction> = self
            .mempool
            .values()
            .filter(|p| p.submitted_at < tick)
            .map(|p| p.tx.clone())
            .collect();
        let c = &self.consensus;
        let executed = propose_block(tip, self.state(), &pending, key, &c.vset, &c.registry, tick)
            .expect("schedule checked above");
        self.last_proposal = Some(tick);
        self.stats.proposed += 1;
        out.push(Outgoing {
            to: Recipient::All,
            body: MessageBody::BlockAnnounce(executed.block.clone()),
        });
        self.adopt(executed.block, executed.state, executed.receipts);
    }
}

/// Functional form of [`Node::step`].
pub fn node_step(mut node: Node, inbox: Vec<NodeMessage>, tick: u64) -> (Node, Vec<Outgoing>) {
    let out = node.step(inbox, tick);
    (node, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::genesis::{genesis_block, GenesisAccount, GenesisConfig};

    fn single() -> Node {
        let key = KeyPair::from_seed(&[1; 32]).unwrap();
        let config = GenesisConfig {
            validators: vec![key.address()],
            oracle: key.address(),
            accounts: vec![GenesisAccount {
                label: "v0".into(),
                address: key.address(),
                public_key: key.public(),
            }],
        };
        let consensus = Arc::new(Consensus {
            vset: config.validator_set().unwrap(),
            registry: config.registry().unwrap(),
            genesis: genesis_block(&config),
        });
        Node::new(0, Some(key), consensus)
    }

    #[test]
    fn single_validator_grows_one_block_per_tick() {
        let mut node = single();
        for tick in 1..=5 {
            let out = node.step(vec![], tick);
            assert_eq!(out.len(), 1);
            node.step(vec![], tick);
            assert_eq!(node.tip().height(), tick);
        }
    }
}
