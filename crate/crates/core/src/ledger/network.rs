//! Deterministic message bus connecting simulated nodes.
//!
//! Messages are delivered in rounds within a tick until none are due, so a
//! zero-delay network settles completely before the tick ends. All
//! randomness (jitter, announce drops) comes from a seeded ChaCha stream.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{Hash32, KeyPair};

use super::block::Block;
use super::genesis::{genesis_block, GenesisConfig, GenesisError};
use super::node::{Consensus, MessageBody, Node, NodeMessage, Outgoing, Recipient, CLIENT};
use super::tx::Transaction;

/// Safety valve against message storms within one tick.
const MAX_ROUNDS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Base delivery delay in ticks.
    pub delay_ticks: u64,
    /// Extra delay drawn uniformly from `0..=jitter_ticks`.
    pub jitter_ticks: u64,
    /// Probability that a block announcement is lost.
    pub drop_rate: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            delay_ticks: 0,
            jitter_ticks: 0,
            drop_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

pub struct Network {
    pub nodes: Vec<Node>,
    config: NetworkConfig,
    rng: ChaCha8Rng,
    /// Keyed by (deliver_at_tick, sequence number).
    queue: BTreeMap<(u64, u64), NodeMessage>,
    seq: u64,
    pub stats: NetworkStats,
}

impl Network {
    /// One node per validator key, in genesis order.
    pub fn new(
        genesis: &GenesisConfig,
        validator_keys: Vec<KeyPair>,
        config: NetworkConfig,
        seed: u64,
    ) -> Result<Self, GenesisError> {
        let consensus = Arc::new(Consensus {
            vset: genesis.validator_set()?,
            registry: genesis.registry()?,
            genesis: genesis_block(genesis),
        });
        let nodes = validator_keys
            .into_iter()
            .enumerate()
            .map(|(id, key)| Node::new(id, Some(key), consensus.clone()))
            .collect();
        Ok(Self {
            nodes,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: BTreeMap::new(),
            seq: 0,
            stats: NetworkStats::default(),
        })
    }

    fn enqueue(&mut self, from: usize, to: usize, body: MessageBody, tick: u64) {
        self.stats.sent += 1;
        if body.is_announce() && self.config.drop_rate > 0.0 && self.rng.gen_bool(self.config.drop_rate.min(1.0)) {
            self.stats.dropped += 1;
            return;
        }
        let jitter = match self.config.jitter_ticks {
            0 => 0,
            j => self.rng.gen_range(0..=j),
        };
        let deliver_at_tick = tick + self.config.delay_ticks + jitter;
        self.queue.insert(
            (deliver_at_tick, self.seq),
            NodeMessage {
                from,
                to,
                body,
                deliver_at_tick,
            },
        );
        self.seq += 1;
    }

    fn route(&mut self, from: usize, out: Vec<Outgoing>, tick: u64) {
        for msg in out {
            match msg.to {
                Recipient::Node(to) => self.enqueue(from, to, msg.body, tick),
                Recipient::All => {
                    for to in (0..self.nodes.len()).filter(|&n| n != from) {
                        self.enqueue(from, to, msg.body.clone(), tick);
                    }
                }
            }
        }
    }

    /// Broadcasts a client transaction submitted at `tick` to every node.
    pub fn submit(&mut self, tx: Transaction, tick: u64) {
        for to in 0..self.nodes.len() {
            let body = MessageBody::TxSubmit {
                tx: tx.clone(),
                submitted_at: tick,
            };
            self.enqueue(CLIENT, to, body, tick);
        }
    }

    /// Runs all nodes for `tick`: every node steps once, then delivery
    /// rounds continue until no message is due.
    pub fn step(&mut self, tick: u64) {
        let mut first = true;
        for _ in 0..MAX_ROUNDS {
            let due: Vec<(u64, u64)> = self.queue.range(..(tick + 1, 0)).map(|(k, _)| *k).collect();
            if due.is_empty() && !first {
                return;
            }
            let mut inboxes: Vec<Vec<NodeMessage>> = vec![Vec::new(); self.nodes.len()];
            for key in due {
                let msg = self.queue.remove(&key).expect("key listed");
                self.stats.delivered += 1;
                inboxes[msg.to].push(msg);
            }
            for (id, inbox) in inboxes.into_iter().enumerate() {
                if inbox.is_empty() && !first {
                    continue;
                }
                let out = self.nodes[id].step(inbox, tick);
                self.route(id, out, tick);
            }
            first = false;
        }
    }

    pub fn tips(&self) -> Vec<Hash32> {
        self.nodes.iter().map(|n| n.tip().hash()).collect()
    }

    /// The chain adopted by the most nodes, ties to the longest then lowest
    /// tip hash.
    pub fn canonical_chain(&self) -> &[Block] {
        let mut best: Option<(usize, &Node)> = None;
        for n in &self.nodes {
            let votes = self.nodes.iter().filter(|m| m.tip().hash() == n.tip().hash()).count();
            let better = match best {
                None => true,
                Some((v, b)) => {
                    (votes, n.tip().height(), std::cmp::Reverse(n.tip().hash()))
                        > (v, b.tip().height(), std::cmp::Reverse(b.tip().hash()))
                }
            };
            if better {
                best = Some((votes, n));
            }
        }
        best.expect("at least one node").1.blocks()
    }

    pub fn pending_messages(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::genesis::GenesisAccount;

    fn network(n: u8, config: NetworkConfig) -> Network {
        let keys: Vec<KeyPair> = (1..=n).map(|i| KeyPair::from_seed(&[i; 32]).unwrap()).collect();
        let genesis = GenesisConfig {
            validators: keys.iter().map(|k| k.address()).collect(),
            oracle: keys[0].address(),
            accounts: keys
                .iter()
                .enumerate()
                .map(|(i, k)| GenesisAccount {
                    label: format!("validator-{i}"),
                    address: k.address(),
                    public_key: k.public(),
                })
                .collect(),
        };
        Network::new(&genesis, keys, config, 1).unwrap()
    }

    #[test]
    fn zero_delay_tips_equal_every_tick() {
        let mut net = network(4, NetworkConfig::default());
        for tick in 1..=10 {
            net.step(tick);
            let tips = net.tips();
            assert!(tips.iter().all(|t| *t == tips[0]));
            assert_eq!(net.nodes[0].tip().height(), tick);
        }
    }

    #[test]
    fn delayed_network_converges() {
        let cfg = NetworkConfig {
            delay_ticks: 2,
            ..Default::default()
        };
        let mut net = network(4, cfg);
        for tick in 1..=40 {
            net.step(tick);
        }
        for tick in 41..=50 {
            // Stop proposals from outrunning delivery by draining.
            net.step(tick);
        }
        let h = net.nodes.iter().map(|n| n.tip().height()).min().unwrap();
        assert!(h >= 15);
        for height in 0..=h as usize {
            let hashes: Vec<_> = net.nodes.iter().map(|n| n.blocks()[height].hash()).collect();
            assert!(hashes.iter().all(|x| *x == hashes[0]));
        }
    }

    #[test]
    fn lossy_network_recovers_via_chain_requests() {
        let cfg = NetworkConfig {
            delay_ticks: 1,
            jitter_ticks: 1,
            drop_rate: 0.3,
        };
        let mut net = network(4, cfg);
        for tick in 1..=60 {
            net.step(tick);
        }
        assert!(net.stats.dropped > 0);
        let min = net.nodes.iter().map(|n| n.tip().height()).min().unwrap();
        assert!(min >= 10, "chain stalled at {min}");
    }
}
