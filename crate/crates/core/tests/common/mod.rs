//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use gridchain::codec::Canonical;
use gridchain::contracts::dr::SettleRequest;
use gridchain::harness::{keys, run, RunOutput, ScenarioConfig};
use gridchain::ledger::block::{propose_block, Block};
use gridchain::ledger::chain::replay_chain;
use gridchain::ledger::genesis::GenesisConfig;
use gridchain::ledger::tx::TxKind;
use gridchain::prosumer::{load_traces, Trace};

pub const FIXTURES: [&str; 4] = ["p2p", "dr", "vpp", "all"];

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_config(name: &str) -> PathBuf {
    fixture_dir(name).join("config.json")
}

pub fn load_fixture(name: &str) -> (ScenarioConfig, BTreeMap<String, Trace>) {
    let config = ScenarioConfig::load(&fixture_config(name)).expect("fixture config");
    let traces = load_traces(&config.traces).expect("fixture traces");
    (config, traces)
}

pub fn run_fixture(name: &str) -> RunOutput {
    let (config, traces) = load_fixture(name);
    run(&config, &traces, config.seed).expect("fixture run")
}

/// Rewrites the first DR settlement on `blocks` so that its first metered
/// value claims `extra_wh` more than the meter recorded, re-signs it with
/// the aggregator key and reseals that block and every later one.
/// Returns the forged chain and the height of the edited block.
pub fn forge_dr_settlement(blocks: &[Block], genesis: &GenesisConfig, seed: u64, extra_wh: i64) -> (Vec<Block>, u64) {
    let (height, index) = blocks
        .iter()
        .enumerate()
        .find_map(|(h, b)| {
            b.transactions
                .iter()
                .position(|tx| tx.kind == TxKind::DrSettle)
                .map(|i| (h, i))
        })
        .expect("chain holds a DR settlement");
    let mut forged: Vec<Block> = blocks[..height].to_vec();
    let mut state = replay_chain(&forged, genesis).expect("prefix replays").world;
    let vset = genesis.validator_set().unwrap();
    let registry = genesis.registry().unwrap();
    let aggregator = keys::aggregator(seed);
    for (h, original) in blocks.iter().enumerate().skip(height) {
        let mut txs = original.transactions.clone();
        if h == height {
            let tx = &mut txs[index];
            let mut req = SettleRequest::from_canonical_bytes(&tx.payload).unwrap();
            req.metered[0].energy_wh += extra_wh;
            tx.payload = req.to_canonical_bytes();
            *tx = tx.clone().sign(&aggregator).unwrap();
        }
        let authority = keys::validator(seed, h % vset.len());
        let parent = forged.last().unwrap();
        let executed = propose_block(parent, &state, &txs, &authority, &vset, &registry, original.header.tick)
            .expect("reseal");
        assert_eq!(executed.block.transactions.len(), txs.len(), "reseal kept every transaction");
        state = executed.state;
        forged.push(executed.block);
    }
    (forged, height as u64)
}
