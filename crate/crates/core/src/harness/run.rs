//! The scenario scheduler. Per tick: prosumers and scripted actors act on
//! node 0's view, then the oracle, then every node steps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::crypto::{Address, KeyPair};
use crate::ledger::block::Block;
use crate::ledger::genesis::{GenesisAccount, GenesisConfig, GenesisError};
use crate::ledger::network::Network;
use crate::ledger::store::write_ledger;
use crate::ledger::tx::Transaction;
use crate::prosumer::{load_traces, Environment, Prosumer, ProsumerState, Trace, TraceError};

use super::actors::{Aggregator, DrMember, Dso, MarketOperator, Note, OracleAgent, VppOperator};
use super::config::{keys, ConfigError, ScenarioConfig};
use super::index::ChainIndex;
use super::report::{build_report, write_csvs, ReportBundle};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Traces(#[from] TraceError),
    #[error(transparent)]
    Genesis(#[from] GenesisError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub genesis: GenesisConfig,
    /// The chain adopted by most nodes at the end of the run.
    pub blocks: Vec<Block>,
    pub report: ReportBundle,
}

/// Genesis for `config` under `seed`: validators, oracle, scripted actors
/// and one account per prosumer.
pub fn build_genesis(config: &ScenarioConfig, seed: u64) -> GenesisConfig {
    let account = |label: String, key: &KeyPair| GenesisAccount {
        label,
        address: key.address(),
        public_key: key.public(),
    };
    let validators: Vec<KeyPair> = (0..config.validators).map(|i| keys::validator(seed, i)).collect();
    let mut accounts: Vec<GenesisAccount> = validators
        .iter()
        .enumerate()
        .map(|(i, k)| account(format!("validator-{i}"), k))
        .collect();
    accounts.push(account("oracle".into(), &keys::oracle(seed)));
    accounts.push(account("aggregator".into(), &keys::aggregator(seed)));
    accounts.push(account("dso".into(), &keys::dso(seed)));
    accounts.push(account("market-operator".into(), &keys::market_operator(seed)));
    accounts.push(account("vpp-operator".into(), &keys::vpp_operator(seed)));
    for (i, p) in config.prosumers.iter().enumerate() {
        accounts.push(account(format!("prosumer:{}", p.id), &keys::prosumer(seed, i, p)));
    }
    GenesisConfig {
        validators: validators.iter().map(|k| k.address()).collect(),
        oracle: keys::oracle(seed).address(),
        accounts,
    }
}

/// Runs `config` with `traces` under `seed`.
pub fn run(config: &ScenarioConfig, traces: &BTreeMap<String, Trace>, seed: u64) -> Result<RunOutput, RunError> {
    config.validate(traces)?;
    let genesis = build_genesis(config, seed);
    let validator_keys = (0..config.validators).map(|i| keys::validator(seed, i)).collect();
    let mut net = Network::new(&genesis, validator_keys, config.network.clone(), seed)?;

    let total = config.total_slots();
    let prosumers: Vec<Prosumer> = config
        .prosumers
        .iter()
        .enumerate()
        .map(|(i, p)| Prosumer {
            config: p.clone(),
            key: keys::prosumer(seed, i, p),
            trace: Trace {
                consumption_wh: traces[&p.id].consumption_wh[..total as usize].to_vec(),
                generation_wh: traces[&p.id].generation_wh[..total as usize].to_vec(),
            },
        })
        .collect();
    let mut states = vec![ProsumerState::default(); prosumers.len()];
    let meters: Vec<Address> = prosumers.iter().map(|p| Address::for_contract(&p.address(), 0)).collect();

    let oracle_key = keys::oracle(seed);
    let oracle = oracle_key.address();
    let mut oracle_agent = OracleAgent::new(oracle_key);
    let mut market_op = config
        .scenario
        .market()
        .then(|| MarketOperator::new(keys::market_operator(seed), oracle, config.order_lead, total));
    let mut vpp_op = config
        .scenario
        .vpp()
        .then(|| VppOperator::new(keys::vpp_operator(seed), oracle, config.vpp_services.clone()));
    let mut aggregator = config.scenario.demand_response().then(|| {
        let members = prosumers
            .iter()
            .zip(&meters)
            .map(|(p, meter)| DrMember {
                prosumer: p.address(),
                meter: *meter,
                flex_capacity_wh: p.config.flex_capacity_wh,
                flex_price: p.config.flex_price,
                contract: None,
            })
            .collect();
        Aggregator::new(
            keys::aggregator(seed),
            oracle,
            config.slots_per_day,
            members,
            config.congestion_events.clone(),
        )
    });
    let mut dso = Dso::new(keys::dso(seed), oracle, meters, config.slots_per_day, total, config.forecasts);
    let env = Environment {
        market: market_op.as_ref().map(|m| m.planned_market()),
        vpp: vpp_op.as_ref().map(|v| v.planned_vpp()),
        order_lead: config.order_lead,
    };

    let mut index = ChainIndex::default();
    let mut notes: Vec<Note> = Vec::new();
    for tick in 0..config.total_ticks() {
        let mut submitted: Vec<Transaction> = Vec::new();
        {
            let view = net.nodes[0].view();
            index.update(&view, &oracle);
            for (p, state) in prosumers.iter().zip(states.iter_mut()) {
                let (next, txs) = p.step(state, tick, &view, &env);
                *state = next;
                submitted.extend(txs);
            }
            if let Some(m) = market_op.as_mut() {
                submitted.extend(m.step(tick, &view));
            }
            submitted.extend(dso.step(tick, &mut notes));
            if let Some(a) = aggregator.as_mut() {
                submitted.extend(a.step(tick, &view, &index, &mut notes));
            }
            if let Some(v) = vpp_op.as_mut() {
                submitted.extend(v.step(tick, &view, &index, &mut notes));
            }
            submitted.extend(oracle_agent.step(&view, &index));
        }
        for tx in submitted {
            net.submit(tx, tick);
        }
        net.step(tick);
    }

    let blocks = net.canonical_chain().to_vec();
    // Final observation so the mirrors see the whole chain.
    let node = net
        .nodes
        .iter()
        .find(|n| n.tip().hash() == blocks.last().expect("genesis").hash())
        .expect("canonical chain belongs to a node");
    let view = node.view();
    for (p, state) in prosumers.iter().zip(states.iter_mut()) {
        p.observe(state, &view);
    }
    if let Some(a) = &aggregator {
        if a.outstanding() > 0 {
            notes.push(Note {
                tick: config.total_ticks(),
                actor: "aggregator".into(),
                message: format!("{} campaigns or orders unfinished at end of run", a.outstanding()),
            });
        }
    }
    if let Some(v) = &vpp_op {
        if v.outstanding() > 0 {
            notes.push(Note {
                tick: config.total_ticks(),
                actor: "vpp-operator".into(),
                message: format!("{} services unfinished at end of run", v.outstanding()),
            });
        }
    }
    let report = build_report(config, seed, &genesis, &blocks, &prosumers, &states, &net, notes)
        .expect("a chain adopted by a node replays");
    Ok(RunOutput {
        genesis,
        blocks,
        report,
    })
}

/// Loads `config_path`, runs it and writes `ledger.bin`, `genesis.json`,
/// `report.json` and CSV tables into `out_dir`. `seed` overrides the
/// config's seed.
pub fn run_to_dir(config_path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<RunOutput, RunError> {
    let config = ScenarioConfig::load(config_path)?;
    let traces = load_traces(&config.traces)?;
    let seed = seed.unwrap_or(config.seed);
    let output = run(&config, &traces, seed)?;
    let io = |path: PathBuf| move |source| RunError::Output { path, source };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir.to_path_buf()))?;
    let ledger = out_dir.join("ledger.bin");
    write_ledger(&ledger, &output.blocks).map_err(io(ledger))?;
    let genesis = out_dir.join("genesis.json");
    let text = serde_json::to_string_pretty(&output.genesis).expect("serializable");
    std::fs::write(&genesis, text + "\n").map_err(io(genesis))?;
    let report = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&output.report).expect("serializable");
    std::fs::write(&report, text + "\n").map_err(io(report))?;
    write_csvs(&output.report, out_dir).map_err(io(out_dir.to_path_buf()))?;
    Ok(output)
}
