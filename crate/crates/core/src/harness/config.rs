//! Scenario configuration: JSON shape, key derivation and semantic checks.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contracts::dr::Direction;
use crate::contracts::meter::MAX_ABS_ENERGY_WH;
use crate::contracts::vpp::ServiceSpec;
use crate::contracts::MAX_RATE;
use crate::crypto::{derive_seed, KeyPair};
use crate::ledger::network::NetworkConfig;
use crate::prosumer::{ProsumerConfig, Trace};

/// JSON Schema describing [`ScenarioConfig`], shipped with the crate.
pub const SCHEMA: &str = include_str!("../../schema/scenario.schema.json");

const MAX_VALIDATORS: usize = 64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Dr,
    P2p,
    Vpp,
    All,
}

impl ScenarioKind {
    pub fn market(self) -> bool {
        matches!(self, ScenarioKind::P2p | ScenarioKind::All)
    }

    pub fn demand_response(self) -> bool {
        matches!(self, ScenarioKind::Dr | ScenarioKind::All)
    }

    pub fn vpp(self) -> bool {
        matches!(self, ScenarioKind::Vpp | ScenarioKind::All)
    }
}

/// A congestion point signalled by the DSO at `tick`, needing
/// `required_flex_wh` per slot over `[start_slot, end_slot)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CongestionEvent {
    pub tick: u64,
    pub congestion_point: String,
    pub required_flex_wh: u64,
    pub start_slot: u64,
    pub end_slot: u64,
    #[serde(default = "reduce")]
    pub direction: Direction,
    /// Milli-currency per kWh of shortfall.
    #[serde(default)]
    pub penalty_rate: u64,
}

fn reduce() -> Direction {
    Direction::Reduce
}

/// A grid service the VPP operator procures a coalition for at `tick`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VppServiceRequest {
    pub tick: u64,
    pub service: ServiceSpec,
}

fn default_validators() -> usize {
    4
}

fn default_order_lead() -> u64 {
    4
}

fn default_drain_ticks() -> u64 {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub slots_per_day: u64,
    pub days: u64,
    #[serde(default = "default_validators")]
    pub validators: usize,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Trace CSV, relative to the config file.
    pub traces: PathBuf,
    pub prosumers: Vec<ProsumerConfig>,
    #[serde(default)]
    pub congestion_events: Vec<CongestionEvent>,
    #[serde(default)]
    pub vpp_services: Vec<VppServiceRequest>,
    /// The DSO requests a day-ahead forecast per prosumer at each day start.
    #[serde(default)]
    pub forecasts: bool,
    /// Slots between order submission and delivery.
    #[serde(default = "default_order_lead")]
    pub order_lead: u64,
    /// Extra ticks after the last slot for settlements to land.
    #[serde(default = "default_drain_ticks")]
    pub drain_ticks: u64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn total_slots(&self) -> u64 {
        self.slots_per_day * self.days
    }

    pub fn total_ticks(&self) -> u64 {
        self.total_slots() + self.drain_ticks
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads the config and resolves `traces` against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_json(&text)?;
        if config.traces.is_relative() {
            if let Some(dir) = path.parent() {
                config.traces = dir.join(&config.traces);
            }
        }
        Ok(config)
    }

    /// Semantic checks that the JSON shape cannot express.
    pub fn validate(&self, traces: &BTreeMap<String, Trace>) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.slots_per_day == 0 || self.days == 0 {
            return bad("slots_per_day and days must be positive".into());
        }
        if self.validators == 0 || self.validators > MAX_VALIDATORS {
            return bad(format!("validators must be in 1..={MAX_VALIDATORS}"));
        }
        if !(0.0..1.0).contains(&self.network.drop_rate) {
            return bad(format!("drop_rate {} outside [0, 1)", self.network.drop_rate));
        }
        if self.prosumers.is_empty() {
            return bad("at least one prosumer is required".into());
        }
        let total = self.total_slots();
        let mut ids = BTreeSet::new();
        for p in &self.prosumers {
            if p.id.is_empty() || !ids.insert(p.id.as_str()) {
                return bad(format!("prosumer id {:?} empty or repeated", p.id));
            }
            let Some(trace) = traces.get(&p.id) else {
                return bad(format!("no trace for prosumer {}", p.id));
            };
            if (trace.len() as u64) < total {
                return bad(format!(
                    "trace of {} has {} slots, run needs {total}",
                    p.id,
                    trace.len()
                ));
            }
            let in_range = |v: i64| (0..=MAX_RATE as i64).contains(&v);
            if !in_range(p.bid_price) || !in_range(p.ask_price) || p.flex_price > MAX_RATE {
                return bad(format!("prices of {} outside [0, {MAX_RATE}]", p.id));
            }
            if p.flex_capacity_wh > MAX_ABS_ENERGY_WH as u64 {
                return bad(format!("flex_capacity_wh of {} too large", p.id));
            }
            if let Some(a) = &p.asset {
                if a.capacity_wh_per_slot == 0 || a.capacity_wh_per_slot > MAX_ABS_ENERGY_WH as u64 {
                    return bad(format!("asset capacity of {} out of range", p.id));
                }
                if a.cost_rate > MAX_RATE {
                    return bad(format!("asset cost_rate of {} out of range", p.id));
                }
            }
        }
        if !self.scenario.demand_response() && !self.congestion_events.is_empty() {
            return bad("congestion_events need scenario dr or all".into());
        }
        if !self.scenario.vpp() && !self.vpp_services.is_empty() {
            return bad("vpp_services need scenario vpp or all".into());
        }
        for (i, e) in self.congestion_events.iter().enumerate() {
            if e.start_slot >= e.end_slot || e.end_slot > total {
                return bad(format!("congestion event {i}: window outside the run"));
            }
            if e.start_slot <= e.tick + 1 {
                return bad(format!("congestion event {i}: window must start after tick + 1"));
            }
            if e.required_flex_wh == 0 || e.penalty_rate > MAX_RATE {
                return bad(format!("congestion event {i}: bad amount or rate"));
            }
        }
        let mut service_ids = BTreeSet::new();
        for (i, r) in self.vpp_services.iter().enumerate() {
            let s = &r.service;
            if !service_ids.insert(s.service_id) {
                return bad(format!("vpp service id {} repeated", s.service_id));
            }
            if s.dispatch_slots == 0 || s.end_slot() > total || s.start_slot <= r.tick + 1 {
                return bad(format!("vpp service {i}: window must lie after tick + 1 and inside the run"));
            }
            if s.price_rate > MAX_RATE || s.penalty_rate > MAX_RATE {
                return bad(format!("vpp service {i}: rate out of range"));
            }
        }
        Ok(())
    }
}

/// Stable key material for every harness role.
pub mod keys {
    use super::*;

    pub fn validator(seed: u64, index: usize) -> KeyPair {
        key(seed, "validator", index as u64)
    }

    pub fn oracle(seed: u64) -> KeyPair {
        key(seed, "oracle", 0)
    }

    pub fn aggregator(seed: u64) -> KeyPair {
        key(seed, "aggregator", 0)
    }

    pub fn dso(seed: u64) -> KeyPair {
        key(seed, "dso", 0)
    }

    pub fn market_operator(seed: u64) -> KeyPair {
        key(seed, "market-operator", 0)
    }

    pub fn vpp_operator(seed: u64) -> KeyPair {
        key(seed, "vpp-operator", 0)
    }

    /// The prosumer's own `account_seed` wins over the run seed.
    pub fn prosumer(seed: u64, index: usize, config: &ProsumerConfig) -> KeyPair {
        match config.account_seed {
            Some(own) => key(own, "prosumer-account", 0),
            None => key(seed, "prosumer", index as u64),
        }
    }

    fn key(seed: u64, role: &str, index: u64) -> KeyPair {
        KeyPair::from_seed(&derive_seed(seed, role, index)).expect("32-byte seed")
    }
}
