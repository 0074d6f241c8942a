//! The prosumer agent: a pure step function over its own state and a chain
//! view. It meters, trades its forecast net position and follows DR orders
//! and VPP dispatches addressed to it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::Canonical;
use crate::contracts::dr::Direction;
use crate::contracts::market::{OrderSubmission, Side};
use crate::contracts::meter::EnergyReading;
use crate::contracts::vpp::AssetRegistration;
use crate::contracts::{ContractState, DeployBody};
use crate::crypto::{Address, KeyPair};
use crate::ledger::chain::ChainView;
use crate::ledger::tx::{Transaction, TxKind};

use super::traces::Trace;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid compliance {0:?}: expected a number or ratio in [0, 1]")]
pub struct ComplianceError(String);

/// Exact fraction in `[0, 1]`. JSON accepts a decimal number (`0.75`) or a
/// `"num/den"` string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Compliance {
    num: u64,
    den: u64,
}

impl Compliance {
    pub const FULL: Self = Self { num: 1, den: 1 };
    pub const NONE: Self = Self { num: 0, den: 1 };

    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0 && num <= den).then_some(Self { num, den })
    }

    /// `floor(amount × self)`.
    pub fn apply(&self, amount: u64) -> u64 {
        (amount as u128 * self.num as u128 / self.den as u128) as u64
    }
}

impl fmt::Display for Compliance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Compliance {
    type Err = ComplianceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ComplianceError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n = n.trim().parse().map_err(|_| bad())?;
            let d = d.trim().parse().map_err(|_| bad())?;
            return Self::new(n, d).ok_or_else(bad);
        }
        // Decimal literal, converted exactly.
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty() || frac.len() > 18 {
            return Err(bad());
        }
        let digits = format!("{int}{frac}");
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let num: u64 = digits.parse().map_err(|_| bad())?;
        Self::new(num, 10u64.pow(frac.len() as u32)).ok_or_else(bad)
    }
}

impl Serialize for Compliance {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Compliance {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(serde_json::Number),
            Text(String),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Number(n) => n.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Trading behaviour. Only the naive strategy exists: offer any forecast
/// surplus at the ask price, bid for any deficit at the bid price.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Naive,
}

/// A dispatchable asset behind its own meter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetParams {
    pub capacity_wh_per_slot: u64,
    pub response_time_slots: u64,
    pub sync_time_slots: u64,
    pub max_dispatch_slots: u64,
    #[serde(default)]
    pub band: String,
    pub cost_rate: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerConfig {
    /// Matches `prosumer_id` in the trace file.
    pub id: String,
    /// Key seed; derived from the run seed when absent.
    #[serde(default)]
    pub account_seed: Option<u64>,
    /// Milli-currency per kWh.
    pub bid_price: i64,
    pub ask_price: i64,
    pub dr_compliance: Compliance,
    /// Per-slot flexibility offered to the aggregator.
    #[serde(default)]
    pub flex_capacity_wh: u64,
    /// Incentive asked for flexibility, milli-currency per kWh.
    #[serde(default)]
    pub flex_price: u64,
    #[serde(default)]
    pub asset: Option<AssetParams>,
    #[serde(default)]
    pub strategy: Strategy,
}

/// Contract addresses the agent interacts with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Environment {
    pub market: Option<Address>,
    pub vpp: Option<Address>,
    /// Orders are placed this many slots ahead of delivery.
    pub order_lead: u64,
}

/// A DR order the prosumer has seen on chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Obligation {
    pub contract: Address,
    pub order_id: u64,
    pub start_slot: u64,
    pub end_slot: u64,
    pub direction: Direction,
    pub amount_wh: u64,
}

/// A VPP dispatch that includes this prosumer's asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AssetDuty {
    pub start_slot: u64,
    pub end_slot: u64,
    pub scheduled_wh: u64,
}

/// Cumulative money flows seen on chain, in milli-currency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Earnings {
    pub market_paid: i64,
    pub market_received: i64,
    pub dr_net: i64,
    pub vpp_net: i64,
}

impl Earnings {
    pub fn total(&self) -> i64 {
        self.market_received - self.market_paid + self.dr_net + self.vpp_net
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProsumerState {
    pub next_nonce: u64,
    pub meter: Option<Address>,
    pub asset_meter: Option<Address>,
    pub asset_registered: bool,
    /// Next slot to meter.
    pub next_slot: u64,
    pub obligations: BTreeMap<(Address, u64), Obligation>,
    pub duties: BTreeMap<(Address, u64), AssetDuty>,
    /// Own unmatched market orders as `(market, order id)`.
    pub open_orders: Vec<(Address, u64)>,
    /// Local mirror of settlements and trades.
    pub earnings: Earnings,
    seen_trades: BTreeMap<Address, usize>,
    seen_dr: BTreeMap<Address, usize>,
    seen_vpp: BTreeMap<Address, usize>,
}

/// Immutable per-prosumer inputs.
#[derive(Debug, Clone)]
pub struct Prosumer {
    pub config: ProsumerConfig,
    pub key: KeyPair,
    pub trace: Trace,
}

impl Prosumer {
    pub fn address(&self) -> Address {
        self.key.address()
    }

    fn sign(&self, state: &mut ProsumerState, receiver: Address, kind: TxKind, payload: Vec<u8>) -> Transaction {
        let tx = Transaction::new(self.address(), receiver, state.next_nonce, kind, payload)
            .sign(&self.key)
            .expect("own key");
        state.next_nonce += 1;
        tx
    }

    fn deploy_meter(&self, state: &mut ProsumerState, device_type: &str) -> (Address, Transaction) {
        let address = Address::for_contract(&self.address(), state.next_nonce);
        let body = DeployBody::Meter {
            device_type: device_type.into(),
            measurement_type: "net-energy".into(),
        };
        let tx = self.sign(state, Address::NULL, TxKind::Deploy, body.to_canonical_bytes());
        (address, tx)
    }

    /// Metered net energy for `slot`: trace net plus the compliant part of
    /// every active DR obligation.
    pub fn metered_net(&self, state: &ProsumerState, slot: u64) -> Option<i64> {
        let mut net = self.trace.net(slot)?;
        for o in state.obligations.values() {
            if (o.start_slot..o.end_slot).contains(&slot) {
                let shift = self.config.dr_compliance.apply(o.amount_wh) as i64;
                net -= o.direction.sign() * shift;
            }
        }
        Some(net)
    }

    /// Asset meter reading for `slot`; output is negative energy.
    pub fn asset_output(&self, state: &ProsumerState, slot: u64) -> i64 {
        state
            .duties
            .values()
            .filter(|d| (d.start_slot..d.end_slot).contains(&slot))
            .map(|d| -(self.config.dr_compliance.apply(d.scheduled_wh) as i64))
            .sum()
    }

    /// Refreshes obligations, duties, open orders and the earnings mirror
    /// from `view`.
    pub fn observe(&self, state: &mut ProsumerState, view: &ChainView<'_>) {
        let me = self.address();
        state.open_orders.clear();
        for (addr, contract) in &view.world.contracts {
            match contract {
                ContractState::Dr(dr) if dr.prosumer == me => {
                    for o in &dr.orders {
                        state.obligations.entry((*addr, o.id)).or_insert(Obligation {
                            contract: *addr,
                            order_id: o.id,
                            start_slot: o.start_slot,
                            end_slot: o.end_slot,
                            direction: o.direction,
                            amount_wh: o.amount_wh,
                        });
                    }
                    let seen = state.seen_dr.entry(*addr).or_default();
                    for s in &dr.settlements[*seen..] {
                        state.earnings.dr_net += s.net;
                    }
                    *seen = dr.settlements.len();
                }
                ContractState::Market(m) => {
                    state.open_orders.extend(m.open_orders.iter().filter(|o| o.owner == me).map(|o| (*addr, o.id)));
                    let seen = state.seen_trades.entry(*addr).or_default();
                    for t in &m.trades[*seen..] {
                        if t.buyer == me {
                            state.earnings.market_paid += t.payment;
                        }
                        if t.seller == me {
                            state.earnings.market_received += t.payment;
                        }
                    }
                    *seen = m.trades.len();
                }
                ContractState::Vpp(v) => {
                    let mine: Vec<u64> = v
                        .assets
                        .iter()
                        .filter(|a| a.owner == me && Some(a.meter) == state.asset_meter)
                        .map(|a| a.id)
                        .collect();
                    if !mine.is_empty() {
                        state.asset_registered = true;
                    }
                    for d in &v.dispatches {
                        for m in d.members.iter().filter(|m| mine.contains(&m.asset_id)) {
                            state.duties.entry((*addr, d.service.service_id)).or_insert(AssetDuty {
                                start_slot: d.service.start_slot,
                                end_slot: d.service.end_slot(),
                                scheduled_wh: m.scheduled_wh,
                            });
                        }
                    }
                    let seen = state.seen_vpp.entry(*addr).or_default();
                    for s in &v.settlements[*seen..] {
                        for m in s.members.iter().filter(|m| m.owner == me) {
                            state.earnings.vpp_net += m.net;
                        }
                    }
                    *seen = v.settlements.len();
                }
                _ => {}
            }
        }
    }

    /// One tick of behaviour. `view` must reflect the chain up to `tick - 1`.
    pub fn step(
        &self,
        state: &ProsumerState,
        tick: u64,
        view: &ChainView<'_>,
        env: &Environment,
    ) -> (ProsumerState, Vec<Transaction>) {
        let mut state = state.clone();
        let mut txs = Vec::new();
        self.observe(&mut state, view);

        let meter = match state.meter {
            Some(m) => m,
            None => {
                let (addr, tx) = self.deploy_meter(&mut state, "smart-meter");
                txs.push(tx);
                state.meter = Some(addr);
                addr
            }
        };
        if self.config.asset.is_some() && state.asset_meter.is_none() {
            let (addr, tx) = self.deploy_meter(&mut state, "asset-meter");
            txs.push(tx);
            state.asset_meter = Some(addr);
        }

        // Meter every slot up to the current one.
        while state.next_slot <= tick && (state.next_slot as usize) < self.trace.len() {
            let slot = state.next_slot;
            let energy_wh = self.metered_net(&state, slot).expect("slot within trace");
            let reading = EnergyReading {
                slot,
                energy_wh,
                device: meter,
            };
            txs.push(self.sign(&mut state, meter, TxKind::MeterUpdate, reading.to_canonical_bytes()));
            if let Some(asset_meter) = state.asset_meter {
                let reading = EnergyReading {
                    slot,
                    energy_wh: self.asset_output(&state, slot),
                    device: asset_meter,
                };
                txs.push(self.sign(&mut state, asset_meter, TxKind::MeterUpdate, reading.to_canonical_bytes()));
            }
            state.next_slot += 1;
        }

        if let Some(market) = env.market.filter(|m| view.world.market(m).is_some()) {
            let slot = tick + env.order_lead;
            if let Some(sub) = self.order_for(slot) {
                txs.push(self.sign(&mut state, market, TxKind::MarketSubmitOrder, sub.to_canonical_bytes()));
            }
        }

        if let (Some(vpp), Some(asset), Some(asset_meter)) = (env.vpp, &self.config.asset, state.asset_meter) {
            let ready = view.world.vpp(&vpp).is_some() && view.world.meter(&asset_meter).is_some();
            if ready && !state.asset_registered {
                let reg = AssetRegistration {
                    meter: asset_meter,
                    capacity_wh_per_slot: asset.capacity_wh_per_slot,
                    response_time_slots: asset.response_time_slots,
                    sync_time_slots: asset.sync_time_slots,
                    max_dispatch_slots: asset.max_dispatch_slots,
                    band: asset.band.clone(),
                    cost_rate: asset.cost_rate,
                };
                txs.push(self.sign(&mut state, vpp, TxKind::VppRegisterAsset, reg.to_canonical_bytes()));
                state.asset_registered = true;
            }
        }
        (state, txs)
    }

    /// Market order for delivery `slot` from the trace's net position.
    pub fn order_for(&self, slot: u64) -> Option<OrderSubmission> {
        let net = self.trace.net(slot)?;
        let Strategy::Naive = self.config.strategy;
        let (side, limit_price) = match net {
            0 => return None,
            n if n < 0 => (Side::Offer, self.config.ask_price),
            _ => (Side::Bid, self.config.bid_price),
        };
        Some(OrderSubmission {
            side,
            owner: self.address(),
            qty_wh: net.unsigned_abs(),
            limit_price,
            slot,
        })
    }
}

/// Functional form of [`Prosumer::step`].
pub fn prosumer_step(
    prosumer: &Prosumer,
    state: &ProsumerState,
    tick: u64,
    view: &ChainView<'_>,
    env: &Environment,
) -> (ProsumerState, Vec<Transaction>) {
    prosumer.step(state, tick, view, env)
}
