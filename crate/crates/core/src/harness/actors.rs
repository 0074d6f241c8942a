//! Scripted stakeholders: market operator, DSO, aggregator, VPP operator,
//! plus the oracle agent. Each acts from a chain view and a shared index
//! and emits signed transactions.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::codec::Canonical;
use crate::contracts::dr::{BaselineProfile, OrderRequest, SettleRequest};
use crate::contracts::meter::EnergyReading;
use crate::contracts::vpp::{DeliveryReport, MemberDelivery};
use crate::contracts::DeployBody;
use crate::crypto::{Address, Hash32, KeyPair};
use crate::ledger::chain::ChainView;
use crate::ledger::tx::{Transaction, TxKind};
use crate::oracle::service::oracle_step_from;
use crate::oracle::wire::{OracleRequestBody, ServiceRequest, ServiceResult};
use crate::oracle::{Candidate, Horizon};

use super::config::{CongestionEvent, VppServiceRequest};
use super::index::ChainIndex;

/// Something a scripted actor could not do, kept for the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Note {
    pub tick: u64,
    pub actor: String,
    pub message: String,
}

/// A key pair with a locally tracked nonce.
#[derive(Debug, Clone)]
pub struct Account {
    pub key: KeyPair,
    pub next_nonce: u64,
}

impl Account {
    pub fn new(key: KeyPair) -> Self {
        Self { key, next_nonce: 0 }
    }

    pub fn address(&self) -> Address {
        self.key.address()
    }

    pub fn sign(&mut self, receiver: Address, kind: TxKind, payload: Vec<u8>) -> Transaction {
        let tx = Transaction::new(self.address(), receiver, self.next_nonce, kind, payload)
            .sign(&self.key)
            .expect("own key");
        self.next_nonce += 1;
        tx
    }

    /// Deploys a contract, returning its future address.
    pub fn deploy(&mut self, body: &DeployBody) -> (Address, Transaction) {
        let address = Address::for_contract(&self.address(), self.next_nonce);
        (address, self.sign(Address::NULL, TxKind::Deploy, body.to_canonical_bytes()))
    }

    pub fn request(&mut self, oracle: Address, request: ServiceRequest) -> Transaction {
        let body = OracleRequestBody::new(request);
        self.sign(oracle, TxKind::OracleRequest, body.to_canonical_bytes())
    }
}

fn note(notes: &mut Vec<Note>, tick: u64, actor: &str, message: String) {
    notes.push(Note {
        tick,
        actor: actor.to_string(),
        message,
    });
}

/// Answers every unanswered request once, tracking its own in-flight
/// responses so none is sent twice.
#[derive(Debug)]
pub struct OracleAgent {
    pub account: Account,
    in_flight: BTreeSet<Hash32>,
}

impl OracleAgent {
    pub fn new(key: KeyPair) -> Self {
        Self {
            account: Account::new(key),
            in_flight: BTreeSet::new(),
        }
    }

    pub fn step(&mut self, view: &ChainView<'_>, index: &ChainIndex) -> Vec<Transaction> {
        self.in_flight.retain(|h| !index.responses.contains_key(h));
        let out = oracle_step_from(view, &self.account.key, &self.in_flight, self.account.next_nonce);
        self.account.next_nonce += out.len() as u64;
        out.into_iter()
            .map(|(request, tx)| {
                self.in_flight.insert(request);
                tx
            })
            .collect()
    }
}

/// Deploys the market and requests a clearing for each delivery slot one
/// tick before it starts.
#[derive(Debug)]
pub struct MarketOperator {
    pub account: Account,
    oracle: Address,
    pub market: Option<Address>,
    next_slot: u64,
    total_slots: u64,
}

impl MarketOperator {
    pub fn new(key: KeyPair, oracle: Address, first_slot: u64, total_slots: u64) -> Self {
        Self {
            account: Account::new(key),
            oracle,
            market: None,
            next_slot: first_slot,
            total_slots,
        }
    }

    /// Address the market will have once deployed.
    pub fn planned_market(&self) -> Address {
        self.market
            .unwrap_or_else(|| Address::for_contract(&self.account.address(), 0))
    }

    pub fn step(&mut self, tick: u64, view: &ChainView<'_>) -> Vec<Transaction> {
        let Some(market) = self.market else {
            let (addr, tx) = self.account.deploy(&DeployBody::Market { oracle: self.oracle });
            self.market = Some(addr);
            return vec![tx];
        };
        if view.world.market(&market).is_none() {
            return vec![];
        }
        let mut out = Vec::new();
        while self.next_slot <= tick + 1 && self.next_slot < self.total_slots {
            let slot = self.next_slot;
            out.push(self.account.request(self.oracle, ServiceRequest::Clear { market, slot }));
            self.next_slot += 1;
        }
        out
    }
}

/// Requests a day-ahead forecast of every prosumer meter at each day start.
#[derive(Debug)]
pub struct Dso {
    pub account: Account,
    oracle: Address,
    meters: Vec<Address>,
    slots_per_day: u64,
    total_slots: u64,
    enabled: bool,
}

impl Dso {
    pub fn new(key: KeyPair, oracle: Address, meters: Vec<Address>, slots_per_day: u64, total_slots: u64, enabled: bool) -> Self {
        Self {
            account: Account::new(key),
            oracle,
            meters,
            slots_per_day,
            total_slots,
            enabled,
        }
    }

    pub fn step(&mut self, tick: u64, notes: &mut Vec<Note>) -> Vec<Transaction> {
        if !self.enabled || tick == 0 || tick % self.slots_per_day != 0 || tick >= self.total_slots {
            return vec![];
        }
        if !matches!(self.slots_per_day, 24 | 48) {
            if tick == self.slots_per_day {
                note(notes, tick, "dso", format!("no forecasts for {} slots per day", self.slots_per_day));
            }
            return vec![];
        }
        let meters = self.meters.clone();
        meters
            .into_iter()
            .map(|series| {
                self.account.request(
                    self.oracle,
                    ServiceRequest::Forecast {
                        series,
                        slots_per_day: self.slots_per_day,
                        horizon: Horizon::DayAhead,
                        from_slot: tick,
                    },
                )
            })
            .collect()
    }
}

/// What the aggregator knows about one prosumer.
#[derive(Debug, Clone)]
pub struct DrMember {
    pub prosumer: Address,
    pub meter: Address,
    pub flex_capacity_wh: u64,
    /// Incentive rate, milli-currency per kWh.
    pub flex_price: u64,
    pub contract: Option<Address>,
}

#[derive(Debug)]
struct Campaign {
    event: CongestionEvent,
    flex: Hash32,
    baselines: BTreeMap<usize, Hash32>,
}

#[derive(Debug)]
struct IssuedOrder {
    member: usize,
    contract: Address,
    tx: Hash32,
    start_slot: u64,
    end_slot: u64,
    settle: Option<Hash32>,
}

/// Turns DSO congestion signals into DR orders via the oracle's
/// flexibility selection, then settles them from on-chain readings.
#[derive(Debug)]
pub struct Aggregator {
    pub account: Account,
    oracle: Address,
    slots_per_day: u64,
    pub members: Vec<DrMember>,
    events: Vec<CongestionEvent>,
    campaigns: Vec<Campaign>,
    orders: Vec<IssuedOrder>,
}

impl Aggregator {
    pub fn new(key: KeyPair, oracle: Address, slots_per_day: u64, members: Vec<DrMember>, mut events: Vec<CongestionEvent>) -> Self {
        events.sort_by_key(|e| (e.tick, e.start_slot));
        events.reverse();
        Self {
            account: Account::new(key),
            oracle,
            slots_per_day,
            members,
            events,
            campaigns: Vec::new(),
            orders: Vec::new(),
        }
    }

    pub fn step(&mut self, tick: u64, view: &ChainView<'_>, index: &ChainIndex, notes: &mut Vec<Note>) -> Vec<Transaction> {
        let mut out = Vec::new();
        for m in &mut self.members {
            if m.contract.is_none() && view.world.meter(&m.meter).is_some() {
                let body = DeployBody::Dr {
                    prosumer: m.prosumer,
                    meter: m.meter,
                    slots_per_day: self.slots_per_day,
                    baseline: BaselineProfile {
                        slot_wh: vec![0; self.slots_per_day as usize],
                    },
                };
                let (addr, tx) = self.account.deploy(&body);
                m.contract = Some(addr);
                out.push(tx);
            }
        }
        while self.events.last().is_some_and(|e| e.tick <= tick) {
            let event = self.events.pop().expect("checked");
            out.extend(self.open_campaign(event, tick, view, notes));
        }
        out.extend(self.progress_campaigns(tick, index, notes));
        out.extend(self.settle_orders(tick, view, index, notes));
        out
    }

    fn open_campaign(&mut self, event: CongestionEvent, tick: u64, view: &ChainView<'_>, notes: &mut Vec<Note>) -> Vec<Transaction> {
        let len = event.end_slot - event.start_slot;
        let mut candidates = Vec::new();
        for (i, m) in self.members.iter().enumerate() {
            let live = m.contract.is_some_and(|c| view.world.dr(&c).is_some());
            if m.flex_capacity_wh > 0 && live {
                let cost = (m.flex_price as u128 * m.flex_capacity_wh as u128 * len as u128 / 1000) as u64;
                candidates.push(Candidate {
                    id: i as u64,
                    flex_wh: m.flex_capacity_wh,
                    cost,
                });
            }
        }
        if candidates.is_empty() {
            note(notes, tick, "aggregator", format!("congestion at {}: no contracted prosumers", event.congestion_point));
            return vec![];
        }
        let mut out = vec![self.account.request(
            self.oracle,
            ServiceRequest::Flex {
                target_wh: event.required_flex_wh,
                candidates: candidates.clone(),
            },
        )];
        let flex = out[0].hash();
        let until_slot = tick - tick % self.slots_per_day;
        let mut baselines = BTreeMap::new();
        for c in &candidates {
            let m = &self.members[c.id as usize];
            let contract = view.world.dr(&m.contract.expect("live")).expect("live");
            let dr_windows = contract.orders.iter().map(|o| (o.start_slot, o.end_slot)).collect();
            let tx = self.account.request(
                self.oracle,
                ServiceRequest::Baseline {
                    meter: m.meter,
                    slots_per_day: self.slots_per_day,
                    until_slot,
                    dr_windows,
                },
            );
            baselines.insert(c.id as usize, tx.hash());
            out.push(tx);
        }
        self.campaigns.push(Campaign { event, flex, baselines });
        out
    }

    fn progress_campaigns(&mut self, tick: u64, index: &ChainIndex, notes: &mut Vec<Note>) -> Vec<Transaction> {
        let mut out = Vec::new();
        let mut remaining = Vec::new();
        for c in std::mem::take(&mut self.campaigns) {
            let answered = index.responses.contains_key(&c.flex)
                && c.baselines.values().all(|h| index.responses.contains_key(h));
            if !answered {
                remaining.push(c);
                continue;
            }
            let cp = &c.event.congestion_point;
            let selection = match &index.responses[&c.flex].outcome {
                Ok(ServiceResult::Flex(sel)) if sel.feasible => sel.clone(),
                Ok(ServiceResult::Flex(_)) => {
                    note(notes, tick, "aggregator", format!("congestion at {cp}: not enough flexibility"));
                    continue;
                }
                other => {
                    note(notes, tick, "aggregator", format!("congestion at {cp}: flexibility request failed: {other:?}"));
                    continue;
                }
            };
            if tick + 1 >= c.event.start_slot {
                note(notes, tick, "aggregator", format!("congestion at {cp}: window starts before orders can land"));
                continue;
            }
            for id in &selection.chosen {
                let member = *id as usize;
                let baseline = match &index.responses[&c.baselines[&member]].outcome {
                    Ok(ServiceResult::Baseline(b)) => b.clone(),
                    other => {
                        note(notes, tick, "aggregator", format!("prosumer {member}: no baseline: {other:?}"));
                        continue;
                    }
                };
                let m = &self.members[member];
                let contract = m.contract.expect("candidate is live");
                let request = OrderRequest {
                    start_slot: c.event.start_slot,
                    end_slot: c.event.end_slot,
                    direction: c.event.direction,
                    amount_wh: m.flex_capacity_wh,
                    incentive_rate: m.flex_price,
                    penalty_rate: c.event.penalty_rate,
                    congestion_point: cp.clone(),
                    baseline: Some(baseline),
                };
                let tx = self.account.sign(contract, TxKind::DrIssueOrder, request.to_canonical_bytes());
                self.orders.push(IssuedOrder {
                    member,
                    contract,
                    tx: tx.hash(),
                    start_slot: c.event.start_slot,
                    end_slot: c.event.end_slot,
                    settle: None,
                });
                out.push(tx);
            }
        }
        self.campaigns = remaining;
        out
    }

    fn settle_orders(&mut self, tick: u64, view: &ChainView<'_>, index: &ChainIndex, notes: &mut Vec<Note>) -> Vec<Transaction> {
        let mut out = Vec::new();
        let mut keep = Vec::new();
        for mut o in std::mem::take(&mut self.orders) {
            match index.status.get(&o.tx) {
                None => {
                    keep.push(o);
                    continue;
                }
                Some(s) if !s.success => {
                    let why = s.error.clone().unwrap_or_default();
                    note(notes, tick, "aggregator", format!("order for prosumer {} rejected: {why}", o.member));
                    continue;
                }
                Some(_) => {}
            }
            if let Some(h) = o.settle {
                match index.status.get(&h) {
                    None => keep.push(o),
                    Some(s) if !s.success => {
                        let why = s.error.clone().unwrap_or_default();
                        note(notes, tick, "aggregator", format!("settlement for prosumer {} failed: {why}", o.member));
                    }
                    Some(_) => {}
                }
                continue;
            }
            let meter = self.members[o.member].meter;
            let Some(metered) = index.window(&meter, o.start_slot, o.end_slot) else {
                keep.push(o);
                continue;
            };
            if tick < o.end_slot {
                keep.push(o);
                continue;
            }
            let Some(order) = view.world.dr(&o.contract).and_then(|d| {
                d.orders
                    .iter()
                    .find(|x| x.start_slot == o.start_slot && x.end_slot == o.end_slot && !d.is_settled(x.id))
            }) else {
                keep.push(o);
                continue;
            };
            let request = SettleRequest {
                order_id: order.id,
                metered: metered
                    .iter()
                    .zip(o.start_slot..)
                    .map(|(&energy_wh, slot)| EnergyReading {
                        slot,
                        energy_wh,
                        device: meter,
                    })
                    .collect(),
            };
            let tx = self.account.sign(o.contract, TxKind::DrSettle, request.to_canonical_bytes());
            o.settle = Some(tx.hash());
            out.push(tx);
            keep.push(o);
        }
        self.orders = keep;
        out
    }
}

#[derive(Debug)]
struct ServiceTrack {
    request: VppServiceRequest,
    tx: Hash32,
    settle: Option<Hash32>,
}

/// Procures coalitions for configured services and settles each dispatch
/// from the members' asset meters.
#[derive(Debug)]
pub struct VppOperator {
    pub account: Account,
    oracle: Address,
    pub vpp: Option<Address>,
    requests: Vec<VppServiceRequest>,
    tracks: Vec<ServiceTrack>,
}

impl VppOperator {
    pub fn new(key: KeyPair, oracle: Address, mut requests: Vec<VppServiceRequest>) -> Self {
        requests.sort_by_key(|r| (r.tick, r.service.service_id));
        requests.reverse();
        Self {
            account: Account::new(key),
            oracle,
            vpp: None,
            requests,
            tracks: Vec::new(),
        }
    }

    pub fn planned_vpp(&self) -> Address {
        self.vpp.unwrap_or_else(|| Address::for_contract(&self.account.address(), 0))
    }

    pub fn step(&mut self, tick: u64, view: &ChainView<'_>, index: &ChainIndex, notes: &mut Vec<Note>) -> Vec<Transaction> {
        let Some(vpp) = self.vpp else {
            let (addr, tx) = self.account.deploy(&DeployBody::Vpp { oracle: self.oracle });
            self.vpp = Some(addr);
            return vec![tx];
        };
        let Some(state) = view.world.vpp(&vpp) else {
            return vec![];
        };
        let mut out = Vec::new();
        while self.requests.last().is_some_and(|r| r.tick <= tick) {
            let request = self.requests.pop().expect("checked");
            let tx = self.account.request(
                self.oracle,
                ServiceRequest::Coalition {
                    vpp,
                    service: request.service.clone(),
                },
            );
            self.tracks.push(ServiceTrack {
                request,
                tx: tx.hash(),
                settle: None,
            });
            out.push(tx);
        }
        let mut keep = Vec::new();
        for mut t in std::mem::take(&mut self.tracks) {
            let id = t.request.service.service_id;
            if let Some(h) = t.settle {
                match index.status.get(&h) {
                    None => keep.push(t),
                    Some(s) if !s.success => {
                        let why = s.error.clone().unwrap_or_default();
                        note(notes, tick, "vpp-operator", format!("service {id}: settlement failed: {why}"));
                    }
                    Some(_) => {}
                }
                continue;
            }
            let Some(response) = index.responses.get(&t.tx) else {
                keep.push(t);
                continue;
            };
            if let Err(e) = &response.outcome {
                note(notes, tick, "vpp-operator", format!("service {id}: no coalition: {e}"));
                continue;
            }
            if !response.applied {
                let why = response.status_error.clone().unwrap_or_default();
                note(notes, tick, "vpp-operator", format!("service {id}: dispatch rejected: {why}"));
                continue;
            }
            let Some(dispatch) = state.dispatch(id) else {
                keep.push(t);
                continue;
            };
            let (start, end) = (dispatch.service.start_slot, dispatch.service.end_slot());
            if tick < end {
                keep.push(t);
                continue;
            }
            let mut delivered = Vec::new();
            for m in &dispatch.members {
                let meter = state.asset(m.asset_id).expect("dispatched asset").meter;
                match index.window(&meter, start, end) {
                    Some(w) => delivered.push(MemberDelivery {
                        asset_id: m.asset_id,
                        delivered_wh: w.iter().map(|&e| (-e).max(0) as u64).sum(),
                    }),
                    None => break,
                }
            }
            if delivered.len() != dispatch.members.len() {
                keep.push(t);
                continue;
            }
            let report = DeliveryReport {
                service_id: id,
                delivered,
            };
            let tx = self.account.sign(vpp, TxKind::VppSettle, report.to_canonical_bytes());
            t.settle = Some(tx.hash());
            out.push(tx);
            keep.push(t);
        }
        self.tracks = keep;
        out
    }

    /// Services still waiting on a response, dispatch or settlement.
    pub fn outstanding(&self) -> usize {
        self.tracks.len() + self.requests.len()
    }
}

impl Aggregator {
    /// Campaigns and orders not yet settled.
    pub fn outstanding(&self) -> usize {
        self.campaigns.len() + self.orders.len() + self.events.len()
    }
}
