//! Run report. Every figure except the prosumers' local mirrors is derived
//! from a replay of the final chain.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::codec::Canonical;
use crate::contracts::dr::Direction;
use crate::contracts::{ContractState, WorldState};
use crate::crypto::{Address, Hash32};
use crate::ledger::block::Block;
use crate::ledger::chain::{replay_chain, ChainError};
use crate::ledger::genesis::GenesisConfig;
use crate::ledger::network::{Network, NetworkStats};
use crate::ledger::tx::TxKind;
use crate::oracle::wire::{OracleRequestBody, OracleResponseBody, ServiceRequest, ServiceResult};
use crate::prosumer::{Earnings, Prosumer, ProsumerState};

use super::actors::Note;
use super::config::{ScenarioConfig, ScenarioKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailedTx {
    pub height: u64,
    pub kind: String,
    pub sender: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainStats {
    pub blocks: u64,
    pub transactions: u64,
    pub failed_receipts: u64,
    pub by_kind: BTreeMap<String, u64>,
    pub failures: Vec<FailedTx>,
    pub tip_hash: Hash32,
    pub state_root: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NetworkSummary {
    pub messages: NetworkStats,
    pub reorgs: u64,
    /// Nodes whose tip equals the reported chain's tip.
    pub nodes_on_tip: usize,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProsumerReport {
    pub id: String,
    pub address: Address,
    pub metered_wh: i64,
    pub chain: Earnings,
    pub mirror: Earnings,
    pub reconciled: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClearingSummary {
    pub market: Address,
    pub index: u64,
    pub slot: u64,
    pub price: i64,
    pub volume_wh: u64,
    pub matches: u64,
    pub buyer_payments: i64,
    pub seller_receipts: i64,
    pub conserved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DrSettlementRow {
    pub prosumer: String,
    pub contract: Address,
    pub order_id: u64,
    pub congestion_point: String,
    pub start_slot: u64,
    pub end_slot: u64,
    pub direction: Direction,
    pub amount_wh: u64,
    pub delivered_wh: u64,
    pub shortfall_wh: u64,
    pub reward: u64,
    pub penalty: u64,
    pub net: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VppSettlementRow {
    pub vpp: Address,
    pub service_id: u64,
    pub asset_id: u64,
    pub owner: String,
    pub scheduled_wh: u64,
    pub delivered_wh: u64,
    pub shortfall_wh: u64,
    pub payout: u64,
    pub penalty: u64,
    pub net: i64,
}

/// The aggregator's view of each contracted prosumer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostBenefit {
    pub prosumer: String,
    pub orders: u64,
    pub settled: u64,
    pub ordered_wh: u64,
    pub delivered_wh: u64,
    pub incentives_paid: u64,
    pub penalties_collected: u64,
    pub net_cost: i64,
    /// Net cost per delivered kWh, floored; absent when nothing was
    /// delivered.
    pub cost_per_kwh: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ForecastSummary {
    pub requests: u64,
    pub answered: u64,
    pub failed: u64,
    /// Forecast points compared against later readings.
    pub points: u64,
    pub total_abs_error_wh: u64,
    pub mean_abs_error_wh: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Conservation {
    pub market_buyer_payments: i64,
    pub market_seller_receipts: i64,
    pub market_energy_bought_wh: u64,
    pub market_energy_sold_wh: u64,
    pub dr_aggregator_payouts: i64,
    pub dr_prosumer_nets: i64,
    pub vpp_operator_payouts: i64,
    pub vpp_member_nets: i64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportBundle {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub chain: ChainStats,
    pub network: NetworkSummary,
    pub prosumers: Vec<ProsumerReport>,
    pub clearings: Vec<ClearingSummary>,
    pub dr_settlements: Vec<DrSettlementRow>,
    pub vpp_settlements: Vec<VppSettlementRow>,
    pub cost_benefit: Vec<CostBenefit>,
    pub forecasts: ForecastSummary,
    pub conservation: Conservation,
    pub notes: Vec<Note>,
}

fn labels(genesis: &GenesisConfig) -> BTreeMap<Address, String> {
    genesis
        .accounts
        .iter()
        .map(|a| {
            let label = a.label.strip_prefix("prosumer:").unwrap_or(&a.label);
            (a.address, label.to_string())
        })
        .collect()
}

fn label_of(labels: &BTreeMap<Address, String>, a: &Address) -> String {
    labels.get(a).cloned().unwrap_or_else(|| a.to_string())
}

/// Chain-side earnings per account.
pub fn earnings_from_world(world: &WorldState) -> BTreeMap<Address, Earnings> {
    let mut out: BTreeMap<Address, Earnings> = BTreeMap::new();
    for contract in world.contracts.values() {
        match contract {
            ContractState::Market(m) => {
                for t in &m.trades {
                    out.entry(t.buyer).or_default().market_paid += t.payment;
                    out.entry(t.seller).or_default().market_received += t.payment;
                }
            }
            ContractState::Dr(d) => {
                let e = out.entry(d.prosumer).or_default();
                e.dr_net += d.settlements.iter().map(|s| s.net).sum::<i64>();
            }
            ContractState::Vpp(v) => {
                for m in v.settlements.iter().flat_map(|s| &s.members) {
                    out.entry(m.owner).or_default().vpp_net += m.net;
                }
            }
            ContractState::Meter(_) => {}
        }
    }
    out
}

/// Money and energy balances, each side summed over its own grouping.
pub fn conservation(world: &WorldState) -> Conservation {
    let mut buyers: BTreeMap<Address, i64> = BTreeMap::new();
    let mut sellers: BTreeMap<Address, i64> = BTreeMap::new();
    let (mut bought, mut sold) = (0u64, 0u64);
    let mut aggregators: BTreeMap<Address, i64> = BTreeMap::new();
    let mut dr_prosumers: BTreeMap<Address, i64> = BTreeMap::new();
    let mut operators: BTreeMap<Address, i64> = BTreeMap::new();
    let mut members: BTreeMap<Address, i64> = BTreeMap::new();
    for contract in world.contracts.values() {
        match contract {
            ContractState::Market(m) => {
                for t in &m.trades {
                    *buyers.entry(t.buyer).or_default() += t.payment;
                    *sellers.entry(t.seller).or_default() += t.payment;
                }
                for c in &m.clearings {
                    for x in &c.matches {
                        bought += x.qty_wh;
                    }
                    sold += c.total_qty_wh;
                }
            }
            ContractState::Dr(d) => {
                for s in &d.settlements {
                    *aggregators.entry(d.aggregator).or_default() += s.reward as i64 - s.penalty as i64;
                    *dr_prosumers.entry(d.prosumer).or_default() += s.net;
                }
            }
            ContractState::Vpp(v) => {
                for m in v.settlements.iter().flat_map(|s| &s.members) {
                    *operators.entry(v.operator).or_default() += m.payout as i64 - m.penalty as i64;
                    *members.entry(m.owner).or_default() += m.net;
                }
            }
            ContractState::Meter(_) => {}
        }
    }
    let total = |m: &BTreeMap<Address, i64>| m.values().sum::<i64>();
    let c = Conservation {
        market_buyer_payments: total(&buyers),
        market_seller_receipts: total(&sellers),
        market_energy_bought_wh: bought,
        market_energy_sold_wh: sold,
        dr_aggregator_payouts: total(&aggregators),
        dr_prosumer_nets: total(&dr_prosumers),
        vpp_operator_payouts: total(&operators),
        vpp_member_nets: total(&members),
        holds: false,
    };
    Conservation {
        holds: c.market_buyer_payments == c.market_seller_receipts
            && c.market_energy_bought_wh == c.market_energy_sold_wh
            && c.dr_aggregator_payouts == c.dr_prosumer_nets
            && c.vpp_operator_payouts == c.vpp_member_nets,
        ..c
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_report(
    config: &ScenarioConfig,
    seed: u64,
    genesis: &GenesisConfig,
    blocks: &[Block],
    prosumers: &[Prosumer],
    states: &[ProsumerState],
    net: &Network,
    notes: Vec<Note>,
) -> Result<ReportBundle, ChainError> {
    let replay = replay_chain(blocks, genesis)?;
    let world = &replay.world;
    let labels = labels(genesis);

    let mut by_kind: BTreeMap<String, u64> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut transactions = 0;
    let mut metered: BTreeMap<Address, i64> = BTreeMap::new();
    for (block, receipts) in blocks.iter().zip(&replay.receipts) {
        for (tx, r) in block.transactions.iter().zip(receipts) {
            transactions += 1;
            *by_kind.entry(format!("{:?}", tx.kind)).or_default() += 1;
            if !r.success {
                failures.push(FailedTx {
                    height: block.height(),
                    kind: format!("{:?}", tx.kind),
                    sender: label_of(&labels, &tx.sender),
                    error: r.error.clone().unwrap_or_default(),
                });
            }
        }
    }
    let tip = blocks.last().expect("genesis");
    let chain = ChainStats {
        blocks: blocks.len() as u64,
        transactions,
        failed_receipts: failures.len() as u64,
        by_kind,
        failures,
        tip_hash: tip.hash(),
        state_root: tip.header.state_root,
    };
    let network = NetworkSummary {
        messages: net.stats.clone(),
        reorgs: net.nodes.iter().map(|n| n.stats.reorgs).sum(),
        nodes_on_tip: net.nodes.iter().filter(|n| n.tip().hash() == chain.tip_hash).count(),
        nodes: net.nodes.len(),
    };

    for (block, receipts) in blocks.iter().zip(&replay.receipts) {
        for (tx, r) in block.transactions.iter().zip(receipts) {
            if r.success && tx.kind == TxKind::MeterUpdate {
                if let Ok(reading) = crate::contracts::meter::EnergyReading::from_canonical_bytes(&tx.payload) {
                    *metered.entry(tx.receiver).or_default() += reading.energy_wh;
                }
            }
        }
    }
    let earnings = earnings_from_world(world);
    let prosumer_reports = prosumers
        .iter()
        .zip(states)
        .map(|(p, s)| {
            let chain = earnings.get(&p.address()).copied().unwrap_or_default();
            ProsumerReport {
                id: p.config.id.clone(),
                address: p.address(),
                metered_wh: s.meter.and_then(|m| metered.get(&m).copied()).unwrap_or(0),
                chain,
                mirror: s.earnings,
                reconciled: chain == s.earnings,
            }
        })
        .collect();

    let mut clearings = Vec::new();
    let mut dr_settlements = Vec::new();
    let mut vpp_settlements = Vec::new();
    let mut cost_benefit: BTreeMap<Address, CostBenefit> = BTreeMap::new();
    for (addr, contract) in &world.contracts {
        match contract {
            ContractState::Market(m) => {
                for (i, c) in m.clearings.iter().enumerate() {
                    let trades = m.trades.iter().filter(|t| t.clearing == i as u64);
                    let mut buyers = 0i64;
                    let mut sellers = 0i64;
                    for t in trades {
                        buyers += t.payment;
                        sellers += t.payment;
                    }
                    let matched: u64 = c.matches.iter().map(|x| x.qty_wh).sum();
                    clearings.push(ClearingSummary {
                        market: *addr,
                        index: i as u64,
                        slot: c.slot,
                        price: c.clearing_price,
                        volume_wh: c.total_qty_wh,
                        matches: c.matches.len() as u64,
                        buyer_payments: buyers,
                        seller_receipts: sellers,
                        conserved: buyers == sellers && matched == c.total_qty_wh,
                    });
                }
            }
            ContractState::Dr(d) => {
                let prosumer = label_of(&labels, &d.prosumer);
                let cb = cost_benefit.entry(d.prosumer).or_insert(CostBenefit {
                    prosumer: prosumer.clone(),
                    orders: 0,
                    settled: 0,
                    ordered_wh: 0,
                    delivered_wh: 0,
                    incentives_paid: 0,
                    penalties_collected: 0,
                    net_cost: 0,
                    cost_per_kwh: None,
                });
                cb.orders += d.orders.len() as u64;
                cb.ordered_wh += d.orders.iter().map(|o| o.ordered_total_wh()).sum::<u64>();
                for s in &d.settlements {
                    let o = d.order(s.order_id).expect("settled order exists");
                    cb.settled += 1;
                    cb.delivered_wh += s.delivered_wh;
                    cb.incentives_paid += s.reward;
                    cb.penalties_collected += s.penalty;
                    cb.net_cost += s.net;
                    dr_settlements.push(DrSettlementRow {
                        prosumer: prosumer.clone(),
                        contract: *addr,
                        order_id: o.id,
                        congestion_point: o.congestion_point.clone(),
                        start_slot: o.start_slot,
                        end_slot: o.end_slot,
                        direction: o.direction,
                        amount_wh: o.amount_wh,
                        delivered_wh: s.delivered_wh,
                        shortfall_wh: s.shortfall_wh,
                        reward: s.reward,
                        penalty: s.penalty,
                        net: s.net,
                    });
                }
            }
            ContractState::Vpp(v) => {
                for s in &v.settlements {
                    for m in &s.members {
                        vpp_settlements.push(VppSettlementRow {
                            vpp: *addr,
                            service_id: s.service_id,
                            asset_id: m.asset_id,
                            owner: label_of(&labels, &m.owner),
                            scheduled_wh: m.scheduled_wh,
                            delivered_wh: m.delivered_wh,
                            shortfall_wh: m.shortfall_wh,
                            payout: m.payout,
                            penalty: m.penalty,
                            net: m.net,
                        });
                    }
                }
            }
            ContractState::Meter(_) => {}
        }
    }
    let cost_benefit = cost_benefit
        .into_values()
        .map(|mut cb| {
            if cb.delivered_wh > 0 {
                cb.cost_per_kwh = Some((cb.net_cost as i128 * 1000).div_euclid(cb.delivered_wh as i128) as i64);
            }
            cb
        })
        .collect();

    Ok(ReportBundle {
        scenario: config.scenario,
        seed,
        chain,
        network,
        prosumers: prosumer_reports,
        clearings,
        dr_settlements,
        vpp_settlements,
        cost_benefit,
        forecasts: forecast_summary(blocks, &replay.receipts, genesis.oracle),
        conservation: conservation(world),
        notes,
    })
}

/// Compares answered day-ahead forecasts with the hourly totals later
/// metered for the same hours.
fn forecast_summary(blocks: &[Block], receipts: &[Vec<crate::contracts::Receipt>], oracle: Address) -> ForecastSummary {
    let mut summary = ForecastSummary::default();
    let mut requests: BTreeMap<Hash32, (Address, u64, u64)> = BTreeMap::new();
    let mut answers: BTreeMap<Hash32, Result<Vec<i64>, String>> = BTreeMap::new();
    let mut readings: BTreeMap<Address, BTreeMap<u64, i64>> = BTreeMap::new();
    for (block, rs) in blocks.iter().zip(receipts) {
        for (tx, r) in block.transactions.iter().zip(rs) {
            match tx.kind {
                TxKind::OracleRequest if r.success && tx.receiver == oracle => {
                    if let Ok(OracleRequestBody {
                        request:
                            ServiceRequest::Forecast {
                                series,
                                slots_per_day,
                                from_slot,
                                ..
                            },
                        ..
                    }) = OracleRequestBody::from_canonical_bytes(&tx.payload)
                    {
                        requests.insert(r.tx_hash, (series, slots_per_day, from_slot));
                    }
                }
                TxKind::OracleResponse if tx.sender == oracle => {
                    if let Ok(body) = OracleResponseBody::from_canonical_bytes(&tx.payload) {
                        let v = match body.outcome {
                            Ok(ServiceResult::Forecast(v)) => Ok(v),
                            Ok(_) => continue,
                            Err(e) => Err(e),
                        };
                        answers.insert(body.request, v);
                    }
                }
                TxKind::MeterUpdate if r.success => {
                    if let Ok(reading) = crate::contracts::meter::EnergyReading::from_canonical_bytes(&tx.payload) {
                        readings.entry(tx.receiver).or_default().insert(reading.slot, reading.energy_wh);
                    }
                }
                _ => {}
            }
        }
    }
    summary.requests = requests.len() as u64;
    for (hash, (series, spd, from)) in &requests {
        match answers.get(hash) {
            None => {}
            Some(Err(_)) => summary.failed += 1,
            Some(Ok(values)) => {
                summary.answered += 1;
                let per_hour = (spd / 24).max(1);
                let Some(meter) = readings.get(series) else { continue };
                for (h, predicted) in values.iter().enumerate() {
                    let first = from + h as u64 * per_hour;
                    let actual: Option<i64> = (first..first + per_hour).map(|s| meter.get(&s).copied()).sum();
                    if let Some(actual) = actual {
                        summary.points += 1;
                        summary.total_abs_error_wh += predicted.abs_diff(actual);
                    }
                }
            }
        }
    }
    if summary.points > 0 {
        summary.mean_abs_error_wh = Some(summary.total_abs_error_wh / summary.points);
    }
    summary
}

#[derive(Serialize)]
struct ProsumerRow<'a> {
    id: &'a str,
    address: Address,
    metered_wh: i64,
    market_paid: i64,
    market_received: i64,
    dr_net: i64,
    vpp_net: i64,
    total: i64,
    reconciled: bool,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

/// Writes `prosumers.csv`, `clearings.csv`, `dr_settlements.csv` and
/// `vpp_settlements.csv`.
pub fn write_csvs(report: &ReportBundle, dir: &Path) -> std::io::Result<()> {
    write_rows(
        &dir.join("prosumers.csv"),
        report.prosumers.iter().map(|p| ProsumerRow {
            id: &p.id,
            address: p.address,
            metered_wh: p.metered_wh,
            market_paid: p.chain.market_paid,
            market_received: p.chain.market_received,
            dr_net: p.chain.dr_net,
            vpp_net: p.chain.vpp_net,
            total: p.chain.total(),
            reconciled: p.reconciled,
        }),
    )?;
    write_rows(&dir.join("clearings.csv"), &report.clearings)?;
    write_rows(&dir.join("dr_settlements.csv"), &report.dr_settlements)?;
    write_rows(&dir.join("vpp_settlements.csv"), &report.vpp_settlements)
}
