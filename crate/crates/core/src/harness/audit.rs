//! Independent audit of settlement data on a ledger: every DR settlement,
//! clearing and VPP payout is recomputed from the raw readings and orders
//! committed on chain.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::codec::Canonical;
use crate::contracts::dr::SettleRequest;
use crate::contracts::market::{ClearingResult, MarketState, Side};
use crate::contracts::meter::EnergyReading;
use crate::contracts::vpp::DeliveryReport;
use crate::contracts::{apply_transaction, ExecContext, WorldState};
use crate::crypto::{Address, Hash32};
use crate::ledger::block::Block;
use crate::ledger::store::read_ledger;
use crate::ledger::tx::{Transaction, TxKind};
use crate::oracle::wire::{OracleResponseBody, ServiceResult};

use super::report::{conservation, Conservation};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("cannot read ledger: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger framing broken at height {height}: {message}")]
    Framing { height: u64, message: String },
    #[error("chain invalid at height {height}: {message} (run verify)")]
    Chain { height: u64, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub height: u64,
    pub tx_hash: Option<Hash32>,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub blocks: u64,
    pub dr_settlements_checked: u64,
    pub clearings_checked: u64,
    pub vpp_settlements_checked: u64,
    pub conservation: Conservation,
    pub discrepancies: Vec<Discrepancy>,
}

impl AuditReport {
    pub fn clean(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

fn floor_rate(rate: u64, wh: u64) -> u64 {
    (rate as u128 * wh as u128 / 1000) as u64
}

#[derive(Default)]
struct Auditor {
    readings: BTreeMap<Address, BTreeMap<u64, i64>>,
    report_dr: u64,
    report_clearings: u64,
    report_vpp: u64,
}

impl Auditor {
    fn raw(&self, meter: &Address, slot: u64) -> Result<i64, String> {
        self.readings
            .get(meter)
            .and_then(|r| r.get(&slot))
            .copied()
            .ok_or_else(|| format!("no on-chain reading of meter {meter} for slot {slot}"))
    }

    fn check_dr(&mut self, tx: &Transaction, post: &WorldState) -> Result<(), String> {
        self.report_dr += 1;
        let req = SettleRequest::from_canonical_bytes(&tx.payload).map_err(|e| e.to_string())?;
        let dr = post.dr(&tx.receiver).ok_or("settled contract vanished")?;
        let order = dr.order(req.order_id).ok_or("settled order missing")?;
        let recorded = dr
            .settlements
            .iter()
            .find(|s| s.order_id == order.id)
            .ok_or("settlement not recorded")?;
        let mut delivered = 0u64;
        for (i, slot) in (order.start_slot..order.end_slot).enumerate() {
            let raw = self.raw(&dr.meter, slot)?;
            let claimed = req.metered.get(i).map(|r| r.energy_wh);
            if claimed != Some(raw) {
                return Err(format!(
                    "order {} slot {slot}: settlement used {claimed:?} Wh, meter recorded {raw} Wh",
                    order.id
                ));
            }
            let baseline = order.baseline_wh[i];
            let deviation = match order.direction {
                crate::contracts::dr::Direction::Reduce => baseline - raw,
                crate::contracts::dr::Direction::Increase => raw - baseline,
            };
            delivered += deviation.clamp(0, order.amount_wh as i64) as u64;
        }
        let shortfall = order.amount_wh * (order.end_slot - order.start_slot) - delivered;
        let reward = floor_rate(order.incentive_rate, delivered);
        let penalty = floor_rate(order.penalty_rate, shortfall);
        let expected = (delivered, shortfall, reward, penalty, reward as i64 - penalty as i64);
        let got = (
            recorded.delivered_wh,
            recorded.shortfall_wh,
            recorded.reward,
            recorded.penalty,
            recorded.net,
        );
        if expected != got {
            return Err(format!(
                "order {}: recomputed (delivered, shortfall, reward, penalty, net) {expected:?}, recorded {got:?}",
                order.id
            ));
        }
        Ok(())
    }

    fn check_clearing(&mut self, result: &ClearingResult, pre: &MarketState, post: &MarketState) -> Result<(), String> {
        self.report_clearings += 1;
        let price = result.clearing_price;
        let mut filled: BTreeMap<u64, u64> = BTreeMap::new();
        let mut volume = 0u64;
        for m in &result.matches {
            let find = |id: u64| pre.open_orders.iter().find(|o| o.id == id && o.slot == result.slot);
            let bid = find(m.bid_id).ok_or(format!("bid {} not open for slot {}", m.bid_id, result.slot))?;
            let offer = find(m.offer_id).ok_or(format!("offer {} not open for slot {}", m.offer_id, result.slot))?;
            if bid.side != Side::Bid || offer.side != Side::Offer {
                return Err(format!("match {}/{} pairs the wrong sides", m.bid_id, m.offer_id));
            }
            if bid.limit_price < price || offer.limit_price > price {
                return Err(format!("match {}/{} violates limits at price {price}", m.bid_id, m.offer_id));
            }
            for (id, cap) in [(bid.id, bid.qty_wh), (offer.id, offer.qty_wh)] {
                let f = filled.entry(id).or_default();
                *f += m.qty_wh;
                if *f > cap {
                    return Err(format!("order {id} filled {f} Wh beyond its {cap} Wh"));
                }
            }
            volume += m.qty_wh;
        }
        if volume != result.total_qty_wh {
            return Err(format!("declared volume {} but matches sum to {volume}", result.total_qty_wh));
        }
        let trades = &post.trades[pre.trades.len()..];
        if trades.len() != result.matches.len() {
            return Err(format!("{} matches but {} trades recorded", result.matches.len(), trades.len()));
        }
        for (t, m) in trades.iter().zip(&result.matches) {
            let owner = |id: u64| pre.open_orders.iter().find(|o| o.id == id).map(|o| o.owner);
            let payment = (m.qty_wh as i128 * price as i128 / 1000) as i64;
            if t.qty_wh != m.qty_wh || t.price != price || t.payment != payment {
                return Err(format!("trade {}/{} pays {}, expected {payment}", m.bid_id, m.offer_id, t.payment));
            }
            if Some(t.buyer) != owner(m.bid_id) || Some(t.seller) != owner(m.offer_id) {
                return Err(format!("trade {}/{} names the wrong parties", m.bid_id, m.offer_id));
            }
        }
        Ok(())
    }

    fn check_vpp(&mut self, tx: &Transaction, post: &WorldState) -> Result<(), String> {
        self.report_vpp += 1;
        let report = DeliveryReport::from_canonical_bytes(&tx.payload).map_err(|e| e.to_string())?;
        let vpp = post.vpp(&tx.receiver).ok_or("settled VPP vanished")?;
        let dispatch = vpp.dispatch(report.service_id).ok_or("settled service has no dispatch")?;
        let recorded = vpp
            .settlements
            .iter()
            .find(|s| s.service_id == report.service_id)
            .ok_or("VPP settlement not recorded")?;
        let svc = &dispatch.service;
        if recorded.members.len() != dispatch.members.len() {
            return Err("settlement and dispatch member counts differ".into());
        }
        for ((m, claimed), rec) in dispatch.members.iter().zip(&report.delivered).zip(&recorded.members) {
            let asset = vpp.asset(m.asset_id).ok_or("dispatched asset missing")?;
            let mut raw = 0u64;
            for slot in svc.start_slot..svc.end_slot() {
                raw += (-self.raw(&asset.meter, slot)?).max(0) as u64;
            }
            if claimed.asset_id != m.asset_id || claimed.delivered_wh != raw {
                return Err(format!(
                    "service {} asset {}: reported {} Wh delivered, asset meter shows {raw} Wh",
                    svc.service_id, m.asset_id, claimed.delivered_wh
                ));
            }
            let scheduled = m.scheduled_wh * svc.dispatch_slots;
            let counted = raw.min(scheduled);
            let payout = floor_rate(asset.cost_rate, counted);
            let penalty = floor_rate(svc.penalty_rate, scheduled - counted);
            let expected = (asset.owner, scheduled, counted, payout, penalty, payout as i64 - penalty as i64);
            let got = (rec.owner, rec.scheduled_wh, rec.delivered_wh, rec.payout, rec.penalty, rec.net);
            if expected != got {
                return Err(format!(
                    "service {} asset {}: recomputed {expected:?}, recorded {got:?}",
                    svc.service_id, m.asset_id
                ));
            }
        }
        Ok(())
    }
}

/// Clearing carried by `tx`, if it is a clearing submission to a market.
fn clearing_of(tx: &Transaction, world: &WorldState) -> Option<ClearingResult> {
    world.market(&tx.receiver)?;
    match tx.kind {
        TxKind::MarketRecordClearing => ClearingResult::from_canonical_bytes(&tx.payload).ok(),
        TxKind::OracleResponse => match OracleResponseBody::from_canonical_bytes(&tx.payload).ok()?.outcome {
            Ok(ServiceResult::Clearing(c)) => Some(c),
            _ => None,
        },
        _ => None,
    }
}

/// Re-executes `blocks` (signatures are the business of verify) and checks
/// every settlement-bearing transaction.
pub fn audit_blocks(blocks: &[Block]) -> Result<AuditReport, AuditError> {
    let mut world = WorldState::new();
    let mut auditor = Auditor::default();
    let mut discrepancies = Vec::new();
    if let Some(genesis) = blocks.first() {
        if genesis.header.state_root != world.root() || !genesis.transactions.is_empty() {
            return Err(AuditError::Chain {
                height: 0,
                message: "genesis block is not empty".into(),
            });
        }
    }
    for block in blocks.iter().skip(1) {
        let height = block.height();
        let ctx = ExecContext { tick: block.header.tick };
        for tx in &block.transactions {
            let pre_market = clearing_of(tx, &world).map(|c| (c, world.market(&tx.receiver).cloned().expect("market")));
            let receipt = apply_transaction(&mut world, tx, &ctx).map_err(|e| AuditError::Chain {
                height,
                message: e.to_string(),
            })?;
            if !receipt.success {
                continue;
            }
            let outcome = match tx.kind {
                TxKind::MeterUpdate => {
                    if let Ok(r) = EnergyReading::from_canonical_bytes(&tx.payload) {
                        auditor.readings.entry(tx.receiver).or_default().insert(r.slot, r.energy_wh);
                    }
                    Ok(())
                }
                TxKind::DrSettle => auditor.check_dr(tx, &world),
                TxKind::VppSettle => auditor.check_vpp(tx, &world),
                _ => match pre_market {
                    Some((result, pre)) => {
                        let post = world.market(&tx.receiver).expect("market persists");
                        auditor.check_clearing(&result, &pre, post)
                    }
                    None => Ok(()),
                },
            };
            if let Err(message) = outcome {
                discrepancies.push(Discrepancy {
                    height,
                    tx_hash: Some(receipt.tx_hash),
                    kind: format!("{:?}", tx.kind),
                    message,
                });
            }
        }
        if world.root() != block.header.state_root {
            return Err(AuditError::Chain {
                height,
                message: "state root mismatch".into(),
            });
        }
    }
    let balance = conservation(&world);
    if !balance.holds {
        discrepancies.push(Discrepancy {
            height: blocks.last().map_or(0, |b| b.height()),
            tx_hash: None,
            kind: "conservation".into(),
            message: format!("{balance:?}"),
        });
    }
    Ok(AuditReport {
        blocks: blocks.len() as u64,
        dr_settlements_checked: auditor.report_dr,
        clearings_checked: auditor.report_clearings,
        vpp_settlements_checked: auditor.report_vpp,
        conservation: balance,
        discrepancies,
    })
}

pub fn audit_file(path: &Path) -> Result<AuditReport, AuditError> {
    let (blocks, frame_error) = read_ledger(path)?;
    if let Some(e) = frame_error {
        return Err(AuditError::Framing {
            height: e.height,
            message: e.message,
        });
    }
    audit_blocks(&blocks)
}
