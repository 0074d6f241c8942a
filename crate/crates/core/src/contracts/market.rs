//! Peer-to-peer energy market contract: an order book per delivery slot and
//! the record of oracle-posted clearings.
//!
//! The contract does not trust the oracle. Every posted clearing is
//! re-checked against the open book before any trade is recorded.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::Address;
use crate::{canonical_struct, canonical_tag_enum};

use super::dr::mul_div_floor;
use super::meter::MAX_ABS_ENERGY_WH;
use super::{ContractError, ExecContext, MAX_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Bid,
    Offer,
}
canonical_tag_enum!(Side { Bid = 0, Offer = 1 });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub side: Side,
    pub owner: Address,
    /// Remaining unmatched quantity.
    pub qty_wh: u64,
    /// Milli-currency per kWh.
    pub limit_price: i64,
    pub slot: u64,
}
canonical_struct!(Order { id, side, owner, qty_wh, limit_price, slot });

/// Payload of a `MarketSubmitOrder` transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderSubmission {
    pub side: Side,
    pub owner: Address,
    pub qty_wh: u64,
    pub limit_price: i64,
    pub slot: u64,
}
canonical_struct!(OrderSubmission { side, owner, qty_wh, limit_price, slot });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub bid_id: u64,
    pub offer_id: u64,
    pub qty_wh: u64,
}
canonical_struct!(Match { bid_id, offer_id, qty_wh });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub slot: u64,
    pub clearing_price: i64,
    pub matches: Vec<Match>,
    pub total_qty_wh: u64,
}
canonical_struct!(ClearingResult { slot, clearing_price, matches, total_qty_wh });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub clearing: u64,
    pub slot: u64,
    pub bid_id: u64,
    pub offer_id: u64,
    pub buyer: Address,
    pub seller: Address,
    pub qty_wh: u64,
    pub price: i64,
    /// Paid by the buyer to the seller: `floor(qty_wh * price / 1000)`.
    pub payment: i64,
}
canonical_struct!(Trade { clearing, slot, bid_id, offer_id, buyer, seller, qty_wh, price, payment });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketState {
    pub oracle: Address,
    pub open_orders: Vec<Order>,
    pub clearings: Vec<ClearingResult>,
    pub trades: Vec<Trade>,
    pub next_order_id: u64,
}
canonical_struct!(MarketState { oracle, open_orders, clearings, trades, next_order_id });

pub fn trade_payment(qty_wh: u64, price: i64) -> i64 {
    mul_div_floor(qty_wh, price.max(0) as u64, 1000) as i64
}

impl MarketState {
    pub fn new(oracle: Address) -> Self {
        Self {
            oracle,
            open_orders: Vec::new(),
            clearings: Vec::new(),
            trades: Vec::new(),
            next_order_id: 0,
        }
    }

    pub fn open_for_slot(&self, slot: u64) -> impl Iterator<Item = &Order> {
        self.open_orders.iter().filter(move |o| o.slot == slot)
    }

    pub fn submit_order(
        &mut self,
        sub: OrderSubmission,
        sender: &Address,
        ctx: &ExecContext,
    ) -> Result<u64, ContractError> {
        if sub.owner != *sender {
            return Err(ContractError::Unauthorized("order owner"));
        }
        if sub.qty_wh == 0 || sub.qty_wh > MAX_ABS_ENERGY_WH as u64 {
            return Err(ContractError::Invalid(format!("quantity {} out of range", sub.qty_wh)));
        }
        if sub.limit_price < 0 || sub.limit_price > MAX_RATE as i64 {
            return Err(ContractError::Invalid(format!("price {} out of range", sub.limit_price)));
        }
        if sub.slot < ctx.tick {
            return Err(ContractError::Invalid(format!(
                "delivery slot {} already past at tick {}",
                sub.slot, ctx.tick
            )));
        }
        let id = self.next_order_id;
        self.open_orders.push(Order {
            id,
            side: sub.side,
            owner: sub.owner,
            qty_wh: sub.qty_wh,
            limit_price: sub.limit_price,
            slot: sub.slot,
        });
        self.next_order_id += 1;
        Ok(id)
    }

    /// Checks a posted clearing against the open book. Returns the per-order
    /// matched quantities on success.
    pub fn check_clearing(&self, result: &ClearingResult) -> Result<BTreeMap<u64, u64>, ContractError> {
        let infeasible = |msg: String| Err(ContractError::Infeasible(msg));
        if result.clearing_price < 0 || result.clearing_price > MAX_RATE as i64 {
            return infeasible(format!("clearing price {} out of range", result.clearing_price));
        }
        let book: BTreeMap<u64, &Order> = self
            .open_for_slot(result.slot)
            .map(|o| (o.id, o))
            .collect();
        let mut filled: BTreeMap<u64, u64> = BTreeMap::new();
        let (mut bought, mut sold) = (0u64, 0u64);
        for m in &result.matches {
            if m.qty_wh == 0 {
                return infeasible("zero-quantity match".into());
            }
            let (Some(bid), Some(offer)) = (book.get(&m.bid_id), book.get(&m.offer_id)) else {
                return infeasible(format!(
                    "match {}/{} references an order not open for slot {}",
                    m.bid_id, m.offer_id, result.slot
                ));
            };
            if bid.side != Side::Bid || offer.side != Side::Offer {
                return infeasible("match sides reversed".into());
            }
            if bid.limit_price < result.clearing_price {
                return infeasible(format!(
                    "bid {} limit {} below clearing price {}",
                    bid.id, bid.limit_price, result.clearing_price
                ));
            }
            if offer.limit_price > result.clearing_price {
                return infeasible(format!(
                    "offer {} limit {} above clearing price {}",
                    offer.id, offer.limit_price, result.clearing_price
                ));
            }
            for id in [m.bid_id, m.offer_id] {
                let f = filled.entry(id).or_default();
                *f += m.qty_wh;
                if *f > book[&id].qty_wh {
                    return infeasible(format!("order {id} overfilled"));
                }
            }
            bought += m.qty_wh;
            sold += m.qty_wh;
        }
        if bought != result.total_qty_wh || sold != result.total_qty_wh {
            return infeasible(format!(
                "declared volume {} but matched {} bought / {} sold",
                result.total_qty_wh, bought, sold
            ));
        }
        Ok(filled)
    }

    pub fn record_clearing(
        &mut self,
        result: ClearingResult,
        sender: &Address,
    ) -> Result<(), ContractError> {
        if *sender != self.oracle {
            return Err(ContractError::Unauthorized("market oracle"));
        }
        let filled = self.check_clearing(&result)?;
        let clearing = self.clearings.len() as u64;
        for m in &result.matches {
            let owner = |id: u64| {
                self.open_orders
                    .iter()
                    .find(|o| o.id == id)
                    .map(|o| o.owner)
                    .expect("checked above")
            };
            self.trades.push(Trade {
                clearing,
                slot: result.slot,
                bid_id: m.bid_id,
                offer_id: m.offer_id,
                buyer: owner(m.bid_id),
                seller: owner(m.offer_id),
                qty_wh: m.qty_wh,
                price: result.clearing_price,
                payment: trade_payment(m.qty_wh, result.clearing_price),
            });
        }
        for order in &mut self.open_orders {
            if let Some(q) = filled.get(&order.id) {
                order.qty_wh -= q;
            }
        }
        self.open_orders.retain(|o| o.qty_wh > 0);
        self.clearings.push(result);
        Ok(())
    }
}
