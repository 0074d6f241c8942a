//! Demand-response contract between an aggregator and one prosumer.
//!
//! The aggregator issues flexibility orders over future windows. Each order
//! freezes the baseline values for its window at issuance. After the window
//! has elapsed the aggregator submits the metered readings and the contract
//! computes the settlement:
//!
//! ```text
//! deviation[s] = baseline[s] - metered[s]      (Reduce; negated for Increase)
//! delivered    = sum_s clamp(deviation[s], 0, amount_wh)
//! shortfall    = amount_wh * window_len - delivered
//! reward       = floor(incentive_rate * delivered / 1000)
//! penalty      = floor(penalty_rate * shortfall / 1000)
//! net          = reward - penalty
//! ```
//!
//! Rates are milli-currency per kWh, energies are Wh.

use serde::{Deserialize, Serialize};

use crate::crypto::Address;
use crate::{canonical_struct, canonical_tag_enum};

use super::meter::{EnergyReading, MAX_ABS_ENERGY_WH};
use super::{ContractError, ExecContext, MAX_RATE};

/// Longest window a single order may span.
pub const MAX_WINDOW_SLOTS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Reduce,
    Increase,
}
canonical_tag_enum!(Direction { Reduce = 0, Increase = 1 });

impl Direction {
    /// Sign applied to `baseline - metered` to obtain the delivered deviation.
    pub fn sign(self) -> i64 {
        match self {
            Direction::Reduce => 1,
            Direction::Increase => -1,
        }
    }
}

/// Expected per-slot energy outside any DR program, indexed by slot-of-day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineProfile {
    pub slot_wh: Vec<i64>,
}
canonical_struct!(BaselineProfile { slot_wh });

impl BaselineProfile {
    pub fn at(&self, slot: u64) -> i64 {
        self.slot_wh[(slot % self.slot_wh.len() as u64) as usize]
    }
}

/// Payload of a `DrIssueOrder` transaction. A present `baseline` replaces the
/// contract's profile before the order's window values are frozen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderRequest {
    pub start_slot: u64,
    pub end_slot: u64,
    pub direction: Direction,
    pub amount_wh: u64,
    pub incentive_rate: u64,
    pub penalty_rate: u64,
    pub congestion_point: String,
    pub baseline: Option<BaselineProfile>,
}
canonical_struct!(OrderRequest {
    start_slot,
    end_slot,
    direction,
    amount_wh,
    incentive_rate,
    penalty_rate,
    congestion_point,
    baseline
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlexibilityOrder {
    pub id: u64,
    pub start_slot: u64,
    pub end_slot: u64,
    pub direction: Direction,
    pub amount_wh: u64,
    pub incentive_rate: u64,
    pub penalty_rate: u64,
    pub congestion_point: String,
    /// Baseline values for each slot of the window, frozen at issuance.
    pub baseline_wh: Vec<i64>,
}
canonical_struct!(FlexibilityOrder {
    id,
    start_slot,
    end_slot,
    direction,
    amount_wh,
    incentive_rate,
    penalty_rate,
    congestion_point,
    baseline_wh
});

impl FlexibilityOrder {
    pub fn window_len(&self) -> u64 {
        self.end_slot - self.start_slot
    }

    pub fn ordered_total_wh(&self) -> u64 {
        self.amount_wh * self.window_len()
    }

    pub fn overlaps(&self, start: u64, end: u64) -> bool {
        self.start_slot < end && start < self.end_slot
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub order_id: u64,
    pub delivered_wh: u64,
    pub shortfall_wh: u64,
    pub reward: u64,
    pub penalty: u64,
    pub net: i64,
}
canonical_struct!(Settlement { order_id, delivered_wh, shortfall_wh, reward, penalty, net });

/// Payload of a `DrSettle` transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettleRequest {
    pub order_id: u64,
    pub metered: Vec<EnergyReading>,
}
canonical_struct!(SettleRequest { order_id, metered });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrState {
    pub prosumer: Address,
    pub aggregator: Address,
    pub meter: Address,
    pub baseline: BaselineProfile,
    pub orders: Vec<FlexibilityOrder>,
    pub settlements: Vec<Settlement>,
    pub next_order_id: u64,
}
canonical_struct!(DrState {
    prosumer,
    aggregator,
    meter,
    baseline,
    orders,
    settlements,
    next_order_id
});

fn check_baseline_bounds(b: &BaselineProfile) -> Result<(), ContractError> {
    if b.slot_wh.iter().any(|v| v.abs() > MAX_ABS_ENERGY_WH) {
        return Err(ContractError::Invalid("baseline value out of bounds".into()));
    }
    Ok(())
}

pub(crate) fn mul_div_floor(a: u64, b: u64, d: u64) -> u64 {
    (a as u128 * b as u128 / d as u128) as u64
}

/// Settlement of `order` against per-slot metered energy for its window.
/// `metered[i]` is the energy of slot `order.start_slot + i`.
pub fn compute_settlement(order: &FlexibilityOrder, metered: &[i64]) -> Settlement {
    let sign = order.direction.sign();
    let delivered: u64 = order
        .baseline_wh
        .iter()
        .zip(metered)
        .map(|(&base, &actual)| {
            let deviation = sign * (base - actual);
            deviation.clamp(0, order.amount_wh as i64) as u64
        })
        .sum();
    let shortfall = order.ordered_total_wh() - delivered;
    let reward = mul_div_floor(order.incentive_rate, delivered, 1000);
    let penalty = mul_div_floor(order.penalty_rate, shortfall, 1000);
    Settlement {
        order_id: order.id,
        delivered_wh: delivered,
        shortfall_wh: shortfall,
        reward,
        penalty,
        net: reward as i64 - penalty as i64,
    }
}

impl DrState {
    pub fn new(
        prosumer: Address,
        aggregator: Address,
        meter: Address,
        slots_per_day: u64,
        baseline: BaselineProfile,
    ) -> Result<Self, ContractError> {
        if slots_per_day == 0 || baseline.slot_wh.len() as u64 != slots_per_day {
            return Err(ContractError::Invalid(format!(
                "baseline has {} slots, expected {}",
                baseline.slot_wh.len(),
                slots_per_day
            )));
        }
        check_baseline_bounds(&baseline)?;
        Ok(Self {
            prosumer,
            aggregator,
            meter,
            baseline,
            orders: Vec::new(),
            settlements: Vec::new(),
            next_order_id: 0,
        })
    }

    pub fn slots_per_day(&self) -> u64 {
        self.baseline.slot_wh.len() as u64
    }

    pub fn is_settled(&self, order_id: u64) -> bool {
        self.settlements.iter().any(|s| s.order_id == order_id)
    }

    pub fn order(&self, order_id: u64) -> Option<&FlexibilityOrder> {
        self.orders.iter().find(|o| o.id == order_id)
    }

    pub fn issue_order(
        &mut self,
        req: OrderRequest,
        sender: &Address,
        ctx: &ExecContext,
    ) -> Result<u64, ContractError> {
        if *sender != self.aggregator {
            return Err(ContractError::Unauthorized("aggregator"));
        }
        if req.start_slot >= req.end_slot || req.end_slot - req.start_slot > MAX_WINDOW_SLOTS {
            return Err(ContractError::Invalid(format!(
                "bad window [{}, {})",
                req.start_slot, req.end_slot
            )));
        }
        if req.start_slot <= ctx.tick {
            return Err(ContractError::Invalid(format!(
                "window start {} not after current tick {}",
                req.start_slot, ctx.tick
            )));
        }
        if req.amount_wh == 0 || req.amount_wh > MAX_ABS_ENERGY_WH as u64 {
            return Err(ContractError::Invalid("amount out of range".into()));
        }
        if req.incentive_rate > MAX_RATE || req.penalty_rate > MAX_RATE {
            return Err(ContractError::Invalid("rate out of range".into()));
        }
        if let Some(b) = &req.baseline {
            if b.slot_wh.len() as u64 != self.slots_per_day() {
                return Err(ContractError::Invalid("baseline length mismatch".into()));
            }
            check_baseline_bounds(b)?;
        }
        if let Some(clash) = self
            .orders
            .iter()
            .find(|o| !self.is_settled(o.id) && o.overlaps(req.start_slot, req.end_slot))
        {
            return Err(ContractError::Invalid(format!(
                "window overlaps unsettled order {}",
                clash.id
            )));
        }
        if let Some(b) = req.baseline {
            self.baseline = b;
        }
        let id = self.next_order_id;
        let baseline_wh = (req.start_slot..req.end_slot)
            .map(|s| self.baseline.at(s))
            .collect();
        self.orders.push(FlexibilityOrder {
            id,
            start_slot: req.start_slot,
            end_slot: req.end_slot,
            direction: req.direction,
            amount_wh: req.amount_wh,
            incentive_rate: req.incentive_rate,
            penalty_rate: req.penalty_rate,
            congestion_point: req.congestion_point,
            baseline_wh,
        });
        self.next_order_id += 1;
        Ok(id)
    }

    pub fn settle(
        &mut self,
        req: &SettleRequest,
        sender: &Address,
        ctx: &ExecContext,
    ) -> Result<Settlement, ContractError> {
        if *sender != self.aggregator {
            return Err(ContractError::Unauthorized("aggregator"));
        }
        let order = self
            .order(req.order_id)
            .ok_or_else(|| ContractError::Invalid(format!("unknown order {}", req.order_id)))?;
        if self.is_settled(order.id) {
            return Err(ContractError::Invalid(format!("order {} already settled", order.id)));
        }
        if ctx.tick < order.end_slot {
            return Err(ContractError::Invalid("window has not elapsed".into()));
        }
        if req.metered.len() as u64 != order.window_len() {
            return Err(ContractError::Invalid(format!(
                "metered set has {} readings, window has {} slots",
                req.metered.len(),
                order.window_len()
            )));
        }
        for (i, r) in req.metered.iter().enumerate() {
            if r.slot != order.start_slot + i as u64 || r.device != self.meter {
                return Err(ContractError::Invalid(format!(
                    "metered reading {i} does not cover slot {}",
                    order.start_slot + i as u64
                )));
            }
            if r.energy_wh.abs() > MAX_ABS_ENERGY_WH {
                return Err(ContractError::Invalid("metered reading out of bounds".into()));
            }
        }
        let metered: Vec<i64> = req.metered.iter().map(|r| r.energy_wh).collect();
        let settlement = compute_settlement(order, &metered);
        self.settlements.push(settlement.clone());
        Ok(settlement)
    }
}
