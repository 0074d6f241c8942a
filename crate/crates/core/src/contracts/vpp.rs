//! Virtual power plant contract: asset registry, coalition dispatches and
//! per-dispatch settlement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::canonical_struct;
use crate::crypto::Address;

use super::dr::mul_div_floor;
use super::meter::MAX_ABS_ENERGY_WH;
use super::{ContractError, ExecContext, MAX_RATE};

/// Payload of a `VppRegisterAsset` transaction. The sender becomes the owner
/// and must also own `meter`, which measures the asset's output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRegistration {
    pub meter: Address,
    pub capacity_wh_per_slot: u64,
    pub response_time_slots: u64,
    pub sync_time_slots: u64,
    pub max_dispatch_slots: u64,
    pub band: String,
    pub cost_rate: u64,
}
canonical_struct!(AssetRegistration {
    meter,
    capacity_wh_per_slot,
    response_time_slots,
    sync_time_slots,
    max_dispatch_slots,
    band,
    cost_rate
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub id: u64,
    pub owner: Address,
    pub meter: Address,
    pub capacity_wh_per_slot: u64,
    pub response_time_slots: u64,
    pub sync_time_slots: u64,
    pub max_dispatch_slots: u64,
    /// Opaque flexibility band tag; services may require an exact match.
    pub band: String,
    /// Milli-currency per kWh delivered.
    pub cost_rate: u64,
}
canonical_struct!(AssetRecord {
    id,
    owner,
    meter,
    capacity_wh_per_slot,
    response_time_slots,
    sync_time_slots,
    max_dispatch_slots,
    band,
    cost_rate
});

/// A grid service the VPP commits a coalition to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub service_id: u64,
    pub start_slot: u64,
    pub capacity_wh_per_slot: u64,
    pub max_response_slots: u64,
    pub max_sync_slots: u64,
    pub dispatch_slots: u64,
    /// Revenue per kWh paid to the VPP by the service buyer.
    pub price_rate: u64,
    /// Charged per kWh of member shortfall.
    pub penalty_rate: u64,
    #[serde(default)]
    pub band: Option<String>,
}
canonical_struct!(ServiceSpec {
    service_id,
    start_slot,
    capacity_wh_per_slot,
    max_response_slots,
    max_sync_slots,
    dispatch_slots,
    price_rate,
    penalty_rate,
    band
});

impl ServiceSpec {
    pub fn end_slot(&self) -> u64 {
        self.start_slot + self.dispatch_slots
    }

    /// Why `asset` cannot serve this service, if it cannot.
    pub fn violation(&self, asset: &AssetRecord) -> Option<String> {
        if asset.response_time_slots > self.max_response_slots {
            return Some(format!(
                "asset {} response time {} exceeds {}",
                asset.id, asset.response_time_slots, self.max_response_slots
            ));
        }
        if asset.sync_time_slots > self.max_sync_slots {
            return Some(format!(
                "asset {} sync time {} exceeds {}",
                asset.id, asset.sync_time_slots, self.max_sync_slots
            ));
        }
        if asset.max_dispatch_slots < self.dispatch_slots {
            return Some(format!(
                "asset {} max dispatch {} shorter than {}",
                asset.id, asset.max_dispatch_slots, self.dispatch_slots
            ));
        }
        if let Some(band) = &self.band {
            if *band != asset.band {
                return Some(format!("asset {} band {:?} is not {:?}", asset.id, asset.band, band));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchMember {
    pub asset_id: u64,
    /// Scheduled output per slot of the window.
    pub scheduled_wh: u64,
}
canonical_struct!(DispatchMember { asset_id, scheduled_wh });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub service: ServiceSpec,
    pub members: Vec<DispatchMember>,
}
canonical_struct!(DispatchRecord { service, members });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberDelivery {
    pub asset_id: u64,
    pub delivered_wh: u64,
}
canonical_struct!(MemberDelivery { asset_id, delivered_wh });

/// Payload of a `VppSettle` transaction: delivered energy per member over
/// the whole window, in dispatch member order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub service_id: u64,
    pub delivered: Vec<MemberDelivery>,
}
canonical_struct!(DeliveryReport { service_id, delivered });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberSettlement {
    pub asset_id: u64,
    pub owner: Address,
    /// Scheduled total over the window.
    pub scheduled_wh: u64,
    /// Delivered energy counted toward the schedule (capped at it).
    pub delivered_wh: u64,
    pub shortfall_wh: u64,
    pub payout: u64,
    pub penalty: u64,
    pub net: i64,
}
canonical_struct!(MemberSettlement {
    asset_id,
    owner,
    scheduled_wh,
    delivered_wh,
    shortfall_wh,
    payout,
    penalty,
    net
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VppSettlement {
    pub service_id: u64,
    pub members: Vec<MemberSettlement>,
}
canonical_struct!(VppSettlement { service_id, members });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VppState {
    pub operator: Address,
    pub oracle: Address,
    pub assets: Vec<AssetRecord>,
    pub dispatches: Vec<DispatchRecord>,
    pub settlements: Vec<VppSettlement>,
}
canonical_struct!(VppState { operator, oracle, assets, dispatches, settlements });

/// Payout and penalty for one member given its total delivered energy.
pub fn settle_member(
    asset: &AssetRecord,
    member: &DispatchMember,
    dispatch_slots: u64,
    penalty_rate: u64,
    delivered_wh: u64,
) -> MemberSettlement {
    let scheduled = member.scheduled_wh * dispatch_slots;
    let counted = delivered_wh.min(scheduled);
    let shortfall = scheduled - counted;
    let payout = mul_div_floor(asset.cost_rate, counted, 1000);
    let penalty = mul_div_floor(penalty_rate, shortfall, 1000);
    MemberSettlement {
        asset_id: asset.id,
        owner: asset.owner,
        scheduled_wh: scheduled,
        delivered_wh: counted,
        shortfall_wh: shortfall,
        payout,
        penalty,
        net: payout as i64 - penalty as i64,
    }
}

impl VppState {
    pub fn new(operator: Address, oracle: Address) -> Self {
        Self {
            operator,
            oracle,
            assets: Vec::new(),
            dispatches: Vec::new(),
            settlements: Vec::new(),
        }
    }

    pub fn asset(&self, id: u64) -> Option<&AssetRecord> {
        self.assets.iter().find(|a| a.id == id)
    }

    pub fn dispatch(&self, service_id: u64) -> Option<&DispatchRecord> {
        self.dispatches.iter().find(|d| d.service.service_id == service_id)
    }

    pub fn is_settled(&self, service_id: u64) -> bool {
        self.settlements.iter().any(|s| s.service_id == service_id)
    }

    /// Registers an asset. `meter_owner` is the owner of `reg.meter` as found
    /// in the world state, or `None` when no such meter exists.
    pub fn register_asset(
        &mut self,
        reg: AssetRegistration,
        sender: &Address,
        meter_owner: Option<Address>,
    ) -> Result<u64, ContractError> {
        if meter_owner != Some(*sender) {
            return Err(ContractError::Unauthorized("asset meter owner"));
        }
        if self.assets.iter().any(|a| a.meter == reg.meter) {
            return Err(ContractError::Invalid("meter already registered".into()));
        }
        if reg.capacity_wh_per_slot == 0 || reg.capacity_wh_per_slot > MAX_ABS_ENERGY_WH as u64 {
            return Err(ContractError::Invalid("capacity out of range".into()));
        }
        if reg.cost_rate > MAX_RATE {
            return Err(ContractError::Invalid("cost rate out of range".into()));
        }
        let id = self.assets.len() as u64;
        self.assets.push(AssetRecord {
            id,
            owner: *sender,
            meter: reg.meter,
            capacity_wh_per_slot: reg.capacity_wh_per_slot,
            response_time_slots: reg.response_time_slots,
            sync_time_slots: reg.sync_time_slots,
            max_dispatch_slots: reg.max_dispatch_slots,
            band: reg.band,
            cost_rate: reg.cost_rate,
        });
        Ok(id)
    }

    pub fn record_dispatch(
        &mut self,
        record: DispatchRecord,
        sender: &Address,
        ctx: &ExecContext,
    ) -> Result<(), ContractError> {
        if *sender != self.oracle && *sender != self.operator {
            return Err(ContractError::Unauthorized("VPP oracle or operator"));
        }
        let svc = &record.service;
        if self.dispatch(svc.service_id).is_some() {
            return Err(ContractError::Invalid(format!(
                "service {} already dispatched",
                svc.service_id
            )));
        }
        if svc.dispatch_slots == 0 || svc.dispatch_slots > super::dr::MAX_WINDOW_SLOTS {
            return Err(ContractError::Invalid("bad dispatch window".into()));
        }
        if svc.start_slot <= ctx.tick {
            return Err(ContractError::Invalid(format!(
                "dispatch window start {} not after tick {}",
                svc.start_slot, ctx.tick
            )));
        }
        if svc.penalty_rate > MAX_RATE || svc.price_rate > MAX_RATE {
            return Err(ContractError::Invalid("rate out of range".into()));
        }
        if record.members.is_empty() {
            return Err(ContractError::Invalid("empty coalition".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &record.members {
            if !seen.insert(m.asset_id) {
                return Err(ContractError::Invalid(format!("asset {} listed twice", m.asset_id)));
            }
            let asset = self
                .asset(m.asset_id)
                .ok_or_else(|| ContractError::Invalid(format!("asset {} not registered", m.asset_id)))?;
            if let Some(why) = svc.violation(asset) {
                return Err(ContractError::Constraint(why));
            }
            if m.scheduled_wh == 0 || m.scheduled_wh > asset.capacity_wh_per_slot {
                return Err(ContractError::Constraint(format!(
                    "asset {} scheduled {} Wh outside (0, {}]",
                    m.asset_id, m.scheduled_wh, asset.capacity_wh_per_slot
                )));
            }
        }
        self.dispatches.push(record);
        Ok(())
    }

    pub fn settle(
        &mut self,
        report: &DeliveryReport,
        sender: &Address,
        ctx: &ExecContext,
    ) -> Result<VppSettlement, ContractError> {
        if *sender != self.operator {
            return Err(ContractError::Unauthorized("VPP operator"));
        }
        let dispatch = self
            .dispatch(report.service_id)
            .ok_or_else(|| ContractError::Invalid(format!("unknown service {}", report.service_id)))?;
        if self.is_settled(report.service_id) {
            return Err(ContractError::Invalid("service already settled".into()));
        }
        if ctx.tick < dispatch.service.end_slot() {
            return Err(ContractError::Invalid("dispatch window has not elapsed".into()));
        }
        if report.delivered.len() != dispatch.members.len()
            || report
                .delivered
                .iter()
                .zip(&dispatch.members)
                .any(|(d, m)| d.asset_id != m.asset_id)
        {
            return Err(ContractError::Invalid("delivery report does not match coalition".into()));
        }
        let members = dispatch
            .members
            .iter()
            .zip(&report.delivered)
            .map(|(m, d)| {
                let asset = self.asset(m.asset_id).expect("dispatch members are registered");
                settle_member(
                    asset,
                    m,
                    dispatch.service.dispatch_slots,
                    dispatch.service.penalty_rate,
                    d.delivered_wh,
                )
            })
            .collect();
        let settlement = VppSettlement {
            service_id: report.service_id,
            members,
        };
        self.settlements.push(settlement.clone());
        Ok(settlement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPERATOR: Address = Address([1u8; 20]);
    const ORACLE: Address = Address([2u8; 20]);
    const OWNER: Address = Address([3u8; 20]);

    fn registration(meter: u8, response: u64) -> AssetRegistration {
        AssetRegistration {
            meter: Address([meter; 20]),
            capacity_wh_per_slot: 2000,
            response_time_slots: response,
            sync_time_slots: 0,
            max_dispatch_slots: 4,
            band: "fast".into(),
            cost_rate: 150,
        }
    }

    fn service(dispatch_slots: u64) -> ServiceSpec {
        ServiceSpec {
            service_id: 1,
            start_slot: 10,
            capacity_wh_per_slot: 2000,
            max_response_slots: 2,
            max_sync_slots: 1,
            dispatch_slots,
            price_rate: 300,
            penalty_rate: 100,
            band: None,
        }
    }

    fn vpp() -> VppState {
        let mut v = VppState::new(OPERATOR, ORACLE);
        v.register_asset(registration(10, 1), &OWNER, Some(OWNER)).unwrap();
        v.register_asset(registration(11, 5), &OWNER, Some(OWNER)).unwrap();
        v
    }

    fn dispatch(asset_id: u64) -> DispatchRecord {
        DispatchRecord {
            service: service(1),
            members: vec![DispatchMember {
                asset_id,
                scheduled_wh: 2000,
            }],
        }
    }

    #[test]
    fn registration_requires_meter_ownership() {
        let mut v = VppState::new(OPERATOR, ORACLE);
        assert!(v.register_asset(registration(10, 1), &OWNER, None).is_err());
        assert!(v
            .register_asset(registration(10, 1), &OWNER, Some(OPERATOR))
            .is_err());
    }

    #[test]
    fn slow_asset_rejected_from_dispatch() {
        let mut v = vpp();
        let err = v.record_dispatch(dispatch(1), &ORACLE, &ExecContext { tick: 0 });
        assert!(matches!(err, Err(ContractError::Constraint(_))));
        assert!(v.dispatches.is_empty());
    }

    #[test]
    fn unregistered_member_rejected() {
        let mut v = vpp();
        assert!(v
            .record_dispatch(dispatch(9), &ORACLE, &ExecContext { tick: 0 })
            .is_err());
    }

    #[test]
    fn full_delivery_payout() {
        let mut v = vpp();
        v.record_dispatch(dispatch(0), &ORACLE, &ExecContext { tick: 0 }).unwrap();
        let s = v
            .settle(
                &DeliveryReport {
                    service_id: 1,
                    delivered: vec![MemberDelivery {
                        asset_id: 0,
                        delivered_wh: 2000,
                    }],
                },
                &OPERATOR,
                &ExecContext { tick: 11 },
            )
            .unwrap();
        assert_eq!(s.members[0].payout, 300);
        assert_eq!(s.members[0].penalty, 0);
    }

    #[test]
    fn zero_delivery_penalized() {
        let mut v = vpp();
        v.record_dispatch(dispatch(0), &OPERATOR, &ExecContext { tick: 0 }).unwrap();
        let report = DeliveryReport {
            service_id: 1,
            delivered: vec![MemberDelivery {
                asset_id: 0,
                delivered_wh: 0,
            }],
        };
        assert!(v.settle(&report, &OPERATOR, &ExecContext { tick: 10 }).is_err());
        let s = v.settle(&report, &OPERATOR, &ExecContext { tick: 11 }).unwrap();
        assert_eq!((s.members[0].payout, s.members[0].penalty), (0, 100 * 2000 / 1000));
        assert!(v.settle(&report, &OPERATOR, &ExecContext { tick: 12 }).is_err());
    }

    #[test]
    fn band_filter_applies() {
        let mut svc = service(1);
        let asset = vpp().assets[0].clone();
        assert!(svc.violation(&asset).is_none());
        svc.band = Some("slow".into());
        assert!(svc.violation(&asset).is_some());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn member_settlement_accounts_for_schedule(
                scheduled in 0u64..5000,
                slots in 1u64..10,
                delivered in 0u64..80_000,
                cost_rate in 0u64..1000,
                penalty_rate in 0u64..1000,
            ) {
                let asset = AssetRecord {
                    id: 3,
                    owner: Address([9; 20]),
                    meter: Address([8; 20]),
                    capacity_wh_per_slot: scheduled,
                    response_time_slots: 0,
                    sync_time_slots: 0,
                    max_dispatch_slots: slots,
                    band: String::new(),
                    cost_rate,
                };
                let member = DispatchMember { asset_id: 3, scheduled_wh: scheduled };
                let s = settle_member(&asset, &member, slots, penalty_rate, delivered);
                prop_assert_eq!(s.delivered_wh + s.shortfall_wh, scheduled * slots);
                prop_assert!(s.delivered_wh <= delivered);
                prop_assert_eq!(s.payout, cost_rate * s.delivered_wh / 1000);
                prop_assert_eq!(s.penalty, penalty_rate * s.shortfall_wh / 1000);
            }
        }
    }
}
