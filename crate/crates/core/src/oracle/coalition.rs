//! VPP coalition formation for a grid service.

use serde::{Deserialize, Serialize};

use crate::canonical_struct;
use crate::contracts::vpp::{AssetRecord, DispatchMember, DispatchRecord, ServiceSpec};

use super::flex::{select_flexibility, Candidate};
use super::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionPlan {
    pub service: ServiceSpec,
    pub members: Vec<DispatchMember>,
    /// Optimizer cost: sum of `cost_rate * dispatch_slots` over members.
    pub total_cost: u64,
    pub exact: bool,
}
canonical_struct!(CoalitionPlan { service, members, total_cost, exact });

impl CoalitionPlan {
    pub fn into_dispatch(self) -> DispatchRecord {
        DispatchRecord {
            service: self.service,
            members: self.members,
        }
    }

    pub fn scheduled_per_slot(&self) -> u64 {
        self.members.iter().map(|m| m.scheduled_wh).sum()
    }
}

pub fn form_coalition(assets: &[AssetRecord], service: &ServiceSpec) -> Result<CoalitionPlan, ServiceError> {
    if service.capacity_wh_per_slot == 0 {
        return Err(ServiceError::Invalid("service capacity must be positive".into()));
    }
    let eligible: Vec<&AssetRecord> = assets.iter().filter(|a| service.violation(a).is_none()).collect();
    let candidates: Vec<Candidate> = eligible
        .iter()
        .map(|a| Candidate {
            id: a.id,
            flex_wh: a.capacity_wh_per_slot,
            cost: a.cost_rate.saturating_mul(service.dispatch_slots),
        })
        .collect();
    let selection = select_flexibility(&candidates, service.capacity_wh_per_slot);
    if !selection.feasible {
        let available: u64 = candidates.iter().map(|c| c.flex_wh).sum();
        return Err(ServiceError::Infeasible(format!(
            "{} eligible assets offer {} Wh per slot, service needs {}",
            eligible.len(),
            available,
            service.capacity_wh_per_slot
        )));
    }
    let mut chosen: Vec<&AssetRecord> = eligible
        .into_iter()
        .filter(|a| selection.chosen.binary_search(&a.id).is_ok())
        .collect();
    chosen.sort_by_key(|a| (a.cost_rate, a.id));
    let mut residual = service.capacity_wh_per_slot;
    let mut members = Vec::new();
    for a in chosen {
        let scheduled = a.capacity_wh_per_slot.min(residual);
        if scheduled == 0 {
            break;
        }
        residual -= scheduled;
        members.push(DispatchMember {
            asset_id: a.id,
            scheduled_wh: scheduled,
        });
    }
    Ok(CoalitionPlan {
        service: service.clone(),
        members,
        total_cost: selection.total_cost,
        exact: selection.exact,
    })
}
