//! Payloads carried by `OracleRequest` and `OracleResponse` transactions.

use serde::{Deserialize, Serialize};

use crate::canonical_struct;
use crate::codec::{Canonical, CodecError, Reader, Writer};
use crate::contracts::dr::BaselineProfile;
use crate::contracts::market::ClearingResult;
use crate::contracts::vpp::ServiceSpec;
use crate::crypto::{Address, Hash32};

use super::coalition::CoalitionPlan;
use super::flex::{Candidate, FlexSelection};
use super::forecast::Horizon;

/// The only optimization criterion the services implement.
pub const MIN_COST: &str = "min-cost";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServiceRequest {
    /// Forecast of the readings accepted by meter `series` before `from_slot`.
    Forecast {
        series: Address,
        slots_per_day: u64,
        horizon: Horizon,
        from_slot: u64,
    },
    /// Clear the open book of `market` for delivery `slot`.
    Clear { market: Address, slot: u64 },
    Flex { target_wh: u64, candidates: Vec<Candidate> },
    /// Form a coalition from the assets registered with `vpp`.
    Coalition { vpp: Address, service: ServiceSpec },
    /// Baseline from readings of `meter` before `until_slot`.
    Baseline {
        meter: Address,
        slots_per_day: u64,
        until_slot: u64,
        dr_windows: Vec<(u64, u64)>,
    },
}

impl ServiceRequest {
    pub fn name(&self) -> &'static str {
        match self {
            ServiceRequest::Forecast { .. } => "forecast",
            ServiceRequest::Clear { .. } => "clear",
            ServiceRequest::Flex { .. } => "flex",
            ServiceRequest::Coalition { .. } => "coalition",
            ServiceRequest::Baseline { .. } => "baseline",
        }
    }
}

impl Canonical for ServiceRequest {
    fn encode_to(&self, w: &mut Writer) {
        match self {
            ServiceRequest::Forecast {
                series,
                slots_per_day,
                horizon,
                from_slot,
            } => {
                w.put_u8(0);
                w.put(series);
                w.put_u64(*slots_per_day);
                w.put(horizon);
                w.put_u64(*from_slot);
            }
            ServiceRequest::Clear { market, slot } => {
                w.put_u8(1);
                w.put(market);
                w.put_u64(*slot);
            }
            ServiceRequest::Flex { target_wh, candidates } => {
                w.put_u8(2);
                w.put_u64(*target_wh);
                w.put_vec(candidates);
            }
            ServiceRequest::Coalition { vpp, service } => {
                w.put_u8(3);
                w.put(vpp);
                w.put(service);
            }
            ServiceRequest::Baseline {
                meter,
                slots_per_day,
                until_slot,
                dr_windows,
            } => {
                w.put_u8(4);
                w.put(meter);
                w.put_u64(*slots_per_day);
                w.put_u64(*until_slot);
                w.put_vec(dr_windows);
            }
        }
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.u8()? {
            0 => ServiceRequest::Forecast {
                series: r.get()?,
                slots_per_day: r.u64()?,
                horizon: r.get()?,
                from_slot: r.u64()?,
            },
            1 => ServiceRequest::Clear {
                market: r.get()?,
                slot: r.u64()?,
            },
            2 => ServiceRequest::Flex {
                target_wh: r.u64()?,
                candidates: r.vec()?,
            },
            3 => ServiceRequest::Coalition {
                vpp: r.get()?,
                service: r.get()?,
            },
            4 => ServiceRequest::Baseline {
                meter: r.get()?,
                slots_per_day: r.u64()?,
                until_slot: r.u64()?,
                dr_windows: r.vec()?,
            },
            tag => return Err(CodecError::InvalidTag { what: "service request", tag }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRequestBody {
    /// Optimization criteria tag. Only [`MIN_COST`] is served.
    pub criteria: String,
    pub request: ServiceRequest,
}
canonical_struct!(OracleRequestBody { criteria, request });

impl OracleRequestBody {
    pub fn new(request: ServiceRequest) -> Self {
        Self {
            criteria: MIN_COST.to_string(),
            request,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ServiceResult {
    Forecast(Vec<i64>),
    Clearing(ClearingResult),
    Flex(FlexSelection),
    Coalition(CoalitionPlan),
    Baseline(BaselineProfile),
}

impl Canonical for ServiceResult {
    fn encode_to(&self, w: &mut Writer) {
        match self {
            ServiceResult::Forecast(v) => {
                w.put_u8(0);
                w.put_vec(v);
            }
            ServiceResult::Clearing(v) => {
                w.put_u8(1);
                w.put(v);
            }
            ServiceResult::Flex(v) => {
                w.put_u8(2);
                w.put(v);
            }
            ServiceResult::Coalition(v) => {
                w.put_u8(3);
                w.put(v);
            }
            ServiceResult::Baseline(v) => {
                w.put_u8(4);
                w.put(v);
            }
        }
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.u8()? {
            0 => ServiceResult::Forecast(r.vec()?),
            1 => ServiceResult::Clearing(r.get()?),
            2 => ServiceResult::Flex(r.get()?),
            3 => ServiceResult::Coalition(r.get()?),
            4 => ServiceResult::Baseline(r.get()?),
            tag => return Err(CodecError::InvalidTag { what: "service result", tag }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResponseBody {
    /// Hash of the answered `OracleRequest` transaction.
    pub request: Hash32,
    pub outcome: Result<ServiceResult, String>,
}

impl Canonical for OracleResponseBody {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.request);
        match &self.outcome {
            Ok(v) => {
                w.put_u8(0);
                w.put(v);
            }
            Err(msg) => {
                w.put_u8(1);
                w.put_str(msg);
            }
        }
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let request = r.get()?;
        let outcome = match r.u8()? {
            0 => Ok(r.get()?),
            1 => Err(r.string()?),
            tag => return Err(CodecError::InvalidTag { what: "outcome", tag }),
        };
        Ok(Self { request, outcome })
    }
}
