//! Stand-alone evaluation of one oracle service on JSON input.

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::contracts::vpp::{AssetRecord, ServiceSpec};
use crate::oracle::{clear_market, compute_baseline, forecast, form_coalition, select_flexibility, BookOrder, Candidate, Horizon};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown service {0:?}; expected forecast, clear, flex, coalition or baseline")]
    UnknownService(String),
    #[error("bad input: {0}")]
    Input(#[from] serde_json::Error),
    #[error("service failed: {0}")]
    Service(#[from] crate::oracle::ServiceError),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ForecastInput {
    history: Vec<i64>,
    slots_per_day: u64,
    horizon: Horizon,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClearInput {
    #[serde(default)]
    slot: u64,
    bids: Vec<BookOrder>,
    offers: Vec<BookOrder>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlexInput {
    target_wh: u64,
    candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoalitionInput {
    assets: Vec<AssetRecord>,
    service: ServiceSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BaselineInput {
    history: Vec<i64>,
    slots_per_day: u64,
    #[serde(default)]
    dr_windows: Vec<(u64, u64)>,
}

fn parse<T: DeserializeOwned>(input: &str) -> Result<T, EvalError> {
    Ok(serde_json::from_str(input)?)
}

/// Runs `service` on `input` and returns its result as JSON.
pub fn oracle_eval(service: &str, input: &str) -> Result<Value, EvalError> {
    let value = match service {
        "forecast" => {
            let i: ForecastInput = parse(input)?;
            serde_json::to_value(forecast(&i.history, i.slots_per_day, i.horizon)?)
        }
        "clear" => {
            let i: ClearInput = parse(input)?;
            serde_json::to_value(clear_market(i.slot, &i.bids, &i.offers))
        }
        "flex" => {
            let i: FlexInput = parse(input)?;
            serde_json::to_value(select_flexibility(&i.candidates, i.target_wh))
        }
        "coalition" => {
            let i: CoalitionInput = parse(input)?;
            serde_json::to_value(form_coalition(&i.assets, &i.service)?)
        }
        "baseline" => {
            let i: BaselineInput = parse(input)?;
            serde_json::to_value(compute_baseline(&i.history, i.slots_per_day, &i.dr_windows)?)
        }
        other => return Err(EvalError::UnknownService(other.to_string())),
    };
    Ok(value.expect("results serialize"))
}
