//! The oracle loop: find unanswered requests on chain, compute, respond.

use std::collections::BTreeSet;

use crate::codec::Canonical;
use crate::crypto::{Address, Hash32, KeyPair};
use crate::ledger::chain::ChainView;
use crate::ledger::tx::{Transaction, TxKind};

use super::baseline::compute_baseline;
use super::clearing::{book_for_slot, clear_market};
use super::coalition::form_coalition;
use super::flex::select_flexibility;
use super::forecast::forecast;
use super::wire::{OracleRequestBody, OracleResponseBody, ServiceRequest, ServiceResult, MIN_COST};
use super::ServiceError;

/// A committed `OracleRequest` addressed to the oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRequestRecord {
    pub tx_hash: Hash32,
    pub requester: Address,
    pub height: u64,
    pub tick: u64,
    /// Decoded body, or the decode error.
    pub body: Result<OracleRequestBody, String>,
}

/// Hashes of requests already answered by `oracle` on chain.
pub fn answered(view: &ChainView<'_>, oracle: &Address) -> BTreeSet<Hash32> {
    view.transactions()
        .filter(|(_, tx, _)| tx.kind == TxKind::OracleResponse && tx.sender == *oracle)
        .filter_map(|(_, tx, _)| OracleResponseBody::from_canonical_bytes(&tx.payload).ok())
        .map(|body| body.request)
        .collect()
}

/// Requests to `oracle` with no response yet, in chain order.
pub fn pending_requests(view: &ChainView<'_>, oracle: &Address) -> Vec<OracleRequestRecord> {
    let done = answered(view, oracle);
    view.transactions()
        .filter(|(_, tx, r)| r.success && tx.kind == TxKind::OracleRequest && tx.receiver == *oracle)
        .filter(|(_, _, r)| !done.contains(&r.tx_hash))
        .map(|(b, tx, r)| OracleRequestRecord {
            tx_hash: r.tx_hash,
            requester: tx.sender,
            height: b.height(),
            tick: b.header.tick,
            body: OracleRequestBody::from_canonical_bytes(&tx.payload).map_err(|e| e.to_string()),
        })
        .collect()
}

/// Contiguous metered history of `meter` from slot 0, stopping before
/// `until_slot`.
pub fn meter_history(view: &ChainView<'_>, meter: &Address, until_slot: u64) -> Result<Vec<i64>, ServiceError> {
    let mut history = Vec::new();
    for r in view.meter_readings(meter) {
        if r.slot >= until_slot {
            break;
        }
        if r.slot != history.len() as u64 {
            return Err(ServiceError::Invalid(format!(
                "meter {meter} has no reading for slot {}",
                history.len()
            )));
        }
        history.push(r.energy_wh);
    }
    Ok(history)
}

/// Runs the requested service against `view`.
pub fn evaluate(view: &ChainView<'_>, request: &ServiceRequest) -> Result<ServiceResult, ServiceError> {
    match request {
        ServiceRequest::Forecast {
            series,
            slots_per_day,
            horizon,
            from_slot,
        } => {
            let history = meter_history(view, series, *from_slot)?;
            Ok(ServiceResult::Forecast(forecast(&history, *slots_per_day, *horizon)?))
        }
        ServiceRequest::Clear { market, slot } => {
            let state = view
                .world
                .market(market)
                .ok_or_else(|| ServiceError::Invalid(format!("no market contract at {market}")))?;
            let (bids, offers) = book_for_slot(&state.open_orders, *slot);
            Ok(ServiceResult::Clearing(clear_market(*slot, &bids, &offers)))
        }
        ServiceRequest::Flex { target_wh, candidates } => {
            let mut ids: Vec<u64> = candidates.iter().map(|c| c.id).collect();
            ids.sort_unstable();
            if ids.windows(2).any(|w| w[0] == w[1]) {
                return Err(ServiceError::Invalid("duplicate candidate id".into()));
            }
            Ok(ServiceResult::Flex(select_flexibility(candidates, *target_wh)))
        }
        ServiceRequest::Coalition { vpp, service } => {
            let state = view
                .world
                .vpp(vpp)
                .ok_or_else(|| ServiceError::Invalid(format!("no VPP contract at {vpp}")))?;
            Ok(ServiceResult::Coalition(form_coalition(&state.assets, service)?))
        }
        ServiceRequest::Baseline {
            meter,
            slots_per_day,
            until_slot,
            dr_windows,
        } => {
            let history = meter_history(view, meter, *until_slot)?;
            Ok(ServiceResult::Baseline(compute_baseline(&history, *slots_per_day, dr_windows)?))
        }
    }
}

/// Response body and receiver for one request.
pub fn respond(view: &ChainView<'_>, record: &OracleRequestRecord) -> (Address, OracleResponseBody) {
    let (receiver, outcome) = match &record.body {
        Err(e) => (record.requester, Err(format!("malformed request: {e}"))),
        Ok(body) => {
            let receiver = match &body.request {
                ServiceRequest::Clear { market, .. } => *market,
                ServiceRequest::Coalition { vpp, .. } => *vpp,
                _ => record.requester,
            };
            let outcome = if body.criteria != MIN_COST {
                Err(format!("unsupported criteria {:?}", body.criteria))
            } else {
                evaluate(view, &body.request).map_err(|e| e.to_string())
            };
            (receiver, outcome)
        }
    };
    (
        receiver,
        OracleResponseBody {
            request: record.tx_hash,
            outcome,
        },
    )
}

/// Signed responses to every unanswered request in `view` except those in
/// `in_flight`, numbered from `first_nonce`. Pure in its inputs.
pub fn oracle_step_from(
    view: &ChainView<'_>,
    key: &KeyPair,
    in_flight: &BTreeSet<Hash32>,
    first_nonce: u64,
) -> Vec<(Hash32, Transaction)> {
    let oracle = key.address();
    pending_requests(view, &oracle)
        .iter()
        .filter(|r| !in_flight.contains(&r.tx_hash))
        .enumerate()
        .map(|(i, record)| {
            let (receiver, body) = respond(view, record);
            let tx = Transaction::new(
                oracle,
                receiver,
                first_nonce + i as u64,
                TxKind::OracleResponse,
                body.to_canonical_bytes(),
            )
            .sign(key)
            .expect("key matches sender");
            (record.tx_hash, tx)
        })
        .collect()
}

/// One response per unanswered request, nonces continuing from the
/// oracle's committed nonce.
pub fn oracle_step(view: &ChainView<'_>, key: &KeyPair) -> Vec<Transaction> {
    let nonce = view.world.nonce(&key.address());
    oracle_step_from(view, key, &BTreeSet::new(), nonce)
        .into_iter()
        .map(|(_, tx)| tx)
        .collect()
}
