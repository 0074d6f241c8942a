//! Incremental index over an observed chain: receipts by transaction
//! hash, oracle responses by request hash and accepted meter readings.

use std::collections::BTreeMap;

use crate::codec::Canonical;
use crate::contracts::meter::EnergyReading;
use crate::crypto::{Address, Hash32};
use crate::ledger::chain::ChainView;
use crate::ledger::tx::TxKind;
use crate::oracle::wire::{OracleResponseBody, ServiceResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxStatus {
    pub height: u64,
    pub success: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseSeen {
    pub outcome: Result<ServiceResult, String>,
    /// Whether the response transaction itself executed.
    pub applied: bool,
    pub status_error: Option<String>,
}

#[derive(Debug, Default)]
pub struct ChainIndex {
    hashes: Vec<Hash32>,
    pub status: BTreeMap<Hash32, TxStatus>,
    pub responses: BTreeMap<Hash32, ResponseSeen>,
    pub readings: BTreeMap<Address, BTreeMap<u64, i64>>,
}

impl ChainIndex {
    /// Catches up with `view`, starting over when it no longer extends the
    /// indexed prefix.
    pub fn update(&mut self, view: &ChainView<'_>, oracle: &Address) {
        let n = self.hashes.len();
        let extends = n <= view.blocks.len() && (n == 0 || view.blocks[n - 1].hash() == self.hashes[n - 1]);
        if !extends {
            *self = Self::default();
        }
        for (block, receipts) in view.blocks.iter().zip(view.receipts).skip(self.hashes.len()) {
            for (tx, r) in block.transactions.iter().zip(receipts) {
                self.status.insert(
                    r.tx_hash,
                    TxStatus {
                        height: block.height(),
                        success: r.success,
                        error: r.error.clone(),
                    },
                );
                match tx.kind {
                    TxKind::OracleResponse if tx.sender == *oracle => {
                        if let Ok(body) = OracleResponseBody::from_canonical_bytes(&tx.payload) {
                            self.responses.entry(body.request).or_insert(ResponseSeen {
                                outcome: body.outcome,
                                applied: r.success,
                                status_error: r.error.clone(),
                            });
                        }
                    }
                    TxKind::MeterUpdate if r.success => {
                        if let Ok(reading) = EnergyReading::from_canonical_bytes(&tx.payload) {
                            self.readings
                                .entry(tx.receiver)
                                .or_default()
                                .insert(reading.slot, reading.energy_wh);
                        }
                    }
                    _ => {}
                }
            }
            self.hashes.push(block.hash());
        }
    }

    /// Readings of `meter` for every slot of `[start, end)`, or `None` while
    /// any is missing.
    pub fn window(&self, meter: &Address, start: u64, end: u64) -> Option<Vec<i64>> {
        let readings = self.readings.get(meter)?;
        (start..end).map(|s| readings.get(&s).copied()).collect()
    }
}
