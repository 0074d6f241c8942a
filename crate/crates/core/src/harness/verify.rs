//! Ledger file integrity check against a genesis file.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::crypto::Hash32;
use crate::ledger::chain::replay_chain;
use crate::ledger::genesis::GenesisConfig;
use crate::ledger::store::decode_ledger;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid genesis file: {0}")]
    Genesis(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyFailure {
    pub height: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    /// Blocks, genesis included, that replayed cleanly.
    pub blocks_verified: u64,
    pub tip_height: Option<u64>,
    pub tip_state_root: Option<Hash32>,
    pub failure: Option<VerifyFailure>,
}

/// Replays every decodable block; the first framing or validation error
/// is reported with its height.
pub fn verify_bytes(ledger: &[u8], genesis: &GenesisConfig) -> VerifyReport {
    let (blocks, frame_error) = decode_ledger(ledger);
    let mut report = VerifyReport {
        ok: false,
        blocks_verified: 0,
        tip_height: None,
        tip_state_root: None,
        failure: None,
    };
    if blocks.is_empty() {
        report.failure = Some(match frame_error {
            Some(e) => VerifyFailure {
                height: e.height,
                reason: format!("framing: {}", e.message),
            },
            None => VerifyFailure {
                height: 0,
                reason: "ledger holds no blocks".into(),
            },
        });
        return report;
    }
    match replay_chain(&blocks, genesis) {
        Err(e) => {
            let height = e.height().unwrap_or(0);
            report.blocks_verified = height;
            report.failure = Some(VerifyFailure {
                height,
                reason: e.to_string(),
            });
        }
        Ok(replay) => {
            let tip = blocks.last().expect("non-empty");
            report.blocks_verified = blocks.len() as u64;
            report.tip_height = Some(tip.height());
            report.tip_state_root = Some(replay.world.root());
            match frame_error {
                Some(e) => {
                    report.failure = Some(VerifyFailure {
                        height: e.height,
                        reason: format!("framing: {}", e.message),
                    })
                }
                None => report.ok = true,
            }
        }
    }
    report
}

pub fn verify_files(ledger: &Path, genesis: &Path) -> Result<VerifyReport, VerifyError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| VerifyError::Io { path, source }
    };
    let bytes = std::fs::read(ledger).map_err(io(ledger))?;
    let text = std::fs::read_to_string(genesis).map_err(io(genesis))?;
    let config: GenesisConfig = serde_json::from_str(&text).map_err(|e| VerifyError::Genesis(e.to_string()))?;
    Ok(verify_bytes(&bytes, &config))
}
