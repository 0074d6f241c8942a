//! Typed smart-contract catalog and the world state they live in.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Reader, Writer};
use crate::crypto::{sha256, Address, Hash32};

pub mod dr;
pub mod exec;
pub mod market;
pub mod meter;
pub mod vpp;

pub use dr::DrState;
pub use exec::{apply_transaction, exec_transaction, DeployBody, Receipt, TxRejected};
pub use market::MarketState;
pub use meter::MeterState;
pub use vpp::VppState;

/// Upper bound on any rate (milli-currency per kWh) accepted by a contract.
pub const MAX_RATE: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("sender is not the {0}")]
    Unauthorized(&'static str),
    #[error("invalid call: {0}")]
    Invalid(String),
    #[error("infeasible result: {0}")]
    Infeasible(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("no contract at {0}")]
    UnknownContract(Address),
    #[error("{kind} transaction sent to a {contract} contract")]
    KindMismatch { kind: String, contract: &'static str },
    #[error("malformed payload: {0}")]
    Codec(#[from] CodecError),
}

/// Block-level facts visible to contract code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecContext {
    /// Tick of the block being executed.
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContractState {
    Meter(MeterState),
    Dr(DrState),
    Market(MarketState),
    Vpp(VppState),
}

impl ContractState {
    pub fn tag(&self) -> u8 {
        match self {
            ContractState::Meter(_) => 1,
            ContractState::Dr(_) => 2,
            ContractState::Market(_) => 3,
            ContractState::Vpp(_) => 4,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ContractState::Meter(_) => "meter",
            ContractState::Dr(_) => "dr",
            ContractState::Market(_) => "market",
            ContractState::Vpp(_) => "vpp",
        }
    }
}

impl Canonical for ContractState {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u8(self.tag());
        match self {
            ContractState::Meter(s) => s.encode_to(w),
            ContractState::Dr(s) => s.encode_to(w),
            ContractState::Market(s) => s.encode_to(w),
            ContractState::Vpp(s) => s.encode_to(w),
        }
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        match r.u8()? {
            1 => Ok(ContractState::Meter(r.get()?)),
            2 => Ok(ContractState::Dr(r.get()?)),
            3 => Ok(ContractState::Market(r.get()?)),
            4 => Ok(ContractState::Vpp(r.get()?)),
            tag => Err(CodecError::InvalidTag {
                what: "contract kind",
                tag,
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub contracts: BTreeMap<Address, ContractState>,
    pub nonces: BTreeMap<Address, u64>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nonce(&self, account: &Address) -> u64 {
        self.nonces.get(account).copied().unwrap_or(0)
    }

    pub fn contract(&self, address: &Address) -> Option<&ContractState> {
        self.contracts.get(address)
    }

    pub fn meter(&self, address: &Address) -> Option<&MeterState> {
        match self.contracts.get(address) {
            Some(ContractState::Meter(m)) => Some(m),
            _ => None,
        }
    }

    pub fn dr(&self, address: &Address) -> Option<&DrState> {
        match self.contracts.get(address) {
            Some(ContractState::Dr(s)) => Some(s),
            _ => None,
        }
    }

    pub fn market(&self, address: &Address) -> Option<&MarketState> {
        match self.contracts.get(address) {
            Some(ContractState::Market(s)) => Some(s),
            _ => None,
        }
    }

    pub fn vpp(&self, address: &Address) -> Option<&VppState> {
        match self.contracts.get(address) {
            Some(ContractState::Vpp(s)) => Some(s),
            _ => None,
        }
    }

    /// Hash of the canonical encoding: contracts sorted by address, each as
    /// `address || kind tag || fields`, then nonces sorted by address.
    pub fn root(&self) -> Hash32 {
        sha256(&self.to_canonical_bytes())
    }
}

impl Canonical for WorldState {
    fn encode_to(&self, w: &mut Writer) {
        w.put_len(self.contracts.len());
        for (addr, state) in &self.contracts {
            addr.encode_to(w);
            state.encode_to(w);
        }
        w.put_len(self.nonces.len());
        for (addr, nonce) in &self.nonces {
            addr.encode_to(w);
            w.put_u64(*nonce);
        }
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let out_of_order = || CodecError::Invalid("world state entries not sorted by address".into());
        let mut contracts = BTreeMap::new();
        for _ in 0..r.len(21)? {
            let addr: Address = r.get()?;
            if contracts.last_key_value().is_some_and(|(last, _)| *last >= addr) {
                return Err(out_of_order());
            }
            contracts.insert(addr, r.get()?);
        }
        let mut nonces = BTreeMap::new();
        for _ in 0..r.len(28)? {
            let addr: Address = r.get()?;
            if nonces.last_key_value().is_some_and(|(last, _)| *last >= addr) {
                return Err(out_of_order());
            }
            nonces.insert(addr, r.u64()?);
        }
        Ok(Self { contracts, nonces })
    }
}
