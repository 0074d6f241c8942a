//! Genesis configuration and the genesis block.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical_struct;
use crate::codec::Canonical;
use crate::contracts::WorldState;
use crate::crypto::{sha256, Address, PublicKey, Signature};

use super::block::{tx_root, Block, BlockHeader, ValidatorSet, ValidatorSetError};
use super::tx::KeyRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisAccount {
    pub label: String,
    pub address: Address,
    pub public_key: PublicKey,
}
canonical_struct!(GenesisAccount { label, address, public_key });

/// Contents of `genesis.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisConfig {
    pub validators: Vec<Address>,
    pub oracle: Address,
    pub accounts: Vec<GenesisAccount>,
}
canonical_struct!(GenesisConfig { validators, oracle, accounts });

#[derive(Debug, Error)]
pub enum GenesisError {
    #[error("reading genesis: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing genesis: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Validators(#[from] ValidatorSetError),
    #[error("account {label}: address {address} is not derived from its public key")]
    AddressMismatch { label: String, address: Address },
    #[error("account {0} registered twice")]
    DuplicateAccount(Address),
    #[error("{role} {address} has no registered key")]
    Unregistered { role: &'static str, address: Address },
}

impl GenesisConfig {
    pub fn load(path: &Path) -> Result<Self, GenesisError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validator_set(&self) -> Result<ValidatorSet, GenesisError> {
        Ok(ValidatorSet::new(self.validators.clone())?)
    }

    /// Key registry after checking every address against its key and that
    /// validators and the oracle are registered.
    pub fn registry(&self) -> Result<KeyRegistry, GenesisError> {
        let mut registry = KeyRegistry::new();
        for acct in &self.accounts {
            if Address::from_public_key(&acct.public_key) != acct.address {
                return Err(GenesisError::AddressMismatch {
                    label: acct.label.clone(),
                    address: acct.address,
                });
            }
            if registry.insert(acct.address, acct.public_key).is_some() {
                return Err(GenesisError::DuplicateAccount(acct.address));
            }
        }
        let roles = self.validators.iter().map(|v| ("validator", v)).chain([("oracle", &self.oracle)]);
        for (role, address) in roles {
            if !registry.contains_key(address) {
                return Err(GenesisError::Unregistered { role, address: *address });
            }
        }
        Ok(registry)
    }

    pub fn address_of(&self, label: &str) -> Option<Address> {
        self.accounts.iter().find(|a| a.label == label).map(|a| a.address)
    }
}

/// Height 0, unsigned, committing to the genesis configuration through
/// `prev_hash` and to the empty world through `state_root`.
pub fn genesis_block(config: &GenesisConfig) -> Block {
    Block {
        header: BlockHeader {
            height: 0,
            prev_hash: sha256(&config.to_canonical_bytes()),
            tick: 0,
            authority: Address::NULL,
            tx_root: tx_root(&[]),
            state_root: WorldState::new().root(),
        },
        signature: Signature::ZERO,
        transactions: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;

    fn config() -> GenesisConfig {
        let keys: Vec<KeyPair> = (1..=2).map(|i| KeyPair::from_seed(&[i; 32]).unwrap()).collect();
        GenesisConfig {
            validators: vec![keys[0].address()],
            oracle: keys[1].address(),
            accounts: keys
                .iter()
                .enumerate()
                .map(|(i, k)| GenesisAccount {
                    label: format!("a{i}"),
                    address: k.address(),
                    public_key: k.public(),
                })
                .collect(),
        }
    }

    #[test]
    fn json_round_trip_and_registry() {
        let c = config();
        let json = serde_json::to_string(&c).unwrap();
        let back: GenesisConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.registry().unwrap().len(), 2);
    }

    #[test]
    fn forged_address_rejected() {
        let mut c = config();
        c.accounts[0].address = Address([7u8; 20]);
        assert!(matches!(c.registry(), Err(GenesisError::AddressMismatch { .. })));
    }

    #[test]
    fn unregistered_oracle_rejected() {
        let mut c = config();
        c.oracle = Address([7u8; 20]);
        assert!(c.registry().is_err());
    }

    #[test]
    fn genesis_commits_to_config() {
        let a = genesis_block(&config());
        let mut other = config();
        other.accounts.pop();
        assert_ne!(a.hash(), genesis_block(&other).hash());
        assert_eq!(a.header.state_root, WorldState::new().root());
    }
}
