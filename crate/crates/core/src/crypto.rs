//! Keys, addresses and hashing.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Reader, Writer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("seed must be exactly 32 bytes, got {0}")]
    SeedLength(usize),
    #[error("invalid public key bytes")]
    InvalidPublicKey,
    #[error("invalid hex: {0}")]
    Hex(String),
}

pub fn sha256(data: &[u8]) -> Hash32 {
    Hash32(Sha256::digest(data).into())
}

pub fn sha256_concat(parts: &[&[u8]]) -> Hash32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Hash32(h.finalize().into())
}

/// Derives a 32-byte seed for a named role from a run seed.
pub fn derive_seed(run_seed: u64, role: &str, index: u64) -> [u8; 32] {
    sha256_concat(&[
        b"gridchain/seed",
        &run_seed.to_be_bytes(),
        role.as_bytes(),
        &index.to_be_bytes(),
    ])
    .0
}

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, KeyError> {
                let s = s.strip_prefix("0x").unwrap_or(s);
                let bytes = hex::decode(s).map_err(|e| KeyError::Hex(e.to_string()))?;
                let arr: [u8; $len] = bytes
                    .try_into()
                    .map_err(|v: Vec<u8>| KeyError::Hex(format!("expected {} bytes, got {}", $len, v.len())))?;
                Ok(Self(arr))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), &self.to_hex()[..8.min(2 * $len)])
            }
        }

        impl FromStr for $name {
            type Err = KeyError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_hex(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }

        impl Canonical for $name {
            fn encode_to(&self, w: &mut Writer) {
                w.put_raw(&self.0);
            }
            fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
                Ok(Self(r.take_array()?))
            }
        }
    };
}

/// SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);
hex_newtype!(Hash32, 32);

impl Hash32 {
    pub const ZERO: Self = Self([0u8; 32]);
}

/// 20-byte account or contract identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 20]);
hex_newtype!(Address, 20);

impl Address {
    /// Receiver of deploy transactions.
    pub const NULL: Self = Self([0u8; 20]);

    /// Low 20 bytes of the SHA-256 of the public key.
    pub fn from_public_key(pk: &PublicKey) -> Self {
        let h = sha256(&pk.0);
        let mut out = [0u8; 20];
        out.copy_from_slice(&h.0[12..]);
        Self(out)
    }

    /// Address of the contract deployed by `sender` at `nonce`: the first
    /// 20 bytes of `sha256(sender || nonce_be)`.
    pub fn for_contract(sender: &Address, nonce: u64) -> Self {
        let h = sha256_concat(&[&sender.0, &nonce.to_be_bytes()]);
        let mut out = [0u8; 20];
        out.copy_from_slice(&h.0[..20]);
        Self(out)
    }

    pub fn is_null(&self) -> bool {
        *self == Self::NULL
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);
hex_newtype!(PublicKey, 32);

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);
hex_newtype!(Signature, 64);

impl Signature {
    pub const ZERO: Self = Self([0u8; 64]);
}

impl Default for Signature {
    fn default() -> Self {
        Self::ZERO
    }
}

impl PublicKey {
    /// Strict Ed25519 verification; malformed keys simply fail.
    pub fn verify(&self, msg: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        vk.verify_strict(msg, &sig).is_ok()
    }
}

/// Ed25519 key pair derived from a 32-byte seed.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
    address: Address,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_seed(seed: &[u8]) -> Result<Self, KeyError> {
        let seed: [u8; 32] = seed
            .try_into()
            .map_err(|_| KeyError::SeedLength(seed.len()))?;
        let signing = SigningKey::from_bytes(&seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        let address = Address::from_public_key(&public);
        Ok(Self {
            signing,
            public,
            address,
        })
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }
}

/// Creates an account from a seed: the key pair and its address.
pub fn create_account(seed: &[u8]) -> Result<(KeyPair, Address), KeyError> {
    let kp = KeyPair::from_seed(seed)?;
    let addr = kp.address();
    Ok((kp, addr))
}
