use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Reader, Writer};
use crate::crypto::{sha256, Address, Hash32, KeyPair, PublicKey, Signature};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("signing key address {key} does not match sender {sender}")]
    KeyMismatch { key: Address, sender: Address },
}

/// Method tag carried by every transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum TxKind {
    Deploy = 0,
    MeterUpdate = 1,
    DrIssueOrder = 2,
    DrSettle = 3,
    MarketSubmitOrder = 4,
    MarketRecordClearing = 5,
    VppRegisterAsset = 6,
    VppRecordDispatch = 7,
    VppSettle = 8,
    OracleRequest = 9,
    OracleResponse = 10,
}

impl TxKind {
    pub const ALL: [TxKind; 11] = [
        TxKind::Deploy,
        TxKind::MeterUpdate,
        TxKind::DrIssueOrder,
        TxKind::DrSettle,
        TxKind::MarketSubmitOrder,
        TxKind::MarketRecordClearing,
        TxKind::VppRegisterAsset,
        TxKind::VppRecordDispatch,
        TxKind::VppSettle,
        TxKind::OracleRequest,
        TxKind::OracleResponse,
    ];

    pub fn from_u8(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl Canonical for TxKind {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u8(*self as u8);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let tag = r.u8()?;
        Self::from_u8(tag).ok_or(CodecError::InvalidTag {
            what: "transaction kind",
            tag,
        })
    }
}

/// Public keys of every known account, fixed at genesis.
pub type KeyRegistry = BTreeMap<Address, PublicKey>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sender: Address,
    pub receiver: Address,
    pub nonce: u64,
    pub kind: TxKind,
    pub payload: Vec<u8>,
    pub signature: Signature,
}

impl Transaction {
    pub fn new(sender: Address, receiver: Address, nonce: u64, kind: TxKind, payload: Vec<u8>) -> Self {
        Self {
            sender,
            receiver,
            nonce,
            kind,
            payload,
            signature: Signature::ZERO,
        }
    }

    /// Canonical encoding of every field except the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_unsigned(&mut w);
        w.into_bytes()
    }

    fn encode_unsigned(&self, w: &mut Writer) {
        w.put(&self.sender);
        w.put(&self.receiver);
        w.put_u64(self.nonce);
        w.put(&self.kind);
        w.put_bytes(&self.payload);
    }

    pub fn sign(mut self, key: &KeyPair) -> Result<Self, TxError> {
        if key.address() != self.sender {
            return Err(TxError::KeyMismatch {
                key: key.address(),
                sender: self.sender,
            });
        }
        self.signature = key.sign(&self.signing_bytes());
        Ok(self)
    }

    pub fn hash(&self) -> Hash32 {
        sha256(&self.to_canonical_bytes())
    }
}

/// Signs an unsigned transaction; the key must belong to the sender.
pub fn sign_transaction(tx: Transaction, key: &KeyPair) -> Result<Transaction, TxError> {
    tx.sign(key)
}

/// True iff the sender is registered and the signature covers the
/// canonical encoding of the remaining fields.
pub fn verify_transaction(tx: &Transaction, registry: &KeyRegistry) -> bool {
    registry
        .get(&tx.sender)
        .is_some_and(|pk| pk.verify(&tx.signing_bytes(), &tx.signature))
}

impl Canonical for Transaction {
    fn encode_to(&self, w: &mut Writer) {
        self.encode_unsigned(w);
        w.put(&self.signature);
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            sender: r.get()?,
            receiver: r.get()?,
            nonce: r.u64()?,
            kind: r.get()?,
            payload: r.bytes()?,
            signature: r.get()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::create_account;

    fn fixture() -> (KeyPair, KeyRegistry, Transaction) {
        let (kp, addr) = create_account(&[11u8; 32]).unwrap();
        let mut reg = KeyRegistry::new();
        reg.insert(addr, kp.public());
        let tx = Transaction::new(addr, Address([9u8; 20]), 0, TxKind::MeterUpdate, vec![1, 2, 3]);
        (kp, reg, tx)
    }

    #[test]
    fn signed_transaction_verifies() {
        let (kp, reg, tx) = fixture();
        let tx = sign_transaction(tx, &kp).unwrap();
        assert!(verify_transaction(&tx, &reg));
    }

    #[test]
    fn signing_with_foreign_key_is_an_error() {
        let (_, _, tx) = fixture();
        let (other, _) = create_account(&[12u8; 32]).unwrap();
        assert!(matches!(
            sign_transaction(tx, &other),
            Err(TxError::KeyMismatch { .. })
        ));
    }

    #[test]
    fn payload_flip_breaks_signature() {
        let (kp, reg, tx) = fixture();
        let mut tx = tx.sign(&kp).unwrap();
        tx.payload[1] ^= 0x01;
        assert!(!verify_transaction(&tx, &reg));
    }

    #[test]
    fn zeroed_signature_and_mutated_receiver_fail() {
        let (kp, reg, tx) = fixture();
        let tx = tx.sign(&kp).unwrap();
        let mut zeroed = tx.clone();
        zeroed.signature = Signature::ZERO;
        assert!(!verify_transaction(&zeroed, &reg));
        let mut moved = tx.clone();
        moved.receiver = Address([8u8; 20]);
        let reencoded = Transaction::from_canonical_bytes(&moved.to_canonical_bytes()).unwrap();
        assert!(!verify_transaction(&reencoded, &reg));
    }

    #[test]
    fn unknown_sender_fails() {
        let (kp, _, tx) = fixture();
        let tx = tx.sign(&kp).unwrap();
        assert!(!verify_transaction(&tx, &KeyRegistry::new()));
    }

    #[test]
    fn encoding_is_stable_and_nonce_sensitive() {
        let (kp, _, tx) = fixture();
        let a = tx.clone().sign(&kp).unwrap();
        assert_eq!(a.to_canonical_bytes(), a.to_canonical_bytes());
        let mut b = tx;
        b.nonce = 1;
        assert_ne!(a.signing_bytes(), b.signing_bytes());
        assert_eq!(Transaction::from_canonical_bytes(&a.to_canonical_bytes()).unwrap(), a);
    }

    #[test]
    fn unknown_kind_tag_rejected() {
        let (kp, _, tx) = fixture();
        let mut bytes = tx.sign(&kp).unwrap().to_canonical_bytes();
        bytes[48] = 42;
        assert!(Transaction::from_canonical_bytes(&bytes).is_err());
    }
}
