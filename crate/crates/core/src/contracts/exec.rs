//! Transaction execution against the world state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Reader, Writer};
use crate::crypto::{Address, Hash32};
use crate::ledger::tx::{Transaction, TxKind};
use crate::oracle::wire::{OracleResponseBody, ServiceResult};

use super::dr::{BaselineProfile, DrState, OrderRequest, SettleRequest};
use super::market::{ClearingResult, MarketState, OrderSubmission};
use super::meter::{EnergyReading, MeterState};
use super::vpp::{AssetRegistration, DeliveryReport, DispatchRecord, VppState};
use super::{ContractError, ContractState, ExecContext, WorldState};

/// Longest accepted metadata string.
pub const MAX_TAG_LEN: usize = 256;

/// Payload of a `Deploy` transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeployBody {
    /// The deployer becomes the meter owner.
    Meter {
        device_type: String,
        measurement_type: String,
    },
    /// The deployer becomes the aggregator. `meter` must be owned by `prosumer`.
    Dr {
        prosumer: Address,
        meter: Address,
        slots_per_day: u64,
        baseline: BaselineProfile,
    },
    Market { oracle: Address },
    /// The deployer becomes the VPP operator.
    Vpp { oracle: Address },
}

impl Canonical for DeployBody {
    fn encode_to(&self, w: &mut Writer) {
        match self {
            DeployBody::Meter {
                device_type,
                measurement_type,
            } => {
                w.put_u8(1);
                w.put_str(device_type);
                w.put_str(measurement_type);
            }
            DeployBody::Dr {
                prosumer,
                meter,
                slots_per_day,
                baseline,
            } => {
                w.put_u8(2);
                w.put(prosumer);
                w.put(meter);
                w.put_u64(*slots_per_day);
                w.put(baseline);
            }
            DeployBody::Market { oracle } => {
                w.put_u8(3);
                w.put(oracle);
            }
            DeployBody::Vpp { oracle } => {
                w.put_u8(4);
                w.put(oracle);
            }
        }
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(match r.u8()? {
            1 => DeployBody::Meter {
                device_type: r.string()?,
                measurement_type: r.string()?,
            },
            2 => DeployBody::Dr {
                prosumer: r.get()?,
                meter: r.get()?,
                slots_per_day: r.u64()?,
                baseline: r.get()?,
            },
            3 => DeployBody::Market { oracle: r.get()? },
            4 => DeployBody::Vpp { oracle: r.get()? },
            tag => return Err(CodecError::InvalidTag { what: "deploy kind", tag }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: Hash32,
    pub success: bool,
    pub error: Option<String>,
    /// Address of the contract created by a successful deploy.
    pub created: Option<Address>,
}

/// A transaction that cannot be included in a block at all.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxRejected {
    #[error("nonce {got} does not match account nonce {expected}")]
    BadNonce { expected: u64, got: u64 },
}

fn decode<T: Canonical>(payload: &[u8]) -> Result<T, ContractError> {
    Ok(T::from_canonical_bytes(payload)?)
}

fn mismatch(tx: &Transaction, state: &ContractState) -> ContractError {
    ContractError::KindMismatch {
        kind: format!("{:?}", tx.kind),
        contract: state.kind_name(),
    }
}

fn deploy(world: &mut WorldState, tx: &Transaction) -> Result<Address, ContractError> {
    if !tx.receiver.is_null() {
        return Err(ContractError::Invalid("deploy must target the null address".into()));
    }
    let address = Address::for_contract(&tx.sender, tx.nonce);
    if world.contracts.contains_key(&address) {
        // Unreachable while nonces are enforced.
        return Err(ContractError::Invalid(format!("contract {address} already exists")));
    }
    let state = match decode::<DeployBody>(&tx.payload)? {
        DeployBody::Meter {
            device_type,
            measurement_type,
        } => {
            if device_type.len() > MAX_TAG_LEN || measurement_type.len() > MAX_TAG_LEN {
                return Err(ContractError::Invalid("metadata string too long".into()));
            }
            ContractState::Meter(MeterState::new(device_type, measurement_type, tx.sender))
        }
        DeployBody::Dr {
            prosumer,
            meter,
            slots_per_day,
            baseline,
        } => {
            match world.meter(&meter) {
                Some(m) if m.metadata.owner == prosumer => {}
                Some(_) => return Err(ContractError::Invalid(format!("meter {meter} is not owned by {prosumer}"))),
                None => return Err(ContractError::UnknownContract(meter)),
            }
            ContractState::Dr(DrState::new(prosumer, tx.sender, meter, slots_per_day, baseline)?)
        }
        DeployBody::Market { oracle } => ContractState::Market(MarketState::new(oracle)),
        DeployBody::Vpp { oracle } => ContractState::Vpp(VppState::new(tx.sender, oracle)),
    };
    world.contracts.insert(address, state);
    Ok(address)
}

fn oracle_response(state: &mut ContractState, tx: &Transaction, ctx: &ExecContext) -> Result<(), ContractError> {
    let body: OracleResponseBody = decode(&tx.payload)?;
    match (state, body.outcome) {
        (ContractState::Market(m), Ok(ServiceResult::Clearing(result))) => m.record_clearing(result, &tx.sender),
        (ContractState::Vpp(v), Ok(ServiceResult::Coalition(plan))) => {
            v.record_dispatch(plan.into_dispatch(), &tx.sender, ctx)
        }
        // A failure answer is recorded on-chain by the transaction itself.
        (ContractState::Market(m), Err(_)) if tx.sender == m.oracle => Ok(()),
        (ContractState::Vpp(v), Err(_)) if tx.sender == v.oracle => Ok(()),
        (state, _) => Err(mismatch(tx, state)),
    }
}

/// Runs a call against `state`. Every contract method validates before it
/// mutates, so an error leaves `state` untouched.
fn call(
    state: &mut ContractState,
    address: &Address,
    tx: &Transaction,
    ctx: &ExecContext,
    meter_owner: Option<Address>,
) -> Result<(), ContractError> {
    if tx.kind == TxKind::OracleResponse {
        return oracle_response(state, tx, ctx);
    }
    match (tx.kind, state) {
        (TxKind::MeterUpdate, ContractState::Meter(m)) => m.update(address, decode::<EnergyReading>(&tx.payload)?, &tx.sender),
        (TxKind::DrIssueOrder, ContractState::Dr(d)) => {
            d.issue_order(decode::<OrderRequest>(&tx.payload)?, &tx.sender, ctx).map(drop)
        }
        (TxKind::DrSettle, ContractState::Dr(d)) => {
            d.settle(&decode::<SettleRequest>(&tx.payload)?, &tx.sender, ctx).map(drop)
        }
        (TxKind::MarketSubmitOrder, ContractState::Market(m)) => {
            m.submit_order(decode::<OrderSubmission>(&tx.payload)?, &tx.sender, ctx).map(drop)
        }
        (TxKind::MarketRecordClearing, ContractState::Market(m)) => {
            m.record_clearing(decode::<ClearingResult>(&tx.payload)?, &tx.sender)
        }
        (TxKind::VppRegisterAsset, ContractState::Vpp(v)) => v
            .register_asset(decode::<AssetRegistration>(&tx.payload)?, &tx.sender, meter_owner)
            .map(drop),
        (TxKind::VppRecordDispatch, ContractState::Vpp(v)) => {
            v.record_dispatch(decode::<DispatchRecord>(&tx.payload)?, &tx.sender, ctx)
        }
        (TxKind::VppSettle, ContractState::Vpp(v)) => {
            v.settle(&decode::<DeliveryReport>(&tx.payload)?, &tx.sender, ctx).map(drop)
        }
        (_, state) => Err(mismatch(tx, state)),
    }
}

fn dispatch(world: &mut WorldState, tx: &Transaction, ctx: &ExecContext) -> Result<Option<Address>, ContractError> {
    match tx.kind {
        TxKind::Deploy => return deploy(world, tx).map(Some),
        // Requests are opaque to the chain; the oracle answers malformed ones
        // with a failure response.
        TxKind::OracleRequest => return Ok(None),
        TxKind::OracleResponse if !world.contracts.contains_key(&tx.receiver) => {
            decode::<OracleResponseBody>(&tx.payload)?;
            return Ok(None);
        }
        _ => {}
    }
    let meter_owner = match tx.kind {
        TxKind::VppRegisterAsset => {
            let reg = decode::<AssetRegistration>(&tx.payload)?;
            world.meter(&reg.meter).map(|m| m.metadata.owner)
        }
        _ => None,
    };
    let state = world
        .contracts
        .get_mut(&tx.receiver)
        .ok_or(ContractError::UnknownContract(tx.receiver))?;
    call(state, &tx.receiver, tx, ctx, meter_owner)?;
    Ok(None)
}

/// Executes `tx` in place. The sender's nonce advances whether or not the
/// call succeeds; a nonce mismatch rejects the transaction outright.
pub fn apply_transaction(world: &mut WorldState, tx: &Transaction, ctx: &ExecContext) -> Result<Receipt, TxRejected> {
    let expected = world.nonce(&tx.sender);
    if tx.nonce != expected {
        return Err(TxRejected::BadNonce {
            expected,
            got: tx.nonce,
        });
    }
    let outcome = dispatch(world, tx, ctx);
    world.nonces.insert(tx.sender, expected + 1);
    let tx_hash = tx.hash();
    Ok(match outcome {
        Ok(created) => Receipt {
            tx_hash,
            success: true,
            error: None,
            created,
        },
        Err(e) => Receipt {
            tx_hash,
            success: false,
            error: Some(e.to_string()),
            created: None,
        },
    })
}

/// Functional form of [`apply_transaction`].
pub fn exec_transaction(
    world: &WorldState,
    tx: &Transaction,
    ctx: &ExecContext,
) -> Result<(WorldState, Receipt), TxRejected> {
    let mut next = world.clone();
    let receipt = apply_transaction(&mut next, tx, ctx)?;
    Ok((next, receipt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::dr::Direction;
    use crate::contracts::meter::MeterMetadata;
    use crate::crypto::KeyPair;
    use proptest::prelude::*;

    struct Actor {
        key: KeyPair,
        nonce: u64,
    }

    impl Actor {
        fn new(seed: u8) -> Self {
            Self {
                key: KeyPair::from_seed(&[seed; 32]).unwrap(),
                nonce: 0,
            }
        }

        fn addr(&self) -> Address {
            self.key.address()
        }

        fn tx(&mut self, receiver: Address, kind: TxKind, payload: Vec<u8>) -> Transaction {
            let tx = Transaction::new(self.addr(), receiver, self.nonce, kind, payload)
                .sign(&self.key)
                .unwrap();
            self.nonce += 1;
            tx
        }
    }

    const CTX: ExecContext = ExecContext { tick: 1 };

    fn run(world: &mut WorldState, tx: &Transaction) -> Receipt {
        apply_transaction(world, tx, &CTX).unwrap()
    }

    fn deploy_meter(world: &mut WorldState, owner: &mut Actor) -> Address {
        let body = DeployBody::Meter {
            device_type: "smart-meter".into(),
            measurement_type: "energy".into(),
        };
        let tx = owner.tx(Address::NULL, TxKind::Deploy, body.to_canonical_bytes());
        run(world, &tx).created.unwrap()
    }

    #[test]
    fn deploy_meter_starts_empty() {
        let mut world = WorldState::new();
        let mut alice = Actor::new(1);
        let a = deploy_meter(&mut world, &mut alice);
        let b = deploy_meter(&mut world, &mut alice);
        assert_ne!(a, b);
        let m = world.meter(&a).unwrap();
        assert_eq!((m.count, m.latest), (0, None));
        assert_eq!(m.metadata.owner, alice.addr());
    }

    #[test]
    fn dr_deploy_with_wrong_baseline_length_fails() {
        let mut world = WorldState::new();
        let mut alice = Actor::new(1);
        let mut agg = Actor::new(2);
        let meter = deploy_meter(&mut world, &mut alice);
        let body = DeployBody::Dr {
            prosumer: alice.addr(),
            meter,
            slots_per_day: 24,
            baseline: BaselineProfile { slot_wh: vec![] },
        };
        let r = run(&mut world, &agg.tx(Address::NULL, TxKind::Deploy, body.to_canonical_bytes()));
        assert!(!r.success);
        assert_eq!(world.contracts.len(), 1);
        assert_eq!(world.nonce(&agg.addr()), 1);
    }

    #[test]
    fn metadata_update_payload_rejected() {
        let mut world = WorldState::new();
        let mut alice = Actor::new(1);
        let meter = deploy_meter(&mut world, &mut alice);
        let forged = MeterMetadata {
            device_type: "hacked".into(),
            measurement_type: "energy".into(),
            unit: "Wh".into(),
            owner: alice.addr(),
        };
        let before = world.meter(&meter).unwrap().clone();
        let r = run(&mut world, &alice.tx(meter, TxKind::MeterUpdate, forged.to_canonical_bytes()));
        assert!(!r.success);
        assert_eq!(world.meter(&meter).unwrap(), &before);
    }

    #[test]
    fn stale_nonce_rejected_outright() {
        let mut world = WorldState::new();
        let mut alice = Actor::new(1);
        deploy_meter(&mut world, &mut alice);
        alice.nonce = 0;
        let tx = alice.tx(Address::NULL, TxKind::Deploy, vec![]);
        assert_eq!(
            apply_transaction(&mut world, &tx, &CTX),
            Err(TxRejected::BadNonce { expected: 1, got: 0 })
        );
    }

    #[test]
    fn kind_mismatch_and_unknown_contract() {
        let mut world = WorldState::new();
        let mut alice = Actor::new(1);
        let meter = deploy_meter(&mut world, &mut alice);
        let r = run(&mut world, &alice.tx(meter, TxKind::DrSettle, vec![]));
        assert!(r.error.unwrap().contains("meter contract"));
        let r = run(&mut world, &alice.tx(Address([5u8; 20]), TxKind::MeterUpdate, vec![]));
        assert!(!r.success);
    }

    fn dr_world() -> (WorldState, Actor, Actor, Address) {
        let mut world = WorldState::new();
        let mut alice = Actor::new(1);
        let mut agg = Actor::new(2);
        let meter = deploy_meter(&mut world, &mut alice);
        let body = DeployBody::Dr {
            prosumer: alice.addr(),
            meter,
            slots_per_day: 4,
            baseline: BaselineProfile { slot_wh: vec![1000; 4] },
        };
        let dr = run(&mut world, &agg.tx(Address::NULL, TxKind::Deploy, body.to_canonical_bytes()))
            .created
            .unwrap();
        (world, alice, agg, dr)
    }

    fn order(start: u64, end: u64) -> Vec<u8> {
        OrderRequest {
            start_slot: start,
            end_slot: end,
            direction: Direction::Reduce,
            amount_wh: 1000,
            incentive_rate: 200,
            penalty_rate: 100,
            congestion_point: "feeder-1".into(),
            baseline: None,
        }
        .to_canonical_bytes()
    }

    #[test]
    fn dr_order_flow() {
        let (mut world, mut alice, mut agg, dr) = dr_world();
        assert!(run(&mut world, &agg.tx(dr, TxKind::DrIssueOrder, order(10, 13))).success);
        assert!(!run(&mut world, &alice.tx(dr, TxKind::DrIssueOrder, order(20, 21))).success);
        assert!(!run(&mut world, &agg.tx(dr, TxKind::DrIssueOrder, order(12, 14))).success);
        assert_eq!(world.dr(&dr).unwrap().orders[0].id, 0);
    }

    fn op() -> impl Strategy<Value = (u8, TxKind, Vec<u8>)> {
        (
            0u8..3,
            prop::sample::select(TxKind::ALL.to_vec()),
            prop::collection::vec(any::<u8>(), 0..64),
        )
    }

    proptest! {
        #[test]
        fn failed_receipts_leave_contracts_untouched(ops in prop::collection::vec(op(), 1..40)) {
            let (mut world, alice, agg, dr) = dr_world();
            let meter = *world.contracts.keys().find(|a| **a != dr).unwrap();
            let metadata = world.meter(&meter).unwrap().metadata.clone();
            let mut actors = [alice, agg, Actor::new(3)];
            for (who, kind, payload) in ops {
                let receiver = [meter, dr, Address::NULL][(payload.len() % 3) as usize];
                let tx = actors[who as usize].tx(receiver, kind, payload);
                let before = world.contracts.clone();
                let r = run(&mut world, &tx);
                if !r.success {
                    prop_assert_eq!(&world.contracts, &before);
                }
                prop_assert_eq!(&world.meter(&meter).unwrap().metadata, &metadata);
            }
        }

        #[test]
        fn random_meter_updates_never_touch_metadata(readings in prop::collection::vec((0u64..50, -2000i64..2000), 1..30)) {
            let mut world = WorldState::new();
            let mut alice = Actor::new(1);
            let meter = deploy_meter(&mut world, &mut alice);
            let metadata = world.meter(&meter).unwrap().metadata.clone();
            for (slot, wh) in readings {
                let r = EnergyReading { slot, energy_wh: wh, device: meter };
                run(&mut world, &alice.tx(meter, TxKind::MeterUpdate, r.to_canonical_bytes()));
            }
            prop_assert_eq!(&world.meter(&meter).unwrap().metadata, &metadata);
        }
    }
}
