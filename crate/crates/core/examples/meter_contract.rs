//! Deploying a smart-meter contract and feeding it readings.

use gridchain::codec::Canonical;
use gridchain::contracts::exec::{apply_transaction, DeployBody};
use gridchain::contracts::meter::EnergyReading;
use gridchain::contracts::{ExecContext, WorldState};
use gridchain::crypto::{create_account, Address};
use gridchain::ledger::tx::{Transaction, TxKind};

fn main() {
    let (key, owner) = create_account(&[3u8; 32]).expect("seed");
    let mut world = WorldState::new();
    let ctx = ExecContext { tick: 1 };

    let deploy = DeployBody::Meter {
        device_type: "smart-meter".into(),
        measurement_type: "net-energy".into(),
    };
    let tx = Transaction::new(owner, Address::default(), 0, TxKind::Deploy, deploy.to_canonical_bytes())
        .sign(&key)
        .unwrap();
    let receipt = apply_transaction(&mut world, &tx, &ctx).expect("valid nonce");
    let meter = receipt.created.expect("deploy creates a contract");
    println!("meter deployed at {meter}");

    for (nonce, (slot, wh)) in [(0u64, 420i64), (1, -310), (1, 99), (2, 150)].into_iter().enumerate() {
        let reading = EnergyReading {
            slot,
            energy_wh: wh,
            device: meter,
        };
        let tx = Transaction::new(owner, meter, nonce as u64 + 1, TxKind::MeterUpdate, reading.to_canonical_bytes())
            .sign(&key)
            .unwrap();
        let r = apply_transaction(&mut world, &tx, &ctx).unwrap();
        match r.error {
            None => println!("slot {slot}: {wh:>5} Wh accepted"),
            Some(e) => println!("slot {slot}: {wh:>5} Wh rejected ({e})"),
        }
    }
    let state = world.meter(&meter).unwrap();
    println!("{} readings, latest {:?}", state.count, state.latest);
    println!("readings root {}", state.readings_root);
    println!("world root    {}", world.root());
}
