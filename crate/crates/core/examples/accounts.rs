//! Key pairs, addresses and signed transactions.

use gridchain::codec::Canonical;
use gridchain::contracts::meter::EnergyReading;
use gridchain::crypto::{create_account, Address};
use gridchain::ledger::tx::{verify_transaction, KeyRegistry, Transaction, TxKind};

fn main() {
    let (key, address) = create_account(&[7u8; 32]).expect("32-byte seed");
    println!("public key {}", key.public().to_hex());
    println!("address    {address}");

    let meter = Address::for_contract(&address, 0);
    let reading = EnergyReading {
        slot: 12,
        energy_wh: -850,
        device: meter,
    };
    let tx = Transaction::new(address, meter, 1, TxKind::MeterUpdate, reading.to_canonical_bytes())
        .sign(&key)
        .expect("sender matches key");
    println!("tx hash    {}", tx.hash());

    let registry = KeyRegistry::from([(address, key.public())]);
    println!("verifies   {}", verify_transaction(&tx, &registry));

    let mut forged = tx.clone();
    forged.payload[0] ^= 1;
    println!("tampered   {}", verify_transaction(&forged, &registry));
}
