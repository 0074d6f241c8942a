//! Flipping one byte of a ledger file and verifying it.

use std::path::PathBuf;

use gridchain::harness::verify_bytes;
use gridchain::ledger::genesis::GenesisConfig;

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/p2p");
    let ledger = std::fs::read(dir.join("ledger.bin")).expect("fixture ledger");
    let genesis = GenesisConfig::load(&dir.join("genesis.json")).expect("fixture genesis");

    let clean = verify_bytes(&ledger, &genesis);
    println!("untouched: ok {}, {} blocks", clean.ok, clean.blocks_verified);

    for offset in [ledger.len() / 5, ledger.len() / 2, ledger.len() - 3] {
        let mut bytes = ledger.clone();
        bytes[offset] ^= 0x01;
        let report = verify_bytes(&bytes, &genesis);
        let failure = report.failure.expect("mutation detected");
        println!("byte {offset}: rejected at height {}: {}", failure.height, failure.reason);
    }
}
