//! Runs a bundled scenario and prints its settlement summary.
//!
//! `cargo run --example scenario -- all` picks the fixture (default `p2p`).

use std::path::PathBuf;

use gridchain::harness::{audit_blocks, run, ScenarioConfig};
use gridchain::prosumer::load_traces;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "p2p".into());
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(&name)
        .join("config.json");
    let config = ScenarioConfig::load(&path).expect("fixture config");
    let traces = load_traces(&config.traces).expect("fixture traces");
    let output = run(&config, &traces, config.seed).expect("run");
    let r = &output.report;

    println!("{name}: {} blocks, {} transactions", r.chain.blocks, r.chain.transactions);
    println!(
        "market: {} clearings, {} Wh traded, {} milli paid",
        r.clearings.len(),
        r.conservation.market_energy_bought_wh,
        r.conservation.market_buyer_payments
    );
    for s in &r.dr_settlements {
        println!(
            "DR {} slots {}..{}: delivered {} Wh, net {}",
            s.prosumer, s.start_slot, s.end_slot, s.delivered_wh, s.net
        );
    }
    for s in &r.vpp_settlements {
        println!(
            "VPP service {} asset {} ({}): delivered {}/{} Wh, net {}",
            s.service_id, s.asset_id, s.owner, s.delivered_wh, s.scheduled_wh, s.net
        );
    }
    for p in &r.prosumers {
        println!("{:>4}: total {:>6} milli, reconciled {}", p.id, p.chain.total(), p.reconciled);
    }
    let audit = audit_blocks(&output.blocks).expect("chain replays");
    println!(
        "conservation {}, audit discrepancies {}",
        r.conservation.holds,
        audit.discrepancies.len()
    );
}
