//! Forming a VPP coalition for a capacity service.

use gridchain::contracts::vpp::{AssetRecord, ServiceSpec};
use gridchain::crypto::Address;
use gridchain::oracle::form_coalition;

fn asset(id: u64, capacity: u64, response: u64, band: &str, cost_rate: u64) -> AssetRecord {
    AssetRecord {
        id,
        owner: Address([id as u8 + 1; 20]),
        meter: Address([id as u8 + 100; 20]),
        capacity_wh_per_slot: capacity,
        response_time_slots: response,
        sync_time_slots: 1,
        max_dispatch_slots: 6,
        band: band.into(),
        cost_rate,
    }
}

fn main() {
    let assets = [
        asset(0, 2000, 1, "", 120),
        asset(1, 1500, 1, "", 100),
        asset(2, 1000, 3, "", 90),
        asset(3, 2500, 0, "fast", 150),
    ];
    let mut service = ServiceSpec {
        service_id: 1,
        start_slot: 16,
        capacity_wh_per_slot: 3000,
        max_response_slots: 2,
        max_sync_slots: 2,
        dispatch_slots: 4,
        price_rate: 250,
        penalty_rate: 300,
        band: None,
    };
    for band in [None, Some("fast".to_string()), Some("slow".to_string())] {
        service.band = band.clone();
        match form_coalition(&assets, &service) {
            Ok(plan) => {
                println!("band {band:?}: cost {}", plan.total_cost);
                for m in &plan.members {
                    println!("  asset {} scheduled {} Wh/slot", m.asset_id, m.scheduled_wh);
                }
            }
            Err(e) => println!("band {band:?}: {e}"),
        }
    }
}
