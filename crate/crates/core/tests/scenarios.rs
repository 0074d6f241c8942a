mod common;

use std::collections::BTreeMap;

use gridchain::contracts::ContractState;
use gridchain::crypto::Address;
use gridchain::harness::{audit_blocks, run, verify_bytes};
use gridchain::ledger::chain::replay_chain;
use gridchain::ledger::network::NetworkConfig;
use gridchain::ledger::store::encode_ledger;

#[test]
fn committed_p2p_ledger_matches_a_fresh_run() {
    let output = common::run_fixture("p2p");
    let dir = common::fixture_dir("p2p");
    let committed = std::fs::read(dir.join("ledger.bin")).unwrap();
    assert!(encode_ledger(&output.blocks) == committed, "fixture ledger is stale");
    let genesis = serde_json::to_string_pretty(&output.genesis).unwrap() + "\n";
    assert_eq!(genesis, std::fs::read_to_string(dir.join("genesis.json")).unwrap());
}

#[test]
fn p2p_report_totals_match_replayed_trades() {
    let output = common::run_fixture("p2p");
    let report = &output.report;
    assert_eq!(report.chain.failed_receipts, 0, "{:?}", report.chain.failures);
    assert!(report.notes.is_empty(), "{:?}", report.notes);
    assert!(!report.clearings.is_empty());
    assert!(report.clearings.iter().all(|c| c.conserved));

    // Per-account totals straight from the replayed trades.
    let world = replay_chain(&output.blocks, &output.genesis).unwrap().world;
    let mut paid: BTreeMap<Address, i64> = BTreeMap::new();
    let mut received: BTreeMap<Address, i64> = BTreeMap::new();
    let mut volume = 0u64;
    for contract in world.contracts.values() {
        if let ContractState::Market(m) = contract {
            for t in &m.trades {
                let amount = (t.qty_wh as i64 * t.price) / 1000;
                *paid.entry(t.buyer).or_default() += amount;
                *received.entry(t.seller).or_default() += amount;
                volume += t.qty_wh;
            }
        }
    }
    assert!(volume > 0);
    assert_eq!(report.conservation.market_energy_bought_wh, volume);
    assert_eq!(report.conservation.market_buyer_payments, paid.values().sum::<i64>());
    assert_eq!(report.conservation.market_seller_receipts, received.values().sum::<i64>());
    for p in &report.prosumers {
        assert_eq!(p.chain.market_paid, paid.get(&p.address).copied().unwrap_or(0), "{}", p.id);
        assert_eq!(p.chain.market_received, received.get(&p.address).copied().unwrap_or(0), "{}", p.id);
        assert!(p.reconciled, "{}", p.id);
    }
    let traded_volume: u64 = report.clearings.iter().map(|c| c.volume_wh).sum();
    assert_eq!(traded_volume, volume);
}

#[test]
fn dr_fixture_selects_cheapest_cover_and_settles_without_shortfall() {
    let output = common::run_fixture("dr");
    let (config, _) = common::load_fixture("dr");
    let report = &output.report;
    assert_eq!(report.chain.failed_receipts, 0, "{:?}", report.chain.failures);
    assert!(report.notes.is_empty(), "{:?}", report.notes);

    // Cheapest covering subset per event over the members that offer flexibility.
    let members: Vec<_> = config.prosumers.iter().filter(|p| p.flex_capacity_wh > 0).collect();
    let mut expected = Vec::new();
    for event in &config.congestion_events {
        let len = event.end_slot - event.start_slot;
        let best = (0u32..1 << members.len())
            .filter_map(|mask| {
                let chosen: Vec<_> = (0..members.len()).filter(|i| mask & (1 << i) != 0).collect();
                let wh: u64 = chosen.iter().map(|&i| members[i].flex_capacity_wh).sum();
                let cost: u64 = chosen
                    .iter()
                    .map(|&i| members[i].flex_price * members[i].flex_capacity_wh * len / 1000)
                    .sum();
                (wh >= event.required_flex_wh).then_some((cost, chosen))
            })
            .min()
            .unwrap();
        for i in best.1 {
            expected.push((members[i].id.clone(), event.start_slot));
        }
    }
    expected.sort();
    let mut settled: Vec<(String, u64)> = report
        .dr_settlements
        .iter()
        .map(|r| (r.prosumer.clone(), r.start_slot))
        .collect();
    settled.sort();
    assert_eq!(settled, expected);

    for row in &report.dr_settlements {
        assert_eq!(row.shortfall_wh, 0, "{row:?}");
        assert_eq!(row.delivered_wh, row.amount_wh * (row.end_slot - row.start_slot));
        let price = config.prosumers.iter().find(|p| p.id == row.prosumer).unwrap().flex_price;
        assert_eq!(row.reward, price * row.delivered_wh / 1000);
        assert_eq!(row.net, row.reward as i64);
    }
    let c = &report.conservation;
    assert!(c.dr_aggregator_payouts > 0);
    assert_eq!(c.dr_aggregator_payouts, c.dr_prosumer_nets);
    assert_eq!(
        c.dr_aggregator_payouts,
        report.dr_settlements.iter().map(|r| r.net).sum::<i64>()
    );
}

#[test]
fn vpp_fixture_pays_members_by_delivery() {
    let output = common::run_fixture("vpp");
    let (config, _) = common::load_fixture("vpp");
    let report = &output.report;
    assert_eq!(report.chain.failed_receipts, 0, "{:?}", report.chain.failures);
    assert!(report.notes.is_empty(), "{:?}", report.notes);
    assert!(!report.vpp_settlements.is_empty());
    for row in &report.vpp_settlements {
        let p = config.prosumers.iter().find(|p| p.id == row.owner).unwrap();
        let asset = p.asset.as_ref().unwrap();
        let service = &config.vpp_services.iter().find(|s| s.service.service_id == row.service_id).unwrap().service;
        assert!(asset.response_time_slots <= service.max_response_slots, "{row:?}");
        assert!(asset.sync_time_slots <= service.max_sync_slots, "{row:?}");
        assert!(asset.max_dispatch_slots >= service.dispatch_slots, "{row:?}");
        // Output follows the owner's compliance.
        let expected_delivered = p.dr_compliance.apply(row.scheduled_wh);
        assert_eq!(row.delivered_wh, expected_delivered, "{row:?}");
        let shortfall = row.scheduled_wh - expected_delivered;
        assert_eq!(row.shortfall_wh, shortfall);
        assert_eq!(row.payout, asset.cost_rate * expected_delivered / 1000);
        assert_eq!(row.penalty, service.penalty_rate * shortfall / 1000);
    }
    assert!(report.vpp_settlements.iter().any(|r| r.shortfall_wh > 0));
    let c = &report.conservation;
    assert_eq!(c.vpp_operator_payouts, c.vpp_member_nets);
}

#[test]
fn combined_fixture_reconciles_every_prosumer() {
    let output = common::run_fixture("all");
    let report = &output.report;
    assert_eq!(report.chain.failed_receipts, 0, "{:?}", report.chain.failures);
    assert!(report.notes.is_empty(), "{:?}", report.notes);
    assert_eq!(report.prosumers.len(), 10);
    assert!(report.prosumers.iter().all(|p| p.reconciled));
    assert!(report.forecasts.requests > 0);
    assert_eq!(report.forecasts.answered, report.forecasts.requests);
    assert!(!report.dr_settlements.is_empty());
    assert!(!report.vpp_settlements.is_empty());
    assert!(report.conservation.holds);
    assert_eq!(report.network.nodes_on_tip, report.network.nodes);
}

#[test]
fn forged_settlement_passes_verify_but_not_audit() {
    let output = common::run_fixture("dr");
    let (config, _) = common::load_fixture("dr");
    let (forged, height) = common::forge_dr_settlement(&output.blocks, &output.genesis, config.seed, 250);
    assert!(verify_bytes(&encode_ledger(&forged), &output.genesis).ok);
    let audit = audit_blocks(&forged).unwrap();
    assert_eq!(audit.discrepancies.len(), 1, "{:?}", audit.discrepancies);
    let d = &audit.discrepancies[0];
    assert_eq!(d.height, height);
    assert!(d.tx_hash.is_some());
    assert!(d.message.contains("meter recorded"), "{}", d.message);
}

#[test]
fn lossy_network_still_conserves_and_audits_clean() {
    let (mut config, traces) = common::load_fixture("p2p");
    config.network = NetworkConfig {
        delay_ticks: 1,
        jitter_ticks: 1,
        drop_rate: 0.2,
    };
    let output = run(&config, &traces, config.seed).unwrap();
    assert!(output.report.network.messages.dropped > 0);
    assert!(output.report.conservation.holds);
    assert!(audit_blocks(&output.blocks).unwrap().clean());
    assert!(verify_bytes(&encode_ledger(&output.blocks), &output.genesis).ok);
    assert!(!output.report.clearings.is_empty());
}

#[test]
fn seed_changes_the_ledger() {
    let (config, traces) = common::load_fixture("p2p");
    let a = run(&config, &traces, 1).unwrap();
    let b = run(&config, &traces, 2).unwrap();
    assert_ne!(encode_ledger(&a.blocks), encode_ledger(&b.blocks));
    assert_eq!(
        a.report.conservation.market_energy_bought_wh,
        b.report.conservation.market_energy_bought_wh
    );
}

#[test]
fn genesis_only_chain_verifies_and_audits_empty() {
    let output = common::run_fixture("p2p");
    let only = vec![gridchain::ledger::genesis::genesis_block(&output.genesis)];
    assert_eq!(only[0].hash(), output.blocks[0].hash());
    assert!(verify_bytes(&encode_ledger(&only), &output.genesis).ok);
    let audit = audit_blocks(&only).unwrap();
    assert!(audit.clean());
    assert!(audit.discrepancies.is_empty());

    let empty = verify_bytes(&[], &output.genesis);
    assert!(!empty.ok);
    assert_eq!(empty.failure.unwrap().height, 0);
}
