//! Four validators taking turns over a network with a two-tick delay.

use gridchain::harness::{build_genesis, keys, ScenarioConfig};
use gridchain::ledger::network::{Network, NetworkConfig};

fn main() {
    let config = ScenarioConfig::from_json(
        r#"{"scenario": "p2p", "slots_per_day": 24, "days": 1, "traces": "unused.csv", "prosumers": []}"#,
    )
    .expect("valid config");
    let seed = 1;
    let genesis = build_genesis(&config, seed);
    let validators = (0..config.validators).map(|i| keys::validator(seed, i)).collect();
    let net_config = NetworkConfig {
        delay_ticks: 2,
        ..NetworkConfig::default()
    };
    let mut net = Network::new(&genesis, validators, net_config, seed).expect("genesis is consistent");

    for tick in 0..16 {
        net.step(tick);
        let heights: Vec<String> = net
            .nodes
            .iter()
            .map(|n| format!("{:>2}", n.tip().height()))
            .collect();
        println!("tick {tick:>2}  heights [{}]", heights.join(" "));
    }
    let chain = net.canonical_chain();
    for block in chain.iter().skip(1) {
        println!(
            "block {:>2} at tick {:>2} by {}",
            block.height(),
            block.header.tick,
            block.header.authority
        );
    }
    println!("messages {:?}", net.stats);
}
