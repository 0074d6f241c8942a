//! Settling a demand-response order against metered energy.

use gridchain::contracts::dr::{compute_settlement, Direction, FlexibilityOrder};

fn main() {
    let order = FlexibilityOrder {
        id: 0,
        start_slot: 40,
        end_slot: 41,
        direction: Direction::Reduce,
        amount_wh: 3000,
        incentive_rate: 200,
        penalty_rate: 100,
        congestion_point: "feeder-7".into(),
        baseline_wh: vec![10_000],
    };
    let s = compute_settlement(&order, &[7500]);
    println!("baseline 10000 Wh, metered 7500 Wh, ordered 3000 Wh");
    println!(
        "delivered {} Wh, shortfall {} Wh, reward {}, penalty {}, net {} milli",
        s.delivered_wh, s.shortfall_wh, s.reward, s.penalty, s.net
    );

    let order = FlexibilityOrder {
        end_slot: 44,
        baseline_wh: vec![10_000, 9000, 9500, 8000],
        ..order
    };
    let s = compute_settlement(&order, &[6500, 7000, 9600, 4000]);
    println!(
        "four slots: delivered {} of {} Wh, net {} milli",
        s.delivered_wh,
        order.ordered_total_wh(),
        s.net
    );
}
