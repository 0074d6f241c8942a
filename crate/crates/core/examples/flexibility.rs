//! Cheapest set of prosumers covering a flexibility requirement.

use gridchain::oracle::{select_flexibility, Candidate};

fn main() {
    let candidates = [
        Candidate { id: 0, flex_wh: 4000, cost: 800 },
        Candidate { id: 1, flex_wh: 3200, cost: 480 },
        Candidate { id: 2, flex_wh: 2800, cost: 504 },
        Candidate { id: 3, flex_wh: 1500, cost: 200 },
        Candidate { id: 4, flex_wh: 900, cost: 150 },
    ];
    for target in [1000, 6000, 9000, 20_000] {
        let s = select_flexibility(&candidates, target);
        println!(
            "target {target:>5} Wh: chosen {:?}, {} Wh for {} (feasible {}, exact {})",
            s.chosen, s.total_wh, s.total_cost, s.feasible, s.exact
        );
    }
}
