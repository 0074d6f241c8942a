//! Consumption baseline that skips days touched by earlier DR events.

use gridchain::oracle::compute_baseline;

fn main() {
    let spd = 4u64;
    let days: [[i64; 4]; 5] = [
        [100, 200, 300, 400],
        [110, 210, 310, 410],
        [120, 220, 320, 420],
        [130, 230, 10, 430],
        [140, 240, 340, 440],
    ];
    let history: Vec<i64> = days.iter().flatten().copied().collect();
    let plain = compute_baseline(&history, spd, &[]).unwrap();
    println!("last three days:           {:?}", plain.slot_wh);
    // Day 3 held a curtailment in slot 14.
    let clean = compute_baseline(&history, spd, &[(14, 15)]).unwrap();
    println!("skipping the curtailed day: {:?}", clean.slot_wh);
}
