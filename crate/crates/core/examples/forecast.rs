//! Day-ahead and intra-day forecasts from metered history.

use gridchain::oracle::{forecast, Horizon};

fn main() {
    // Three days of half-hourly history with a midday generation dip.
    let history: Vec<i64> = (0..3 * 48)
        .map(|s| {
            let hour = (s % 48) as i64 / 2;
            if (9..16).contains(&hour) {
                -400
            } else {
                300 + 20 * hour
            }
        })
        .collect();
    let day_ahead = forecast(&history, 48, Horizon::DayAhead).expect("enough history");
    println!("day-ahead, {} hourly values: {day_ahead:?}", day_ahead.len());
    let intra_day = forecast(&history, 48, Horizon::IntraDay).expect("enough history");
    println!("intra-day, {} half-hour values: {intra_day:?}", intra_day.len());
}
