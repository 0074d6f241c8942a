//! Seasonal-naive energy forecasts: each predicted value repeats the value
//! observed one day earlier.

use serde::{Deserialize, Serialize};

use crate::canonical_tag_enum;

use super::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Next 24 hours, hourly.
    DayAhead,
    /// Next 4 hours, half-hourly.
    IntraDay,
}
canonical_tag_enum!(Horizon { DayAhead = 0, IntraDay = 1 });

impl Horizon {
    pub fn len(self) -> usize {
        match self {
            Horizon::DayAhead => 24,
            Horizon::IntraDay => 8,
        }
    }

    /// Values per day at the horizon's granularity.
    pub fn period(self) -> usize {
        match self {
            Horizon::DayAhead => 24,
            Horizon::IntraDay => 48,
        }
    }
}

/// Resamples a day-aligned series with `slots_per_day` slots to the
/// horizon's granularity. Hourly values split into half hours as
/// `floor(v/2)` and the remainder; a trailing partial hour is dropped.
fn resample(history: &[i64], slots_per_day: u64, horizon: Horizon) -> Result<Vec<i64>, ServiceError> {
    match (slots_per_day, horizon) {
        (24, Horizon::DayAhead) | (48, Horizon::IntraDay) => Ok(history.to_vec()),
        (48, Horizon::DayAhead) => Ok(history.chunks_exact(2).map(|p| p[0] + p[1]).collect()),
        (24, Horizon::IntraDay) => Ok(history
            .iter()
            .flat_map(|&v| {
                let first = v.div_euclid(2);
                [first, v - first]
            })
            .collect()),
        _ => Err(ServiceError::Invalid(format!(
            "forecasting needs 24 or 48 slots per day, got {slots_per_day}"
        ))),
    }
}

/// Forecast for the period right after the end of `history`.
pub fn forecast(history: &[i64], slots_per_day: u64, horizon: Horizon) -> Result<Vec<i64>, ServiceError> {
    let series = resample(history, slots_per_day, horizon)?;
    let period = horizon.period();
    if series.len() < period {
        return Err(ServiceError::InsufficientHistory {
            needed: period,
            got: series.len(),
        });
    }
    let start = series.len() - period;
    Ok(series[start..start + horizon.len()].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lengths() {
        let hist = vec![100; 48];
        assert_eq!(forecast(&hist, 24, Horizon::DayAhead).unwrap().len(), 24);
        assert_eq!(forecast(&hist, 48, Horizon::IntraDay).unwrap().len(), 8);
        assert_eq!(forecast(&hist, 48, Horizon::DayAhead).unwrap().len(), 24);
        assert_eq!(forecast(&hist, 24, Horizon::IntraDay).unwrap().len(), 8);
    }

    #[test]
    fn constant_history_is_fixed_point() {
        assert!(forecast(&[700; 30], 24, Horizon::DayAhead).unwrap().iter().all(|&v| v == 700));
    }

    #[test]
    fn periodic_history_repeats_last_day() {
        let day: Vec<i64> = (0..24).map(|h| h * 10).collect();
        let hist: Vec<i64> = day.iter().chain(&day).copied().collect();
        assert_eq!(forecast(&hist, 24, Horizon::DayAhead).unwrap(), day);
    }

    #[test]
    fn intra_day_takes_next_four_hours_from_a_day_ago() {
        let hist: Vec<i64> = (0..60).collect();
        assert_eq!(forecast(&hist, 48, Horizon::IntraDay).unwrap(), (12..20).collect::<Vec<_>>());
    }

    #[test]
    fn short_history_rejected() {
        assert!(matches!(
            forecast(&[1; 23], 24, Horizon::DayAhead),
            Err(ServiceError::InsufficientHistory { needed: 24, got: 23 })
        ));
        assert!(forecast(&[1; 47], 48, Horizon::IntraDay).is_err());
        assert!(forecast(&[1; 100], 96, Horizon::DayAhead).is_err());
    }

    proptest! {
        #[test]
        fn shape_and_determinism(hist in prop::collection::vec(-5000i64..5000, 48..200), half in any::<bool>()) {
            let spd = if half { 48 } else { 24 };
            for h in [Horizon::DayAhead, Horizon::IntraDay] {
                let a = forecast(&hist, spd, h).unwrap();
                prop_assert_eq!(a.len(), h.len());
                prop_assert_eq!(a, forecast(&hist, spd, h).unwrap());
            }
        }
    }
}
