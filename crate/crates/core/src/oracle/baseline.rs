//! Baseline profile from metered history.

use crate::contracts::dr::BaselineProfile;

use super::ServiceError;

pub const CLEAN_DAYS: usize = 3;

/// Per slot-of-day floored mean over the three most recent complete days
/// that no DR window `[start, end)` touches. `history[s]` is slot `s`.
pub fn compute_baseline(
    history: &[i64],
    slots_per_day: u64,
    dr_windows: &[(u64, u64)],
) -> Result<BaselineProfile, ServiceError> {
    if slots_per_day == 0 {
        return Err(ServiceError::Invalid("slots per day must be positive".into()));
    }
    let spd = slots_per_day as usize;
    let days = history.len() / spd;
    let clean: Vec<usize> = (0..days)
        .rev()
        .filter(|&d| {
            let (lo, hi) = ((d * spd) as u64, ((d + 1) * spd) as u64);
            !dr_windows.iter().any(|&(s, e)| s < hi && lo < e)
        })
        .take(CLEAN_DAYS)
        .collect();
    if clean.len() < CLEAN_DAYS {
        return Err(ServiceError::InsufficientHistory {
            needed: CLEAN_DAYS,
            got: clean.len(),
        });
    }
    let slot_wh = (0..spd)
        .map(|s| {
            let sum: i64 = clean.iter().map(|d| history[d * spd + s]).sum();
            sum.div_euclid(CLEAN_DAYS as i64)
        })
        .collect();
    Ok(BaselineProfile { slot_wh })
}
