//! Minimum-cost flexibility subset selection.
//!
//! Exact 0/1 knapsack over flexibility units when the instance is small
//! enough, greedy by cost per Wh otherwise. Among optimal subsets the one
//! with the smallest total Wh wins, then the lexicographically smallest
//! sorted id list.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::canonical_struct;

/// Instances with more flexibility units than this use the greedy path.
pub const EXACT_UNIT_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub flex_wh: u64,
    pub cost: u64,
}
canonical_struct!(Candidate { id, flex_wh, cost });

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlexSelection {
    pub target_wh: u64,
    /// Sorted ascending.
    pub chosen: Vec<u64>,
    pub total_wh: u64,
    pub total_cost: u64,
    pub feasible: bool,
    /// False when the greedy fallback produced the selection.
    pub exact: bool,
}
canonical_struct!(FlexSelection { target_wh, chosen, total_wh, total_cost, feasible, exact });

const INF: u64 = u64::MAX;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `f_k` from `f_{k+1}`: best cost to reach each exact unit sum using
/// candidates `k..`.
fn extend_row(next: &[u64], unit: usize, cost: u64) -> Vec<u64> {
    let mut row = next.to_vec();
    for s in unit..row.len() {
        let prev = next[s - unit];
        if prev != INF {
            row[s] = row[s].min(prev.saturating_add(cost));
        }
    }
    row
}

/// Suffix rows `f_0..=f_n`, stored at every `step`-th index and rebuilt
/// block by block on demand.
struct SuffixRows<'a> {
    units: &'a [usize],
    costs: &'a [u64],
    step: usize,
    checkpoints: Vec<Vec<u64>>,
    block_top: usize,
    block: Vec<Vec<u64>>,
}

impl<'a> SuffixRows<'a> {
    fn new(units: &'a [usize], costs: &'a [u64], width: usize) -> Self {
        let n = units.len();
        let step = ((n + 1) as f64).sqrt().ceil() as usize;
        let mut row = vec![INF; width];
        row[0] = 0;
        let mut checkpoints = vec![Vec::new(); n / step + 2];
        for k in (0..=n).rev() {
            if k < n {
                row = extend_row(&row, units[k], costs[k]);
            }
            if k % step == 0 || k == n {
                checkpoints[k.div_ceil(step)] = row.clone();
            }
        }
        Self {
            units,
            costs,
            step,
            checkpoints,
            block_top: usize::MAX,
            block: Vec::new(),
        }
    }

    fn first(&self) -> &[u64] {
        &self.checkpoints[0]
    }

    fn get(&mut self, k: usize) -> &[u64] {
        let n = self.units.len();
        let top = (k.div_ceil(self.step) * self.step).min(n);
        if top != self.block_top {
            let mut rows = vec![self.checkpoints[top.div_ceil(self.step)].clone()];
            let bottom = top.saturating_sub(self.step);
            for j in (bottom..top).rev() {
                let next = extend_row(rows.last().unwrap(), self.units[j], self.costs[j]);
                rows.push(next);
            }
            self.block = rows;
            self.block_top = top;
        }
        &self.block[top - k]
    }
}

fn infeasible(target_wh: u64, exact: bool) -> FlexSelection {
    FlexSelection {
        target_wh,
        chosen: Vec::new(),
        total_wh: 0,
        total_cost: 0,
        feasible: false,
        exact,
    }
}

fn finish(target_wh: u64, chosen: &[&Candidate], exact: bool) -> FlexSelection {
    let mut ids: Vec<u64> = chosen.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    FlexSelection {
        target_wh,
        chosen: ids,
        total_wh: chosen.iter().map(|c| c.flex_wh).sum(),
        total_cost: chosen.iter().map(|c| c.cost).sum(),
        feasible: true,
        exact,
    }
}

fn select_exact(cands: &[Candidate], target_wh: u64, g: u64) -> FlexSelection {
    let units: Vec<usize> = cands.iter().map(|c| (c.flex_wh / g) as usize).collect();
    let costs: Vec<u64> = cands.iter().map(|c| c.cost).collect();
    let total_units: usize = units.iter().sum();
    let target_units = target_wh.div_ceil(g) as usize;
    let mut rows = SuffixRows::new(&units, &costs, total_units + 1);

    let (best_sum, best_cost) = rows.first()[target_units..]
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != INF)
        .map(|(i, &c)| (target_units + i, c))
        .min_by_key(|&(s, c)| (c, s))
        .expect("total flexibility covers the target");

    // Take the smallest id that still admits an optimal completion.
    let (mut sum, mut budget) = (best_sum, best_cost);
    let mut chosen = Vec::new();
    for k in 0..cands.len() {
        if sum == 0 {
            break;
        }
        if units[k] <= sum {
            let rest = rows.get(k + 1)[sum - units[k]];
            if rest != INF && rest + costs[k] == budget {
                chosen.push(&cands[k]);
                sum -= units[k];
                budget -= costs[k];
            }
        }
    }
    debug_assert_eq!((sum, budget), (0, 0));
    finish(target_wh, &chosen, true)
}

fn select_greedy(cands: &[Candidate], target_wh: u64) -> FlexSelection {
    let mut order: Vec<&Candidate> = cands.iter().collect();
    // cost_a / flex_a < cost_b / flex_b without division.
    order.sort_by(|a, b| {
        (a.cost as u128 * b.flex_wh as u128)
            .cmp(&(b.cost as u128 * a.flex_wh as u128))
            .then(a.id.cmp(&b.id))
    });
    let mut chosen = Vec::new();
    let mut total = 0u64;
    for c in order {
        if total >= target_wh {
            break;
        }
        total += c.flex_wh;
        chosen.push(c);
    }
    // Drop members the rest can cover without, most expensive first.
    let mut by_cost: Vec<usize> = (0..chosen.len()).collect();
    by_cost.sort_by_key(|&i| (std::cmp::Reverse(chosen[i].cost), chosen[i].id));
    let mut dropped = BTreeSet::new();
    for i in by_cost {
        if total - chosen[i].flex_wh >= target_wh {
            total -= chosen[i].flex_wh;
            dropped.insert(i);
        }
    }
    let kept: Vec<&Candidate> = chosen
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, c)| c)
        .collect();
    finish(target_wh, &kept, false)
}

/// Cheapest subset of `candidates` whose flexibility covers `target_wh`.
/// Candidates with zero flexibility are ignored; ids must be unique.
pub fn select_flexibility(candidates: &[Candidate], target_wh: u64) -> FlexSelection {
    let mut cands: Vec<Candidate> = candidates.iter().copied().filter(|c| c.flex_wh > 0).collect();
    cands.sort_by_key(|c| c.id);
    let available: u64 = cands.iter().map(|c| c.flex_wh).sum();
    if target_wh == 0 {
        return finish(0, &[], true);
    }
    if available < target_wh {
        return infeasible(target_wh, true);
    }
    let g = cands.iter().fold(0, |acc, c| gcd(acc, c.flex_wh));
    if available / g <= EXACT_UNIT_LIMIT {
        select_exact(&cands, target_wh, g)
    } else {
        select_greedy(&cands, target_wh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(id: u64, flex_wh: u64, cost: u64) -> Candidate {
        Candidate { id, flex_wh, cost }
    }

    /// Exhaustive enumeration with the same tie-breaking order.
    fn brute(cands: &[Candidate], target: u64) -> Option<(u64, u64, Vec<u64>)> {
        let n = cands.len();
        let mut best: Option<(u64, u64, Vec<u64>)> = None;
        for mask in 0u32..(1 << n) {
            let set: Vec<&Candidate> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &cands[i]).collect();
            let wh: u64 = set.iter().map(|c| c.flex_wh).sum();
            if wh < target {
                continue;
            }
            let cost: u64 = set.iter().map(|c| c.cost).sum();
            let mut ids: Vec<u64> = set.iter().map(|c| c.id).collect();
            ids.sort();
            let key = (cost, wh, ids);
            if best.as_ref().map_or(true, |b| key < *b) {
                best = Some(key);
            }
        }
        best
    }

    #[test]
    fn target_zero_is_empty() {
        let s = select_flexibility(&[c(0, 100, 5)], 0);
        assert!(s.feasible && s.chosen.is_empty() && s.total_cost == 0);
    }

    #[test]
    fn two_small_beat_one_large() {
        let s = select_flexibility(&[c(0, 2000, 400), c(1, 3000, 500), c(2, 5000, 1000)], 5000);
        assert_eq!(s.chosen, vec![0, 1]);
        assert_eq!(s.total_cost, 900);
        assert!(s.exact);
    }

    #[test]
    fn infeasible_target() {
        let s = select_flexibility(&[c(0, 4000, 1), c(1, 6000, 1)], 20_000);
        assert!(!s.feasible);
        assert!(s.chosen.is_empty());
    }

    #[test]
    fn greedy_path_flags_non_exact() {
        let cands = [c(0, 999_983, 10), c(1, 999_979, 30), c(2, 7, 1)];
        let s = select_flexibility(&cands, 1_000_000);
        assert!(!s.exact && s.feasible);
        assert!(s.total_wh >= 1_000_000);
    }

    #[test]
    fn ties_prefer_less_energy_then_lower_ids() {
        let s = select_flexibility(&[c(0, 3000, 100), c(1, 2000, 100), c(2, 2000, 100)], 2000);
        assert_eq!(s.chosen, vec![1]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn matches_exhaustive_optimum(
            raw in prop::collection::vec((1u64..=5000, 0u64..=2000), 0..=15),
            frac in 0u64..=120,
        ) {
            let cands: Vec<Candidate> = raw.iter().enumerate().map(|(i, &(f, k))| c(i as u64, f, k)).collect();
            let total: u64 = cands.iter().map(|c| c.flex_wh).sum();
            let target = total * frac / 100;
            let s = select_flexibility(&cands, target);
            match brute(&cands, target) {
                None => prop_assert!(!s.feasible),
                Some((cost, wh, ids)) => {
                    prop_assert!(s.feasible && s.exact);
                    prop_assert_eq!((s.total_cost, s.total_wh, s.chosen), (cost, wh, ids));
                }
            }
        }
    }
}
