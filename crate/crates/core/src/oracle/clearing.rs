//! Uniform-price double auction for one delivery slot.
//!
//! Volume is the largest quantity tradable at a single price. Within the
//! interval of prices that trade that volume the price is placed where the
//! excess demand `D(p) - S(p)` changes sign, taking the floored midpoint of
//! the balanced range. For a book whose marginal orders clear exactly this
//! is the midpoint of the marginal bid and offer limits.
//!
//! Fills follow price priority. The marginal price level on each side is
//! shared pro-rata by quantity and the Wh left over after flooring are handed
//! out one at a time in ascending order id.

use serde::{Deserialize, Serialize};

use crate::canonical_struct;
use crate::contracts::market::{ClearingResult, Match, Order, Side};

/// One side of the book as seen by the clearing service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookOrder {
    pub id: u64,
    pub qty_wh: u64,
    pub limit_price: i64,
}
canonical_struct!(BookOrder { id, qty_wh, limit_price });

impl From<&Order> for BookOrder {
    fn from(o: &Order) -> Self {
        Self {
            id: o.id,
            qty_wh: o.qty_wh,
            limit_price: o.limit_price,
        }
    }
}

/// Splits open market orders for `slot` into (bids, offers).
pub fn book_for_slot<'a>(orders: impl IntoIterator<Item = &'a Order>, slot: u64) -> (Vec<BookOrder>, Vec<BookOrder>) {
    let (mut bids, mut offers) = (Vec::new(), Vec::new());
    for o in orders.into_iter().filter(|o| o.slot == slot) {
        match o.side {
            Side::Bid => bids.push(o.into()),
            Side::Offer => offers.push(o.into()),
        }
    }
    (bids, offers)
}

/// Total bid quantity willing to pay at least `p`.
pub fn demand_at(bids: &[BookOrder], p: i64) -> u64 {
    bids.iter().filter(|b| b.limit_price >= p).map(|b| b.qty_wh).sum()
}

/// Total offer quantity willing to sell at `p` or less.
pub fn supply_at(offers: &[BookOrder], p: i64) -> u64 {
    offers.iter().filter(|o| o.limit_price <= p).map(|o| o.qty_wh).sum()
}

/// Sorted by descending limit, then ascending id.
fn bid_priority(bids: &[BookOrder]) -> Vec<BookOrder> {
    let mut v: Vec<BookOrder> = bids.iter().copied().filter(|b| b.qty_wh > 0).collect();
    v.sort_by_key(|b| (std::cmp::Reverse(b.limit_price), b.id));
    v
}

/// Sorted by ascending limit, then ascending id.
fn offer_priority(offers: &[BookOrder]) -> Vec<BookOrder> {
    let mut v: Vec<BookOrder> = offers.iter().copied().filter(|o| o.qty_wh > 0).collect();
    v.sort_by_key(|o| (o.limit_price, o.id));
    v
}

/// Walks both priority queues unit by unit while the next bid still pays
/// the next offer. Returns the volume and the limits of the last units
/// traded on each side.
fn max_volume(bids: &[BookOrder], offers: &[BookOrder]) -> (u64, i64, i64) {
    let (mut i, mut j) = (0, 0);
    let (mut bid_left, mut offer_left) = (0u64, 0u64);
    let (mut q, mut b_star, mut s_star) = (0u64, 0i64, 0i64);
    loop {
        if bid_left == 0 {
            match bids.get(i) {
                Some(b) => bid_left = b.qty_wh,
                None => break,
            }
        }
        if offer_left == 0 {
            match offers.get(j) {
                Some(o) => offer_left = o.qty_wh,
                None => break,
            }
        }
        let (b, o) = (bids[i], offers[j]);
        if b.limit_price < o.limit_price {
            break;
        }
        let step = bid_left.min(offer_left);
        q += step;
        b_star = b.limit_price;
        s_star = o.limit_price;
        bid_left -= step;
        offer_left -= step;
        if bid_left == 0 {
            i += 1;
        }
        if offer_left == 0 {
            j += 1;
        }
    }
    (q, b_star, s_star)
}

/// Largest `p` in `[lo, hi]` with `pred(p)`, for a predicate that holds on a
/// prefix of the range.
fn last_true(lo: i64, hi: i64, pred: impl Fn(i64) -> bool) -> Option<i64> {
    if !pred(lo) {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a + 1) / 2;
        if pred(mid) {
            a = mid;
        } else {
            b = mid - 1;
        }
    }
    Some(a)
}

/// Smallest `p` in `[lo, hi]` with `pred(p)`, for a predicate that holds on
/// a suffix of the range.
fn first_true(lo: i64, hi: i64, pred: impl Fn(i64) -> bool) -> Option<i64> {
    if !pred(hi) {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        if pred(mid) {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    Some(a)
}

/// Clearing price for a book whose maximum volume `q > 0` is traded between
/// the supply limit `s_star` and the demand limit `b_star`.
fn clearing_price(bids: &[BookOrder], offers: &[BookOrder], s_star: i64, b_star: i64) -> i64 {
    let excess = |p: i64| demand_at(bids, p) as i128 - supply_at(offers, p) as i128;
    let hi = last_true(s_star, b_star, |p| excess(p) >= 0).unwrap_or(s_star);
    let lo = first_true(s_star, b_star, |p| excess(p) <= 0).unwrap_or(b_star);
    if lo <= hi {
        (lo + hi).div_euclid(2)
    } else {
        hi
    }
}

/// Allocates `volume` across orders already in priority order, restricted
/// to those whose limit satisfies `eligible`. Returns (id, fill) pairs in
/// priority order, omitting zero fills.
fn allocate(orders: &[BookOrder], volume: u64, eligible: impl Fn(i64) -> bool) -> Vec<(u64, u64)> {
    let mut fills = Vec::new();
    let mut left = volume;
    let mut k = 0;
    while k < orders.len() && left > 0 && eligible(orders[k].limit_price) {
        let price = orders[k].limit_price;
        let level_end = orders[k..]
            .iter()
            .position(|o| o.limit_price != price)
            .map_or(orders.len(), |n| k + n);
        let level = &orders[k..level_end];
        let level_qty: u64 = level.iter().map(|o| o.qty_wh).sum();
        if level_qty <= left {
            fills.extend(level.iter().map(|o| (o.id, o.qty_wh)));
            left -= level_qty;
        } else {
            let mut part: Vec<u64> = level
                .iter()
                .map(|o| (o.qty_wh as u128 * left as u128 / level_qty as u128) as u64)
                .collect();
            let mut rest = left - part.iter().sum::<u64>();
            let mut by_id: Vec<usize> = (0..level.len()).collect();
            by_id.sort_by_key(|&i| level[i].id);
            while rest > 0 {
                for &i in &by_id {
                    if rest > 0 && part[i] < level[i].qty_wh {
                        part[i] += 1;
                        rest -= 1;
                    }
                }
            }
            fills.extend(level.iter().zip(part).filter(|(_, q)| *q > 0).map(|(o, q)| (o.id, q)));
            left = 0;
        }
        k = level_end;
    }
    fills
}

pub fn clear_market(slot: u64, bids: &[BookOrder], offers: &[BookOrder]) -> ClearingResult {
    let bids = bid_priority(bids);
    let offers = offer_priority(offers);
    let (q, b_star, s_star) = max_volume(&bids, &offers);
    if q == 0 {
        return ClearingResult {
            slot,
            clearing_price: 0,
            matches: Vec::new(),
            total_qty_wh: 0,
        };
    }
    let price = clearing_price(&bids, &offers, s_star, b_star);
    let bid_fills = allocate(&bids, q, |l| l >= price);
    let offer_fills = allocate(&offers, q, |l| l <= price);

    let mut matches = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (mut bid_left, mut offer_left) = (bid_fills[0].1, offer_fills[0].1);
    while i < bid_fills.len() && j < offer_fills.len() {
        let step = bid_left.min(offer_left);
        matches.push(Match {
            bid_id: bid_fills[i].0,
            offer_id: offer_fills[j].0,
            qty_wh: step,
        });
        bid_left -= step;
        offer_left -= step;
        if bid_left == 0 {
            i += 1;
            bid_left = bid_fills.get(i).map_or(0, |f| f.1);
        }
        if offer_left == 0 {
            j += 1;
            offer_left = offer_fills.get(j).map_or(0, |f| f.1);
        }
    }
    ClearingResult {
        slot,
        clearing_price: price,
        matches,
        total_qty_wh: q,
    }
}
