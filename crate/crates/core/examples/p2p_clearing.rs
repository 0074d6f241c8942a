//! Uniform-price clearing of one delivery slot.

use gridchain::oracle::{clear_market, BookOrder};

fn order(id: u64, qty_wh: u64, limit_price: i64) -> BookOrder {
    BookOrder { id, qty_wh, limit_price }
}

fn show(title: &str, bids: &[BookOrder], offers: &[BookOrder]) {
    let r = clear_market(0, bids, offers);
    println!("{title}: {} Wh at {} milli/kWh", r.total_qty_wh, r.clearing_price);
    for m in &r.matches {
        println!("  bid {} <- offer {}: {} Wh", m.bid_id, m.offer_id, m.qty_wh);
    }
}

fn main() {
    let bids = [order(1, 100, 300), order(2, 100, 250)];
    let offers = [order(3, 100, 100), order(4, 100, 280)];
    show("two bids, two offers", &bids, &offers);

    let more = [order(3, 100, 100), order(4, 100, 280), order(5, 50, 240)];
    show("with a cheaper third offer", &bids, &more);

    // Three bids at one price share the 250 Wh on offer.
    let bids = [order(1, 100, 200), order(2, 100, 200), order(3, 100, 200)];
    let offers = [order(4, 250, 150)];
    show("pro-rata at the margin", &bids, &offers);
}
