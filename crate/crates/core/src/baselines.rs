//! Order-book clearing mechanisms used as comparison baselines.
//!
//! - `mpra`: rank matching (highest bid with lowest ask, while the bid covers
//!   the ask) and one uniform price found by binary search.
//! - `tra`: sellers served cheapest first, each seller's supply split equally
//!   among qualifying buyers, and every unit charged at the buyer's critical
//!   value.
//! - `cpa`: a uniform-price double auction over a book padded with virtual
//!   quotes at the running median bid and ask; buyers carry unspent budget
//!   across rounds.
//!
//! All quantities are in whole units. Ties are broken by account id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ledger::AccountId;

/// Stopping width of the MPRA price search.
pub const PRICE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub buyer: AccountId,
    pub price: f64,
    pub quantity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ask {
    pub seller: AccountId,
    pub price: f64,
    pub quantity: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub buyer: AccountId,
    pub seller: AccountId,
    pub quantity: u32,
    pub unit_price: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub matches: Vec<Match>,
    pub clearing_price: Option<f64>,
    pub unmatched_bids: Vec<Bid>,
    pub unmatched_asks: Vec<Ask>,
}

impl ClearingResult {
    pub fn volume(&self) -> u32 {
        self.matches.iter().map(|m| m.quantity).sum()
    }

    fn from_fills(
        bids: &[Bid],
        asks: &[Ask],
        matches: Vec<Match>,
        bid_filled: &[u32],
        ask_filled: &[u32],
        clearing_price: Option<f64>,
    ) -> Self {
        let unmatched_bids = bids
            .iter()
            .zip(bid_filled)
            .filter(|(b, f)| **f < b.quantity)
            .map(|(b, f)| Bid { quantity: b.quantity - f, ..*b })
            .collect();
        let unmatched_asks = asks
            .iter()
            .zip(ask_filled)
            .filter(|(a, f)| **f < a.quantity)
            .map(|(a, f)| Ask { quantity: a.quantity - f, ..*a })
            .collect();
        ClearingResult { matches, clearing_price, unmatched_bids, unmatched_asks }
    }
}

/// Bid indices, highest price first.
fn bid_order(bids: &[Bid]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..bids.len()).collect();
    idx.sort_by(|&a, &b| bids[b].price.total_cmp(&bids[a].price).then(bids[a].buyer.cmp(&bids[b].buyer)));
    idx
}

/// Ask indices, lowest price first.
fn ask_order(asks: &[Ask]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..asks.len()).collect();
    idx.sort_by(|&a, &b| asks[a].price.total_cmp(&asks[b].price).then(asks[a].seller.cmp(&asks[b].seller)));
    idx
}

/// Units demanded at `p`.
pub fn demand_at(bids: &[Bid], p: f64) -> u64 {
    bids.iter().filter(|b| b.price >= p).map(|b| b.quantity as u64).sum()
}

/// Units supplied at `p`.
pub fn supply_at(asks: &[Ask], p: f64) -> u64 {
    asks.iter().filter(|a| a.price <= p).map(|a| a.quantity as u64).sum()
}

pub fn mpra_clear(bids: &[Bid], asks: &[Ask]) -> ClearingResult {
    let (bo, ao) = (bid_order(bids), ask_order(asks));
    let mut bid_filled = vec![0u32; bids.len()];
    let mut ask_filled = vec![0u32; asks.len()];
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < bo.len() && j < ao.len() {
        let (b, a) = (bo[i], ao[j]);
        if bids[b].price < asks[a].price {
            break;
        }
        let q = (bids[b].quantity - bid_filled[b]).min(asks[a].quantity - ask_filled[a]);
        if q > 0 {
            pairs.push((b, a, q));
            bid_filled[b] += q;
            ask_filled[a] += q;
        }
        if bid_filled[b] == bids[b].quantity {
            i += 1;
        }
        if ask_filled[a] == asks[a].quantity {
            j += 1;
        }
    }
    if pairs.is_empty() {
        return ClearingResult::from_fills(bids, asks, Vec::new(), &bid_filled, &ask_filled, None);
    }
    let mut lo = pairs.iter().map(|&(_, a, _)| asks[a].price).fold(f64::MIN, f64::max);
    let mut hi = pairs.iter().map(|&(b, _, _)| bids[b].price).fold(f64::MAX, f64::min);
    // excess demand is non-increasing in price; find where it stops being positive
    while hi - lo > PRICE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if demand_at(bids, mid) > supply_at(asks, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let price = 0.5 * (lo + hi);
    let matches = pairs
        .into_iter()
        .map(|(b, a, quantity)| Match { buyer: bids[b].buyer, seller: asks[a].seller, quantity, unit_price: price })
        .collect();
    ClearingResult::from_fills(bids, asks, matches, &bid_filled, &ask_filled, Some(price))
}

/// TRA allocation: `alloc[ask][bid]` units, serving asks cheapest first.
pub fn tra_allocate(bids: &[Bid], asks: &[Ask]) -> Vec<Vec<u32>> {
    let mut by_id: Vec<usize> = (0..bids.len()).collect();
    by_id.sort_by_key(|&b| (bids[b].buyer, b));
    let mut remaining: Vec<u32> = bids.iter().map(|b| b.quantity).collect();
    let mut alloc = vec![vec![0u32; bids.len()]; asks.len()];
    for a in ask_order(asks) {
        let mut supply = asks[a].quantity;
        loop {
            let active: Vec<usize> =
                by_id.iter().copied().filter(|&b| remaining[b] > 0 && bids[b].price >= asks[a].price).collect();
            if active.is_empty() || supply == 0 {
                break;
            }
            let share = supply / active.len() as u32;
            if share == 0 {
                // remainder: one unit each, lowest ids first
                for &b in active.iter().take(supply as usize) {
                    alloc[a][b] += 1;
                    remaining[b] -= 1;
                }
                break;
            }
            for &b in &active {
                let g = share.min(remaining[b]);
                alloc[a][b] += g;
                remaining[b] -= g;
                supply -= g;
            }
        }
    }
    alloc
}

fn units_of(alloc: &[Vec<u32>], b: usize) -> u32 {
    alloc.iter().map(|row| row[b]).sum()
}

/// Critical value of each unit bidder `b` wins: the smallest report at which
/// it would still receive at least `k` units. Units are only ever gained when
/// a report crosses an ask, so the search runs over ask prices.
pub fn tra_critical_values(bids: &[Bid], asks: &[Ask], b: usize) -> Vec<f64> {
    let won = units_of(&tra_allocate(bids, asks), b);
    let mut candidates: Vec<f64> = asks.iter().map(|a| a.price).filter(|&p| p <= bids[b].price).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut probe = bids.to_vec();
    let mut units_at = |price: f64| {
        probe[b].price = price;
        units_of(&tra_allocate(&probe, asks), b)
    };
    let mut crit = Vec::with_capacity(won as usize);
    let mut floor = 0;
    for k in 1..=won {
        // smallest candidate index with units >= k, searched above the previous unit's
        let (mut lo, mut hi) = (floor, candidates.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if units_at(candidates[mid]) >= k {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        crit.push(candidates[lo]);
        floor = lo;
    }
    crit
}

pub fn tra_clear(bids: &[Bid], asks: &[Ask]) -> ClearingResult {
    let alloc = tra_allocate(bids, asks);
    let ao = ask_order(asks);
    let mut bid_filled = vec![0u32; bids.len()];
    let mut ask_filled = vec![0u32; asks.len()];
    let mut matches = Vec::new();
    for b in 0..bids.len() {
        if units_of(&alloc, b) == 0 {
            continue;
        }
        let crit = tra_critical_values(bids, asks, b);
        let mut prices = crit.into_iter();
        // cheapest units take the lowest critical values
        for &a in &ao {
            let q = alloc[a][b];
            for _ in 0..q {
                let unit_price = prices.next().expect("one critical value per unit");
                push_unit(&mut matches, bids[b].buyer, asks[a].seller, unit_price);
            }
            bid_filled[b] += q;
            ask_filled[a] += q;
        }
    }
    ClearingResult::from_fills(bids, asks, matches, &bid_filled, &ask_filled, None)
}

/// Appends one unit, merging with the previous match when identical.
fn push_unit(matches: &mut Vec<Match>, buyer: AccountId, seller: AccountId, unit_price: f64) {
    if let Some(last) = matches.last_mut() {
        if last.buyer == buyer && last.seller == seller && last.unit_price == unit_price {
            last.quantity += 1;
            return;
        }
    }
    matches.push(Match { buyer, seller, quantity: 1, unit_price });
}

/// Carried state of the CPA market.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CpaState {
    /// Virtual quotes added per side.
    pub padding: usize,
    pub budgets: BTreeMap<AccountId, f64>,
    pub spent: BTreeMap<AccountId, f64>,
    bid_history: Vec<f64>,
    ask_history: Vec<f64>,
}

impl CpaState {
    pub fn new(padding: usize) -> Self {
        CpaState { padding, ..Default::default() }
    }

    pub fn budget(&self, buyer: AccountId) -> f64 {
        self.budgets.get(&buyer).copied().unwrap_or(0.0)
    }

    pub fn add_income(&mut self, buyer: AccountId, amount: f64) {
        *self.budgets.entry(buyer).or_default() += amount;
    }

    pub fn median_bid(&self) -> Option<f64> {
        median(&self.bid_history)
    }

    pub fn median_ask(&self) -> Option<f64> {
        median(&self.ask_history)
    }
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// One unit on a padded side: price and the originating order, `None` for
/// virtual quotes.
type Quote = (f64, Option<usize>);

/// One CPA round. Bid prices are capped at each buyer's budget, executed
/// units are charged against it (units the budget can no longer cover are
/// skipped), and the remainder carries over.
pub fn cpa_round(state: &mut CpaState, bids: &[Bid], asks: &[Ask]) -> ClearingResult {
    let bids: Vec<Bid> = bids.iter().map(|b| Bid { price: b.price.min(state.budget(b.buyer)).max(0.0), ..*b }).collect();
    state.bid_history.extend(bids.iter().map(|b| b.price));
    state.ask_history.extend(asks.iter().map(|a| a.price));
    let mut bid_filled = vec![0u32; bids.len()];
    let mut ask_filled = vec![0u32; asks.len()];
    if bids.is_empty() || asks.is_empty() {
        return ClearingResult::from_fills(&bids, asks, Vec::new(), &bid_filled, &ask_filled, None);
    }
    let mut buy_side: Vec<Quote> = Vec::new();
    for b in bid_order(&bids) {
        for _ in 0..bids[b].quantity {
            buy_side.push((bids[b].price, Some(b)));
        }
    }
    let mut sell_side: Vec<Quote> = Vec::new();
    for a in ask_order(asks) {
        for _ in 0..asks[a].quantity {
            sell_side.push((asks[a].price, Some(a)));
        }
    }
    let mb = state.median_bid().expect("history non-empty");
    let ma = state.median_ask().expect("history non-empty");
    buy_side.extend((0..state.padding).map(|_| (mb, None)));
    sell_side.extend((0..state.padding).map(|_| (ma, None)));
    // stable sorts keep real quotes ahead of virtual ones at equal prices
    buy_side.sort_by(|x, y| y.0.total_cmp(&x.0));
    sell_side.sort_by(|x, y| x.0.total_cmp(&y.0));
    let k = buy_side.iter().zip(&sell_side).take_while(|(b, a)| b.0 >= a.0).count();
    if k == 0 {
        return ClearingResult::from_fills(&bids, asks, Vec::new(), &bid_filled, &ask_filled, None);
    }
    let price = 0.5 * (buy_side[k - 1].0 + sell_side[k - 1].0);
    let real_bids: Vec<usize> = buy_side[..k].iter().filter_map(|q| q.1).collect();
    let real_asks: Vec<usize> = sell_side[..k].iter().filter_map(|q| q.1).collect();
    let mut matches = Vec::new();
    let mut sellers = real_asks.into_iter();
    for b in real_bids {
        let buyer = bids[b].buyer;
        // a multi-unit bid may run out of budget part way
        if state.budget(buyer) < price {
            continue;
        }
        let Some(a) = sellers.next() else { break };
        push_unit(&mut matches, buyer, asks[a].seller, price);
        bid_filled[b] += 1;
        ask_filled[a] += 1;
        *state.budgets.entry(buyer).or_default() -= price;
        *state.spent.entry(buyer).or_default() += price;
    }
    ClearingResult::from_fills(&bids, asks, matches, &bid_filled, &ask_filled, Some(price))
}
