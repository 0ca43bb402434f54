//! Property checkers and brute-force oracles shared by the integration tests
//! and the acceptance target.

#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use rwasim::amm::{AmmPool, PoolParams, CURVE_TOLERANCE};
use rwasim::baselines::{self, Ask, Bid};
use rwasim::channels::{Attestations, ChannelError, ChannelManager, ChannelTerms};
use rwasim::ledger::{AccountId, Amount, EscrowId, Ledger, LedgerError, Payload, TxId};
use rwasim::tokenization::{AssetDescriptor, AssetId, TokenId, TokenRegistry};

/// Deterministic runner with `cases` cases and no failure persistence.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Runs `check` over `cases` deterministic samples of `strategy`.
pub fn run_property<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), String>,
) -> Result<(), String> {
    runner(cases)
        .run(&strategy, |v| check(v).map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- ledger

const ACCOUNTS: u64 = 6;

#[derive(Debug, Clone)]
pub enum LedgerOp {
    Register(u64),
    Transfer { from: u64, to: u64, micros: u64 },
    Mint { to: u64, micros: u64 },
    Lock { payer: u64, payee: u64, micros: u64 },
    Release(usize),
    Refund(usize),
    Advance(u64),
    Resubmit,
}

pub fn ledger_op() -> impl Strategy<Value = LedgerOp> {
    let acct = 0..ACCOUNTS;
    let amt = 0u64..5_000_000;
    prop_oneof![
        2 => acct.clone().prop_map(LedgerOp::Register),
        6 => (acct.clone(), acct.clone(), amt.clone()).prop_map(|(from, to, micros)| LedgerOp::Transfer { from, to, micros }),
        2 => (acct.clone(), amt.clone()).prop_map(|(to, micros)| LedgerOp::Mint { to, micros }),
        3 => (acct.clone(), acct.clone(), amt).prop_map(|(payer, payee, micros)| LedgerOp::Lock { payer, payee, micros }),
        2 => (0usize..8).prop_map(LedgerOp::Release),
        2 => (0usize..8).prop_map(LedgerOp::Refund),
        4 => (0u64..8).prop_map(LedgerOp::Advance),
        1 => Just(LedgerOp::Resubmit),
    ]
}

pub fn ledger_ops() -> impl Strategy<Value = Vec<LedgerOp>> {
    prop::collection::vec(ledger_op(), 1..120)
}

fn gated(payload: &Payload) -> Vec<AccountId> {
    match *payload {
        Payload::CurrencyTransfer { from, to, .. } | Payload::SliceTransfer { from, to, .. } => vec![from, to],
        Payload::EscrowLock { payer, payee, .. } => vec![payer, payee],
        _ => vec![],
    }
}

/// Replays `ops` and checks sealing, waiting time, conservation and the
/// identity gate after every step. Returns the final ledger.
pub fn replay_ledger(ops: &[LedgerOp]) -> Result<Ledger, String> {
    let mut l = Ledger::default();
    let size = l.params().block_size;
    let timeout = l.params().block_timeout_s;
    let mut verified: BTreeSet<AccountId> = BTreeSet::new();
    let mut expected_total = Amount::ZERO;
    let mut escrows: Vec<EscrowId> = Vec::new();
    let mut last_id: Option<TxId> = None;
    for op in ops {
        match *op {
            LedgerOp::Register(a) => {
                l.register_identity(AccountId(a));
                verified.insert(AccountId(a));
            }
            LedgerOp::Transfer { from, to, micros } => {
                let id = l.next_tx_id();
                let payload = Payload::CurrencyTransfer { from: AccountId(from), to: AccountId(to), amount: Amount::from_micros(micros) };
                let ok = verified.contains(&AccountId(from)) && verified.contains(&AccountId(to));
                match l.submit_tx(id, payload) {
                    Ok(_) if ok => last_id = Some(id),
                    Err(LedgerError::UnverifiedIdentity(_)) if !ok => {}
                    other => return Err(format!("transfer gate mismatch: verified={ok} got {other:?}")),
                }
            }
            LedgerOp::Mint { to, micros } => {
                l.mint(AccountId(to), Amount::from_micros(micros));
                expected_total += Amount::from_micros(micros);
            }
            LedgerOp::Lock { payer, payee, micros } => {
                let ok = verified.contains(&AccountId(payer)) && verified.contains(&AccountId(payee));
                let funded = l.balance(AccountId(payer)) >= Amount::from_micros(micros);
                match l.escrow_lock(AccountId(payer), AccountId(payee), Amount::from_micros(micros)) {
                    Ok(e) if ok && funded => escrows.push(e),
                    Err(LedgerError::UnverifiedIdentity(_)) if !ok => {}
                    Err(LedgerError::InsufficientBalance { .. }) if ok && !funded => {}
                    other => return Err(format!("escrow lock mismatch: {other:?}")),
                }
            }
            LedgerOp::Release(i) | LedgerOp::Refund(i) => {
                if let Some(&e) = escrows.get(i) {
                    let was_locked = l.escrow(e).unwrap().status == rwasim::ledger::EscrowStatus::Locked;
                    let r = if matches!(op, LedgerOp::Release(_)) { l.escrow_release(e) } else { l.escrow_refund(e) };
                    match r {
                        Ok(()) if was_locked => {}
                        Err(LedgerError::InvalidEscrowState { .. }) if !was_locked => {}
                        other => return Err(format!("escrow close mismatch: {other:?}")),
                    }
                }
            }
            LedgerOp::Advance(dt) => {
                l.advance_clock(dt);
            }
            LedgerOp::Resubmit => {
                if let Some(id) = last_id {
                    let r = l.submit_tx(id, Payload::MintCurrency { to: AccountId(0), amount: Amount::ZERO });
                    if r != Err(LedgerError::DuplicateTxId(id)) {
                        return Err(format!("duplicate id accepted: {r:?}"));
                    }
                }
            }
        }
        if l.total_currency() != expected_total {
            return Err(format!("conservation broken: {} != {}", l.total_currency(), expected_total));
        }
        let mut ids = BTreeSet::new();
        for (h, b) in l.chain().iter().enumerate() {
            if b.height != h as u64 || b.txs.is_empty() || b.txs.len() > size {
                return Err(format!("bad block shape at height {h}: {} txs", b.txs.len()));
            }
            if h > 0 && b.sealed_at < l.chain()[h - 1].sealed_at {
                return Err("seal times decrease".into());
            }
            for tx in &b.txs {
                if b.sealed_at < tx.submitted_at || b.sealed_at - tx.submitted_at > timeout {
                    return Err(format!("tx {:?} waited {}s", tx.id, b.sealed_at - tx.submitted_at));
                }
                if gated(&tx.payload).iter().any(|a| !verified.contains(a)) {
                    return Err(format!("gate bypassed by {:?}", tx.id));
                }
                ids.insert(tx.id);
            }
        }
        for tx in l.mempool() {
            if l.now() - tx.submitted_at >= timeout {
                return Err(format!("tx {:?} overdue in mempool", tx.id));
            }
            if !ids.insert(tx.id) {
                return Err(format!("tx {:?} both queued and sealed", tx.id));
            }
        }
    }
    Ok(l)
}

pub fn check_ledger(ops: Vec<LedgerOp>) -> Result<(), String> {
    let a = replay_ledger(&ops)?;
    let b = replay_ledger(&ops)?;
    if a.chain() != b.chain() {
        return Err("replay produced a different chain".into());
    }
    Ok(())
}

// ------------------------------------------------------------------- amm

#[derive(Debug, Clone)]
pub struct AmmCase {
    pub n: u32,
    pub virtual_currency: f64,
    pub multiplier: f64,
    /// Positive entries buy, negative entries sell back.
    pub trades: Vec<i32>,
    pub split: u32,
}

pub fn amm_case() -> impl Strategy<Value = AmmCase> {
    (1u32..200, 0.1f64..1000.0, prop_oneof![Just(0.0), 0.0f64..300.0], prop::collection::vec(-20i32..40, 1..30), 0u32..200)
        .prop_map(|(n, virtual_currency, multiplier, trades, split)| AmmCase { n, virtual_currency, multiplier, trades, split })
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CURVE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

pub fn check_amm(c: AmmCase) -> Result<(), String> {
    let params = PoolParams {
        virtual_currency: c.virtual_currency,
        virtual_inventory: c.multiplier * c.n as f64,
        ..PoolParams::new(1.0)
    };
    let mut pool = AmmPool::from_params(AssetId(0), AccountId(0), c.n, params).map_err(|e| e.to_string())?;
    for &t in &c.trades {
        check_pool_shape(&pool)?;
        if t >= 0 {
            let q = (t as u32).min(pool.inventory);
            let mut ledger = Ledger::default();
            let mut reg = TokenRegistry::new();
            let cost = pool.quote_buy(q).map_err(|e| e.to_string())?;
            // two buyers with very different budgets and valuations see one price
            for budget in [cost + 1.0, cost * 1e3 + 1e6] {
                let trial = buy_in_fresh_world(&pool, &mut ledger, &mut reg, q, budget)?;
                if trial != cost {
                    return Err(format!("price depends on buyer: {trial} vs {cost}"));
                }
            }
            let before = pool.real_currency;
            pool = simulate_buy(&pool, q)?;
            if pool.real_currency + 1e-9 < before {
                return Err("real currency fell on a buy".into());
            }
        } else if pool.x() > 0.0 {
            let q = ((-t) as u32).min(pool.slices - pool.inventory);
            if pool.quote_sell(q).is_ok() {
                let before = pool.spot_price();
                pool.sell(q).map_err(|e| e.to_string())?;
                if q > 0 && pool.spot_price() >= before {
                    return Err("selling did not lower the price".into());
                }
            }
        }
        if pool.invariant_error() > CURVE_TOLERANCE {
            return Err(format!("invariant error {}", pool.invariant_error()));
        }
    }
    Ok(())
}

/// Monotonicity, convexity and path independence of the current state.
fn check_pool_shape(pool: &AmmPool) -> Result<(), String> {
    let inv = pool.inventory;
    let quotes: Vec<f64> = (0..=inv).map(|q| pool.quote_buy(q).unwrap()).collect();
    for q in 1..quotes.len() {
        if !(quotes[q] > quotes[q - 1]) {
            return Err(format!("quote not increasing at {q}"));
        }
        if q >= 2 {
            let (d1, d0) = (quotes[q] - quotes[q - 1], quotes[q - 1] - quotes[q - 2]);
            if d1 < d0 - CURVE_TOLERANCE * quotes[q].max(1.0) {
                return Err(format!("quote not convex at {q}"));
            }
        }
    }
    for q1 in [0, inv / 3, inv / 2, inv] {
        let after = simulate_buy(pool, q1)?;
        for q2 in [0, (inv - q1) / 2, inv - q1] {
            let split = quotes[q1 as usize] + after.quote_buy(q2).unwrap();
            let whole = quotes[(q1 + q2) as usize];
            if !rel_close(split, whole) {
                return Err(format!("path dependence: {q1}+{q2}: {split} vs {whole}"));
            }
        }
    }
    Ok(())
}

/// Pool state after buying `q` slices, via the ledger-free sell/buy math.
fn simulate_buy(pool: &AmmPool, q: u32) -> Result<AmmPool, String> {
    let mut ledger = Ledger::default();
    let mut reg = TokenRegistry::new();
    let mut p = pool.clone();
    let buyer = AccountId(1);
    ledger.register_identity(p.seller);
    ledger.register_identity(buyer);
    ledger.mint(buyer, Amount::from_units_ceil(p.quote_buy(q).map_err(|e| e.to_string())? + 1.0));
    attach_registry(&mut p, &mut ledger, &mut reg);
    p.execute_buy(&mut ledger, &mut reg, buyer, q).map_err(|e| e.to_string())?;
    p.asset = pool.asset;
    Ok(p)
}

fn buy_in_fresh_world(
    pool: &AmmPool,
    ledger: &mut Ledger,
    reg: &mut TokenRegistry,
    q: u32,
    budget: f64,
) -> Result<f64, String> {
    *ledger = Ledger::default();
    *reg = TokenRegistry::new();
    let mut p = pool.clone();
    let buyer = AccountId(7);
    ledger.register_identity(p.seller);
    ledger.register_identity(buyer);
    ledger.mint(buyer, Amount::from_units(budget));
    attach_registry(&mut p, ledger, reg);
    let t = p.execute_buy(ledger, reg, buyer, q).map_err(|e| e.to_string())?;
    Ok(t.cost)
}

/// Gives a detached pool a registry whose unsold slices match its inventory.
fn attach_registry(p: &mut AmmPool, ledger: &mut Ledger, reg: &mut TokenRegistry) {
    let asset = reg.register_asset(ledger, AssetDescriptor::standard_license(p.seller, 1.0)).unwrap().id;
    reg.fractionalize(asset, p.slices).unwrap();
    let sink = AccountId(99);
    ledger.register_identity(sink);
    for index in 0..p.slices - p.inventory {
        reg.transfer_slice(ledger, TokenId { asset, index }, p.seller, sink).unwrap();
    }
    p.asset = asset;
}

// -------------------------------------------------------------- channels

#[derive(Debug, Clone)]
pub struct ChannelCase {
    pub tokens: u32,
    pub rate_micros: u64,
    pub hours: u64,
    pub owner_share: f64,
    /// (payment delta as a fraction of the deposit, lessee attested)
    pub updates: Vec<(f64, bool)>,
    /// History indices submitted during the window, with clock gaps.
    pub submissions: Vec<(usize, u64)>,
}

pub fn channel_case() -> impl Strategy<Value = ChannelCase> {
    (
        1u32..20,
        0u64..5_000_000,
        1u64..48,
        0.0f64..=1.0,
        prop::collection::vec((0.0f64..0.2, prop::bool::weighted(0.9)), 0..60),
        prop::collection::vec((0usize..64, 0u64..2), 1..6),
    )
        .prop_map(|(tokens, rate_micros, hours, owner_share, updates, submissions)| ChannelCase {
            tokens,
            rate_micros,
            hours,
            owner_share,
            updates,
            submissions,
        })
}

fn tx_count(l: &Ledger) -> usize {
    l.chain().iter().map(|b| b.txs.len()).sum::<usize>() + l.mempool().len()
}

pub fn check_channel(c: ChannelCase) -> Result<(), String> {
    let (owner, lessee) = (AccountId(0), AccountId(1));
    let mut ledger = Ledger::default();
    ledger.register_identity(owner);
    ledger.register_identity(lessee);
    let terms = ChannelTerms {
        lease_duration_h: c.hours,
        sla: String::new(),
        payment_rate: Amount::from_micros(c.rate_micros),
        owner_share: c.owner_share,
    };
    ledger.mint(lessee, terms.deposit());
    let mut reg = TokenRegistry::new();
    let asset = reg.register_asset(&mut ledger, AssetDescriptor::standard_license(owner, 1.0)).unwrap().id;
    reg.fractionalize(asset, 20).unwrap();
    let mut mgr = ChannelManager::new(&mut ledger);
    let total = ledger.total_currency();
    let tokens: Vec<TokenId> = (0..c.tokens).map(|index| TokenId { asset, index }).collect();
    let txs_before = tx_count(&ledger);
    let id = mgr.open_channel(&mut ledger, &mut reg, owner, lessee, &tokens, terms.clone()).map_err(|e| e.to_string())?;
    let deposit = terms.deposit().micros();
    for &(frac, attested) in &c.updates {
        let delta = (frac * deposit as f64) as i64;
        let att = Attestations { owner: true, lessee: attested };
        let paid = mgr.channel(id).unwrap().latest().lessee_paid.micros();
        match mgr.channel_update(&mut reg, id, &[], delta, att) {
            Ok(_) if attested && paid + delta as u64 <= deposit => {}
            Err(ChannelError::MissingAttestation) if !attested => {}
            Err(ChannelError::PaymentExceedsDeposit(_)) if attested && paid + delta as u64 > deposit => {}
            other => return Err(format!("update outcome {other:?}")),
        }
    }
    let history = mgr.channel(id).unwrap().history.clone();
    let mut best: Option<u64> = None;
    for &(idx, gap) in &c.submissions {
        let state = &history[idx % history.len()];
        let r = mgr.submit_close(&ledger, id, state);
        match (r, best) {
            (Ok(()), None) => best = Some(state.seq),
            (Ok(()), Some(b)) if state.seq > b => best = Some(state.seq),
            (Err(ChannelError::StaleStateAfterFresherSubmission { .. }), Some(b)) if state.seq <= b => {}
            (r, b) => return Err(format!("submission of seq {} with best {b:?}: {r:?}", state.seq)),
        }
        ledger.advance_clock(gap);
    }
    ledger.advance_clock(mgr.dispute_window_s);
    let s = mgr.finalize(&mut ledger, &mut reg, id).map_err(|e| e.to_string())?;
    let max_seq = best.unwrap();
    if s.final_seq != max_seq {
        return Err(format!("settled seq {} but freshest was {max_seq}", s.final_seq));
    }
    let paid = history[max_seq as usize].lessee_paid;
    if s.owner_payout + s.protocol_payout != paid {
        return Err("payouts do not add up to payments".into());
    }
    if ledger.total_currency() != total {
        return Err("currency not conserved".into());
    }
    if ledger.balance(mgr.channel(id).unwrap().custody) != Amount::ZERO {
        return Err("custody not emptied".into());
    }
    if s.tokens_returned != tokens || tokens.iter().any(|t| reg.is_locked(*t) || reg.holder(*t) != Some(owner)) {
        return Err("tokens not returned to owner".into());
    }
    let on_chain = tx_count(&ledger) - txs_before;
    if on_chain != 2 {
        return Err(format!("{on_chain} ledger txs for one channel"));
    }
    Ok(())
}

// ------------------------------------------------------------ mechanisms

#[derive(Debug, Clone)]
pub struct Book {
    pub bids: Vec<Bid>,
    pub asks: Vec<Ask>,
}

/// Up to five agents per side, prices on a half-unit grid in [0, 6].
pub fn small_book() -> impl Strategy<Value = Book> {
    let price = (0u32..=12).prop_map(|p| p as f64 * 0.5);
    let bids = prop::collection::vec((price.clone(), 1u32..=3), 0..=5);
    let asks = prop::collection::vec((price, 1u32..=3), 0..=5);
    (bids, asks).prop_map(|(b, a)| Book {
        bids: b.into_iter().enumerate().map(|(i, (price, quantity))| Bid { buyer: AccountId(i as u64), price, quantity }).collect(),
        asks: a.into_iter().enumerate().map(|(i, (price, quantity))| Ask { seller: AccountId(100 + i as u64), price, quantity }).collect(),
    })
}

/// Exhaustive scan over [0, 6.5] in steps of `h`: among prices with maximal
/// traded volume `min(D, S)`, the lowest one where demand no longer exceeds
/// supply, or the highest one if demand always exceeds supply there.
pub fn mpra_scan_price(book: &Book, h: f64) -> Option<f64> {
    let mut bid_p: Vec<(f64, u64)> = book.bids.iter().map(|b| (b.price, b.quantity as u64)).collect();
    let mut ask_p: Vec<(f64, u64)> = book.asks.iter().map(|a| (a.price, a.quantity as u64)).collect();
    bid_p.sort_by(|a, b| a.0.total_cmp(&b.0));
    ask_p.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut demand: u64 = bid_p.iter().map(|b| b.1).sum();
    let mut supply: u64 = 0;
    let (mut bi, mut ai) = (0, 0);
    // p = i / per_unit keeps grid prices exact
    let per_unit = (1.0 / h).round();
    let steps = (6.5 * per_unit) as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let p = i as f64 / per_unit;
        // demand counts bids >= p, supply counts asks <= p
        while bi < bid_p.len() && bid_p[bi].0 < p {
            demand -= bid_p[bi].1;
            bi += 1;
        }
        while ai < ask_p.len() && ask_p[ai].0 <= p {
            supply += ask_p[ai].1;
            ai += 1;
        }
        samples.push((p, demand, supply));
    }
    let best = samples.iter().map(|&(_, d, s)| d.min(s)).max()?;
    if best == 0 {
        return None;
    }
    let top: Vec<&(f64, u64, u64)> = samples.iter().filter(|&&(_, d, s)| d.min(s) == best).collect();
    top.iter().find(|&&&(_, d, s)| d <= s).or(top.last()).map(|t| t.0)
}

pub fn check_mpra(book: Book) -> Result<(), String> {
    let r = baselines::mpra_clear(&book.bids, &book.asks);
    let oracle = mpra_scan_price(&book, 1e-5);
    match (r.clearing_price, oracle) {
        (None, None) => Ok(()),
        (Some(p), Some(o)) if (p - o).abs() <= 1e-4 => {
            let vol = r.volume() as u64;
            let scan_vol = baselines::demand_at(&book.bids, o).min(baselines::supply_at(&book.asks, o));
            if vol != scan_vol {
                return Err(format!("volume {vol} vs scan {scan_vol}"));
            }
            Ok(())
        }
        other => Err(format!("price vs scan: {other:?}")),
    }
}

/// Independent TRA allocation: per seller, fill buyers up to a common water
/// level, then hand leftovers to the lowest buyer ids. Returns units per bid.
pub fn tra_oracle_units(bids: &[Bid], asks: &[Ask]) -> Vec<u32> {
    let mut rem: Vec<u32> = bids.iter().map(|b| b.quantity).collect();
    let mut got = vec![0u32; bids.len()];
    let mut sellers: Vec<&Ask> = asks.iter().collect();
    sellers.sort_by(|a, b| a.price.total_cmp(&b.price).then(a.seller.cmp(&b.seller)));
    for s in sellers {
        let elig: Vec<usize> = (0..bids.len()).filter(|&i| bids[i].price >= s.price && rem[i] > 0).collect();
        let mut level = 0;
        while elig.iter().map(|&i| rem[i].min(level + 1)).sum::<u32>() <= s.quantity
            && elig.iter().any(|&i| rem[i] > level)
        {
            level += 1;
        }
        let mut left = s.quantity - elig.iter().map(|&i| rem[i].min(level)).sum::<u32>();
        let mut by_id = elig.clone();
        by_id.sort_by_key(|&i| bids[i].buyer);
        for &i in &elig {
            let g = rem[i].min(level);
            got[i] += g;
            rem[i] -= g;
        }
        for i in by_id {
            if left > 0 && rem[i] > 0 {
                got[i] += 1;
                rem[i] -= 1;
                left -= 1;
            }
        }
    }
    got
}

/// Brute-force critical values: scan reports upward in steps of 0.01.
pub fn tra_oracle_critical(bids: &[Bid], asks: &[Ask], b: usize) -> Vec<f64> {
    let won = tra_oracle_units(bids, asks)[b];
    let mut probe = bids.to_vec();
    let mut crit = Vec::new();
    let steps = (bids[b].price / 0.01).round() as usize;
    for k in 1..=won {
        for i in 0..=steps {
            probe[b].price = i as f64 / 100.0;
            if tra_oracle_units(&probe, asks)[b] >= k {
                crit.push(probe[b].price);
                break;
            }
        }
    }
    crit
}

fn tra_utility(bids: &[Bid], asks: &[Ask], b: usize, value: f64) -> f64 {
    baselines::tra_clear(bids, asks)
        .matches
        .iter()
        .filter(|m| m.buyer == bids[b].buyer)
        .map(|m| m.quantity as f64 * (value - m.unit_price))
        .sum()
}

pub fn check_tra(book: Book) -> Result<(), String> {
    let (bids, asks) = (&book.bids, &book.asks);
    let r = baselines::tra_clear(bids, asks);
    let oracle_units = tra_oracle_units(bids, asks);
    for (b, bid) in bids.iter().enumerate() {
        let mine: Vec<_> = r.matches.iter().filter(|m| m.buyer == bid.buyer).collect();
        let units: u32 = mine.iter().map(|m| m.quantity).sum();
        if units != oracle_units[b] {
            return Err(format!("buyer {b}: {units} units, oracle {}", oracle_units[b]));
        }
        let mut paid: Vec<f64> = mine.iter().flat_map(|m| std::iter::repeat(m.unit_price).take(m.quantity as usize)).collect();
        paid.sort_by(f64::total_cmp);
        let crit = tra_oracle_critical(bids, asks, b);
        if paid.len() != crit.len() || paid.iter().zip(&crit).any(|(p, c)| (p - c).abs() > 1e-4) {
            return Err(format!("buyer {b}: paid {paid:?}, critical {crit:?}"));
        }
        for m in &mine {
            let ask = asks.iter().find(|a| a.seller == m.seller).unwrap();
            if m.unit_price > bid.price + 1e-12 || m.unit_price < ask.price - 1e-12 {
                return Err(format!("buyer {b}: price {} outside [{}, {}]", m.unit_price, ask.price, bid.price));
            }
        }
        // misreport grid
        let truthful = tra_utility(bids, asks, b, bid.price);
        let mut lie = bids.clone();
        for step in 0..=28 {
            lie[b].price = step as f64 / 4.0;
            let u = tra_utility(&lie, asks, b, bid.price);
            if u > truthful + 1e-9 {
                return Err(format!("buyer {b} gains by reporting {} ({u} > {truthful})", lie[b].price));
            }
        }
    }
    Ok(())
}
