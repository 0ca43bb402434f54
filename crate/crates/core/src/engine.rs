//! Agent-based market simulation.
//!
//! A run populates sellers (one registered, fractionalized license each) and
//! buyers (demand, valuation, budget), then ticks the ledger clock one second
//! at a time under one scheme:
//!
//! - `rwa`: every active buyer, in a freshly shuffled order, buys
//!   `order_slices` slices from the pool with the lowest spot price. Payment
//!   is escrowed and released to the seller when the trade record is sealed.
//! - `mpra`, `tra`, `cpa`: buyers bid for whole licenses and the book clears
//!   every `round_interval` ticks. MPRA and TRA settle off-ledger after
//!   delivery, so defaulting buyers can walk away; CPA locks payment in
//!   escrow before delivery.
//!
//! A run stops at `ticks`, when supply or demand is exhausted, or after
//! `idle_stop_ticks` ticks without a trade.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{self, AttackConfig, AttackKind, PaymentDecision};
use crate::amm::{AmmError, AmmPool, PoolParams};
use crate::baselines::{self, Ask, Bid, ClearingResult, CpaState};
use crate::ledger::{AccountId, Amount, EscrowId, Ledger, LedgerError, LedgerParams, TxId};
use crate::rng::{self, Stream};
use crate::tokenization::{AssetDescriptor, AssetId, TokenError, TokenRegistry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rwa,
    Mpra,
    Tra,
    Cpa,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Rwa, Scheme::Mpra, Scheme::Tra, Scheme::Cpa];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Rwa => "rwa",
            Scheme::Mpra => "mpra",
            Scheme::Tra => "tra",
            Scheme::Cpa => "cpa",
        }
    }

    /// Payment is locked on the ledger before delivery.
    pub fn escrowed(self) -> bool {
        matches!(self, Scheme::Rwa | Scheme::Cpa)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scheme::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub n_sellers: usize,
    pub n_buyers: usize,
    pub buyer_demand_slices: u32,
    pub slices_per_asset: u32,
    pub ticks: u64,
    /// Buyer valuation per slice, uniform on [min, max).
    pub valuation_min: f64,
    pub valuation_max: f64,
    /// Seller cost per slice, uniform on [min, max).
    pub cost_min: f64,
    pub cost_max: f64,
    /// One draw per equal-width stratum instead of i.i.d. draws.
    pub stratified: bool,
    /// Slices per RWA order.
    pub order_slices: u32,
    pub round_interval: u64,
    pub idle_stop_ticks: u64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            n_sellers: 100,
            n_buyers: 200,
            buyer_demand_slices: 50,
            slices_per_asset: 100,
            ticks: 600,
            valuation_min: 1.02,
            valuation_max: 1.82,
            cost_min: 0.5,
            cost_max: 1.0,
            stratified: true,
            order_slices: 1,
            round_interval: 5,
            idle_stop_ticks: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmmConfig {
    /// Virtual slices per real slice in every primary pool.
    pub virtual_inventory_multiplier: f64,
    pub fee: f64,
    pub depletion_multiplier: f64,
}

impl Default for AmmConfig {
    fn default() -> Self {
        AmmConfig { virtual_inventory_multiplier: 200.0, fee: 0.0, depletion_multiplier: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub cpa_padding: usize,
    /// CPA income per round, as a multiple of each buyer's initial budget.
    pub cpa_income_factor: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { cpa_padding: 5, cpa_income_factor: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub market: MarketConfig,
    pub ledger: LedgerParams,
    pub amm: AmmConfig,
    pub baselines: BaselineConfig,
    pub attack: AttackConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let m = &self.market;
        let bad = |msg: &str| Err(EngineError::ConfigInvalid(msg.to_string()));
        if m.n_sellers < 1 || m.n_buyers < 1 || m.buyer_demand_slices < 1 || m.slices_per_asset < 1 {
            return bad("agent, demand and slice counts must be at least 1");
        }
        if m.order_slices < 1 || m.round_interval < 1 || m.idle_stop_ticks < 1 {
            return bad("order_slices, round_interval and idle_stop_ticks must be at least 1");
        }
        if self.ledger.block_size < 1 || self.ledger.block_timeout_s < 1 {
            return bad("block_size and block_timeout_s must be at least 1");
        }
        if m.ticks < self.ledger.block_timeout_s {
            return bad("ticks must cover at least one block timeout");
        }
        if !(m.valuation_min >= 0.0 && m.valuation_min <= m.valuation_max) {
            return bad("valuation range must satisfy 0 <= valuation_min <= valuation_max");
        }
        if !(m.cost_min >= 0.0 && m.cost_min <= m.cost_max) {
            return bad("cost range must satisfy 0 <= cost_min <= cost_max");
        }
        if !(m.cost_min > 0.0) {
            return bad("cost_min must be positive to seed pools");
        }
        if !(self.amm.virtual_inventory_multiplier >= 0.0 && self.amm.fee >= 0.0 && self.amm.depletion_multiplier > 0.0) {
            return bad("amm parameters out of range");
        }
        if !(self.baselines.cpa_income_factor >= 0.0) {
            return bad("cpa_income_factor must be non-negative");
        }
        self.attack.validate().map_err(|e| EngineError::ConfigInvalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),
    #[error("simulation fault: {0}")]
    Internal(String),
}

impl From<LedgerError> for EngineError {
    fn from(e: LedgerError) -> Self {
        EngineError::Internal(e.to_string())
    }
}

impl From<TokenError> for EngineError {
    fn from(e: TokenError) -> Self {
        EngineError::Internal(e.to_string())
    }
}

impl From<AmmError> for EngineError {
    fn from(e: AmmError) -> Self {
        EngineError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Buyer,
    Seller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AccountId,
    pub side: Side,
    /// Valuation (buyers) or cost (sellers) per slice.
    pub unit_value: f64,
    /// Buyers only.
    pub budget: f64,
    /// Slices wanted (buyers) or assets owned (sellers).
    pub demand: u32,
    pub malicious: bool,
}

/// Everything a run starts from.
#[derive(Debug, Clone)]
pub struct World {
    pub sellers: Vec<Agent>,
    pub buyers: Vec<Agent>,
    pub assets: Vec<AssetId>,
    pub ledger: Ledger,
    pub registry: TokenRegistry,
}

fn draw<R: rand::Rng>(rng: &mut R, n: usize, lo: f64, hi: f64, stratified: bool) -> Vec<f64> {
    if stratified {
        rng::stratified_uniform(rng, n, lo, hi)
    } else {
        (0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()
    }
}

/// Sellers get account ids `0..n_sellers`, buyers the ids after them.
pub fn populate(cfg: &SimConfig, seed: u64) -> Result<World, EngineError> {
    cfg.validate()?;
    let m = &cfg.market;
    let mut pop = rng::stream(seed, Stream::Population);
    let costs = draw(&mut pop, m.n_sellers, m.cost_min, m.cost_max, m.stratified);
    let values = draw(&mut pop, m.n_buyers, m.valuation_min, m.valuation_max, m.stratified);

    let attack = &cfg.attack;
    let mut roles = rng::stream(seed, Stream::Roles);
    let (mut bad_sellers, mut bad_buyers) = (vec![false; m.n_sellers], vec![false; m.n_buyers]);
    if attack.kind != AttackKind::None {
        let ratio = attack.byzantine_ratio;
        let assign = |n, rng: &mut ChaCha8Rng| adversary::assign_roles(n, ratio, rng);
        let flags = if attack.kind.targets_sellers() { &mut bad_sellers } else { &mut bad_buyers };
        *flags = assign(flags.len(), &mut roles).map_err(|e| EngineError::ConfigInvalid(e.to_string()))?;
    }

    let mut ledger = Ledger::new(cfg.ledger);
    let mut registry = TokenRegistry::new();
    let mut sellers = Vec::with_capacity(m.n_sellers);
    let mut assets = Vec::with_capacity(m.n_sellers);
    for (i, &cost) in costs.iter().enumerate() {
        let id = AccountId(i as u64);
        ledger.register_identity(id);
        let value = cost * m.slices_per_asset as f64;
        let asset = registry.register_asset(&mut ledger, AssetDescriptor::standard_license(id, value))?;
        registry.fractionalize(asset.id, m.slices_per_asset)?;
        assets.push(asset.id);
        sellers.push(Agent { id, side: Side::Seller, unit_value: cost, budget: 0.0, demand: 1, malicious: bad_sellers[i] });
    }
    let mut buyers = Vec::with_capacity(m.n_buyers);
    for (j, &value) in values.iter().enumerate() {
        let id = AccountId((m.n_sellers + j) as u64);
        ledger.register_identity(id);
        let budget = m.buyer_demand_slices as f64 * value;
        ledger.mint(id, Amount::from_units(budget));
        buyers.push(Agent {
            id,
            side: Side::Buyer,
            unit_value: value,
            budget,
            demand: m.buyer_demand_slices,
            malicious: bad_buyers[j],
        });
    }
    Ok(World { sellers, buyers, assets, ledger, registry })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scheme: Scheme,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub attack_kind: AttackKind,
    pub seed: u64,
    pub utilization: f64,
    /// Executed trades (orders for RWA, licenses for the baselines),
    /// defaulted ones included.
    pub trades: u64,
    pub defaults: u64,
    /// Unsold slices of partially sold assets.
    pub leftover: u64,
    pub slices_sold: u64,
    /// Mean price per slice actually paid.
    pub mean_price: f64,
    pub ticks_run: u64,
}

/// Final state of a run alongside its metrics.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub world: World,
}

pub fn run(cfg: &SimConfig, scheme: Scheme, seed: u64) -> Result<MetricsRecord, EngineError> {
    run_detailed(cfg, scheme, seed).map(|o| o.metrics)
}

pub fn run_detailed(cfg: &SimConfig, scheme: Scheme, seed: u64) -> Result<RunOutput, EngineError> {
    let world = populate(cfg, seed)?;
    let mut sim = Sim {
        cfg,
        world,
        pending: BTreeMap::new(),
        cursor: 0,
        stats: Stats::default(),
    };
    match scheme {
        Scheme::Rwa => sim.run_rwa(seed)?,
        _ => sim.run_book(scheme, seed)?,
    }
    sim.flush()?;
    let metrics = sim.metrics(scheme, seed);
    Ok(RunOutput { metrics, world: sim.world })
}

#[derive(Debug, Default)]
struct Stats {
    trades: u64,
    defaults: u64,
    licenses_sold: u64,
    slices_sold: u64,
    paid: f64,
    ticks_run: u64,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    world: World,
    /// Escrows waiting for their trigger transaction to be sealed.
    pending: BTreeMap<TxId, EscrowId>,
    cursor: usize,
    stats: Stats,
}

impl Sim<'_> {
    fn release_sealed(&mut self) -> Result<(), EngineError> {
        let ledger = &mut self.world.ledger;
        while self.cursor < ledger.chain().len() {
            let ids: Vec<TxId> = ledger.chain()[self.cursor].txs.iter().map(|t| t.id).collect();
            self.cursor += 1;
            for id in ids {
                if let Some(escrow) = self.pending.remove(&id) {
                    ledger.escrow_release(escrow)?;
                }
            }
        }
        Ok(())
    }

    fn tick_clock(&mut self) -> Result<(), EngineError> {
        self.world.ledger.advance_clock(1);
        self.stats.ticks_run += 1;
        self.release_sealed()
    }

    /// Seals everything still queued and settles open escrows.
    fn flush(&mut self) -> Result<(), EngineError> {
        let timeout = self.cfg.ledger.block_timeout_s;
        self.release_sealed()?;
        while self.world.ledger.mempool().len() > 0 || !self.pending.is_empty() {
            self.world.ledger.advance_clock(timeout);
            self.release_sealed()?;
        }
        Ok(())
    }

    fn run_rwa(&mut self, seed: u64) -> Result<(), EngineError> {
        let m = &self.cfg.market;
        let a = &self.cfg.amm;
        let mut pools = Vec::with_capacity(self.world.assets.len());
        for (asset, seller) in self.world.assets.iter().zip(&self.world.sellers) {
            let params = PoolParams {
                fee: a.fee,
                depletion_multiplier: a.depletion_multiplier,
                ..PoolParams::calibrated(seller.unit_value, m.slices_per_asset, a.virtual_inventory_multiplier)
            };
            pools.push(AmmPool::create(&self.world.registry, *asset, params)?);
        }
        let n = self.world.buyers.len();
        let mut remaining: Vec<u32> = self.world.buyers.iter().map(|b| b.demand).collect();
        let mut active = vec![true; n];
        let mut order: Vec<usize> = (0..n).collect();
        let mut ordering = rng::stream(seed, Stream::Ordering);
        let mut idle = 0;
        for _ in 0..m.ticks {
            order.shuffle(&mut ordering);
            let mut traded = false;
            for &b in &order {
                if !active[b] {
                    continue;
                }
                let Some(p) = cheapest_pool(&pools) else { break };
                let pool = &mut pools[p];
                let q = m.order_slices.min(remaining[b]).min(pool.inventory);
                let cost = pool.quote_buy(q)?;
                let buyer = &self.world.buyers[b];
                if cost / q as f64 > buyer.unit_value {
                    active[b] = false;
                    continue;
                }
                match pool.execute_buy(&mut self.world.ledger, &mut self.world.registry, buyer.id, q) {
                    Ok(trade) => {
                        self.pending.insert(trade.tx, trade.escrow);
                        self.stats.trades += 1;
                        self.stats.slices_sold += q as u64;
                        self.stats.paid += trade.paid.as_units();
                        remaining[b] -= q;
                        active[b] = remaining[b] > 0;
                        traded = true;
                    }
                    Err(AmmError::InsufficientBudget { .. }) => active[b] = false,
                    Err(e) => return Err(e.into()),
                }
            }
            self.tick_clock()?;
            idle = if traded { 0 } else { idle + 1 };
            let exhausted = pools.iter().all(AmmPool::is_depleted) || !active.iter().any(|&x| x);
            if exhausted || idle >= m.idle_stop_ticks {
                break;
            }
        }
        Ok(())
    }

    fn run_book(&mut self, scheme: Scheme, seed: u64) -> Result<(), EngineError> {
        let m = &self.cfg.market;
        let attack = &self.cfg.attack;
        let license = m.slices_per_asset as f64;
        let mut buyer_in = vec![true; self.world.buyers.len()];
        let mut seller_in = vec![true; self.world.sellers.len()];
        let mut defaults_rng = rng::stream(seed, Stream::Defaults);
        let mut cpa = CpaState::new(self.cfg.baselines.cpa_padding);
        let buyer_index: BTreeMap<AccountId, usize> =
            self.world.buyers.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        let seller_index: BTreeMap<AccountId, usize> =
            self.world.sellers.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
        let mut idle = 0;
        for tick in 0..m.ticks {
            let mut traded = false;
            if (tick + 1) % m.round_interval == 0 {
                let asks: Vec<Ask> = self
                    .world
                    .sellers
                    .iter()
                    .zip(&seller_in)
                    .filter(|(_, &live)| live)
                    .filter_map(|(s, _)| {
                        let ask = Ask { seller: s.id, price: s.unit_value * license, quantity: 1 };
                        adversary::distort_ask(ask, s.malicious, attack)
                    })
                    .collect();
                let mut bids = Vec::new();
                for (b, _) in self.world.buyers.iter().zip(&buyer_in).filter(|(_, &live)| live) {
                    // one license, valued at the whole budget
                    let value = b.budget;
                    let bid = if scheme == Scheme::Cpa {
                        let funds = self.world.ledger.balance(b.id).as_units();
                        cpa.budgets.insert(b.id, funds);
                        let committed = Bid { buyer: b.id, price: funds, quantity: 1 };
                        let committed = adversary::distort_bid(committed, b.malicious, attack);
                        Bid { price: value.min(committed.price), ..committed }
                    } else {
                        adversary::distort_bid(Bid { buyer: b.id, price: value, quantity: 1 }, b.malicious, attack)
                    };
                    bids.push(bid);
                }
                let result: ClearingResult = match scheme {
                    Scheme::Mpra => baselines::mpra_clear(&bids, &asks),
                    Scheme::Tra => baselines::tra_clear(&bids, &asks),
                    Scheme::Cpa => baselines::cpa_round(&mut cpa, &bids, &asks),
                    Scheme::Rwa => unreachable!("rwa has no order book"),
                };
                for mt in &result.matches {
                    let (bi, si) = (buyer_index[&mt.buyer], seller_index[&mt.seller]);
                    debug_assert_eq!(mt.quantity, 1);
                    buyer_in[bi] = false;
                    seller_in[si] = false;
                    self.stats.trades += 1;
                    traded = true;
                    if scheme == Scheme::Cpa {
                        let amount = Amount::from_units_floor(mt.unit_price);
                        let escrow = self.world.ledger.escrow_lock(mt.buyer, mt.seller, amount)?;
                        let lock_tx = self.world.ledger.escrow(escrow).expect("just locked").lock_tx;
                        self.pending.insert(lock_tx, escrow);
                    } else {
                        let malicious = self.world.buyers[bi].malicious;
                        if adversary::default_decision(malicious, &mut defaults_rng, attack) == PaymentDecision::Refuse {
                            self.stats.defaults += 1;
                            continue;
                        }
                    }
                    self.stats.licenses_sold += 1;
                    self.stats.slices_sold += m.slices_per_asset as u64;
                    self.stats.paid += mt.unit_price;
                }
                if scheme == Scheme::Cpa {
                    let factor = self.cfg.baselines.cpa_income_factor;
                    for (b, _) in self.world.buyers.iter().zip(&buyer_in).filter(|(_, &live)| live) {
                        self.world.ledger.mint(b.id, Amount::from_units(factor * b.budget));
                    }
                }
            }
            self.tick_clock()?;
            idle = if traded { 0 } else { idle + 1 };
            let exhausted = !seller_in.iter().any(|&x| x) || !buyer_in.iter().any(|&x| x);
            if exhausted || idle >= m.idle_stop_ticks {
                break;
            }
        }
        Ok(())
    }

    fn metrics(&self, scheme: Scheme, seed: u64) -> MetricsRecord {
        let n_assets = self.world.assets.len();
        let n = self.cfg.market.slices_per_asset as usize;
        let (sold, leftover) = if scheme == Scheme::Rwa {
            let reg = &self.world.registry;
            let full = self.world.assets.iter().filter(|&&a| reg.is_fully_sold(a)).count();
            let left: usize = self
                .world
                .assets
                .iter()
                .map(|&a| reg.sold_count(a))
                .filter(|&s| s > 0 && s < n)
                .map(|s| n - s)
                .sum();
            (full as u64, left as u64)
        } else {
            (self.stats.licenses_sold, 0)
        };
        let mean_price =
            if self.stats.slices_sold > 0 { self.stats.paid / self.stats.slices_sold as f64 } else { 0.0 };
        MetricsRecord {
            scheme,
            sweep_param: "none".to_string(),
            sweep_value: 0.0,
            attack_kind: self.cfg.attack.kind,
            seed,
            utilization: sold as f64 / n_assets as f64,
            trades: self.stats.trades,
            defaults: self.stats.defaults,
            leftover,
            slices_sold: self.stats.slices_sold,
            mean_price,
            ticks_run: self.stats.ticks_run,
        }
    }
}

/// Lowest spot price among non-empty pools; ties go to the lower index.
fn cheapest_pool(pools: &[AmmPool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in pools.iter().enumerate() {
        if p.is_depleted() {
            continue;
        }
        let price = p.spot_price();
        if best.map_or(true, |(_, b)| price < b) {
            best = Some((i, price));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    NBuyers,
    ByzantineRatio,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::NBuyers => "n_buyers",
            SweepParam::ByzantineRatio => "byzantine_ratio",
        }
    }

    fn apply(self, cfg: &mut SimConfig, value: f64) {
        match self {
            SweepParam::NBuyers => cfg.market.n_buyers = value.round() as usize,
            SweepParam::ByzantineRatio => cfg.attack.byzantine_ratio = value,
        }
    }
}

impl FromStr for SweepParam {
    type Err = EngineError;
    fn from_str(s: &str) -> Result<Self, EngineError> {
        match s {
            "n_buyers" => Ok(SweepParam::NBuyers),
            "byzantine_ratio" => Ok(SweepParam::ByzantineRatio),
            other => Err(EngineError::UnknownParameter(other.to_string())),
        }
    }
}

/// Runs every (scheme, value, seed) cell in parallel. Records come back
/// ordered by scheme (as given), value (as given), then seed.
pub fn sweep(
    base: &SimConfig,
    schemes: &[Scheme],
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<MetricsRecord>, EngineError> {
    let mut cells = Vec::new();
    for &scheme in schemes {
        for &value in values {
            let mut cfg = base.clone();
            param.apply(&mut cfg, value);
            cfg.validate()?;
            for &seed in seeds {
                cells.push((scheme, value, cfg.clone(), seed));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(scheme, value, cfg, seed)| {
            let mut r = run(&cfg, scheme, seed)?;
            r.sweep_param = param.as_str().to_string();
            r.sweep_value = value;
            Ok(r)
        })
        .collect()
}

/// Mean and sample standard deviation over the seeds of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scheme: Scheme,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub attack_kind: AttackKind,
    pub utilization_mean: f64,
    pub utilization_std: f64,
    pub n_seeds: usize,
    pub leftover_mean: f64,
    pub defaults_mean: f64,
}

/// Groups consecutive records sharing scheme and sweep value.
pub fn aggregate(records: &[MetricsRecord]) -> Vec<SweepPoint> {
    let mut points = Vec::new();
    for group in records.chunk_by(|a, b| a.scheme == b.scheme && a.sweep_value == b.sweep_value) {
        let n = group.len() as f64;
        let mean = |f: &dyn Fn(&MetricsRecord) -> f64| group.iter().map(f).sum::<f64>() / n;
        let u_mean = mean(&|r| r.utilization);
        let u_std = if group.len() > 1 {
            (group.iter().map(|r| (r.utilization - u_mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let first = &group[0];
        points.push(SweepPoint {
            scheme: first.scheme,
            sweep_param: first.sweep_param.clone(),
            sweep_value: first.sweep_value,
            attack_kind: first.attack_kind,
            utilization_mean: u_mean,
            utilization_std: u_std,
            n_seeds: group.len(),
            leftover_mean: mean(&|r| r.leftover as f64),
            defaults_mean: mean(&|r| r.defaults as f64),
        });
    }
    points
}
