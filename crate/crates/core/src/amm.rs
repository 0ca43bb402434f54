//! Constant-product bonding curves with virtual reserves.
//!
//! Each fractionalized license gets a primary pool whose curve is
//!
//! ```text
//! (inventory + virtual_inventory) * (virtual_currency + real_currency) = k
//! ```
//!
//! Prices depend on pool state only, never on a buyer's declared valuation.
//! With `virtual_inventory = 0` the curve has a singularity at zero
//! inventory, so the final slice is priced by the depletion rule: a
//! configurable multiple of the marginal cost of the penultimate slice.
//! A positive `virtual_inventory` keeps the curve finite down to zero and
//! flattens it; [`PoolParams::calibrated`] uses that to start the pool at the
//! seller's per-slice cost.
//!
//! [`SecondaryPool`] is a plain two-sided swap pool for resale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AccountId, Amount, EscrowId, Ledger, LedgerError, Payload, TxId};
use crate::tokenization::{AssetId, TokenError, TokenId, TokenRegistry};

/// Relative tolerance for the curve invariant.
pub const CURVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    pub virtual_currency: f64,
    pub virtual_inventory: f64,
    pub fee: f64,
    pub depletion_multiplier: f64,
}

impl PoolParams {
    pub fn new(virtual_currency: f64) -> Self {
        PoolParams { virtual_currency, virtual_inventory: 0.0, fee: 0.0, depletion_multiplier: 2.0 }
    }

    /// Parameters whose initial spot price equals `cost_per_slice`, with
    /// `multiplier * n` virtual slices backing `n` real ones.
    pub fn calibrated(cost_per_slice: f64, n: u32, multiplier: f64) -> Self {
        let n = n as f64;
        PoolParams {
            virtual_currency: cost_per_slice * n * (1.0 + multiplier),
            virtual_inventory: multiplier * n,
            ..PoolParams::new(1.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AmmError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("owner does not hold all slices of {0:?}")]
    NotAllSlicesHeld(AssetId),
    #[error("virtual reserve must be positive")]
    NonPositiveVirtualReserve,
    #[error("requested {requested} slices, pool holds {available}")]
    InsufficientInventory { requested: u32, available: u32 },
    #[error("buyer {buyer} has {available}, trade costs {needed}")]
    InsufficientBudget { buyer: AccountId, needed: Amount, available: Amount },
    #[error("pool reserve cannot cover the sale")]
    InsufficientReserve,
    #[error("pool has an empty reserve")]
    EmptyPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub asset: AssetId,
    pub buyer: AccountId,
    pub seller: AccountId,
    pub slices: u32,
    /// Curve cost plus fee, before rounding to micro-units.
    pub cost: f64,
    pub paid: Amount,
    pub escrow: EscrowId,
    pub tx: TxId,
}

/// Primary market for one license.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmmPool {
    pub asset: AssetId,
    pub seller: AccountId,
    pub slices: u32,
    pub inventory: u32,
    pub real_currency: f64,
    pub params: PoolParams,
    pub k: f64,
}

impl AmmPool {
    /// Opens a pool over a fractionalized asset whose slices all still sit
    /// with the owner. The slices stay with the owner until bought.
    pub fn create(registry: &TokenRegistry, asset: AssetId, params: PoolParams) -> Result<Self, AmmError> {
        let owner = registry.asset(asset).ok_or(TokenError::UnknownAsset(asset))?.owner;
        let slices = registry.slices(asset);
        if slices.is_empty() || slices.iter().any(|s| s.holder != owner || registry.is_locked(s.id)) {
            return Err(AmmError::NotAllSlicesHeld(asset));
        }
        Self::from_params(asset, owner, slices.len() as u32, params)
    }

    /// Pool math without a registry.
    pub fn from_params(asset: AssetId, seller: AccountId, slices: u32, params: PoolParams) -> Result<Self, AmmError> {
        if !(params.virtual_currency > 0.0) || params.virtual_inventory < 0.0 {
            return Err(AmmError::NonPositiveVirtualReserve);
        }
        let k = (slices as f64 + params.virtual_inventory) * params.virtual_currency;
        Ok(AmmPool { asset, seller, slices, inventory: slices, real_currency: 0.0, params, k })
    }

    /// Curve x coordinate.
    pub fn x(&self) -> f64 {
        self.inventory as f64 + self.params.virtual_inventory
    }

    /// Curve y coordinate.
    pub fn y(&self) -> f64 {
        self.params.virtual_currency + self.real_currency
    }

    /// Marginal price `y / x`; infinite once a pure curve is depleted.
    pub fn spot_price(&self) -> f64 {
        self.y() / self.x()
    }

    pub fn is_depleted(&self) -> bool {
        self.inventory == 0
    }

    /// Relative deviation of `x * y` from `k`; zero for a depleted pure curve.
    pub fn invariant_error(&self) -> f64 {
        if self.x() == 0.0 {
            return 0.0;
        }
        (self.x() * self.y() - self.k).abs() / self.k
    }

    /// Currency needed for `q` slices, fee excluded.
    fn curve_cost(&self, q: u32) -> Result<f64, AmmError> {
        if q > self.inventory {
            return Err(AmmError::InsufficientInventory { requested: q, available: self.inventory });
        }
        if q == 0 {
            return Ok(0.0);
        }
        let x_after = self.x() - q as f64;
        if x_after > 0.0 {
            return Ok(self.k / x_after - self.y());
        }
        // pure curve emptied: pay up to x = 1, then the last slice
        let to_one = self.k - self.y();
        let penultimate = self.k - self.k / 2.0;
        Ok(to_one + self.params.depletion_multiplier * penultimate)
    }

    pub fn quote_buy(&self, q: u32) -> Result<f64, AmmError> {
        Ok(self.curve_cost(q)? * (1.0 + self.params.fee))
    }

    /// Moves the curve as if `q` slices were bought.
    fn apply_buy(&mut self, q: u32) -> f64 {
        let cost = self.curve_cost(q).expect("caller checked inventory");
        self.inventory -= q;
        if self.x() > 0.0 {
            self.real_currency = self.k / self.x() - self.params.virtual_currency;
        } else {
            self.real_currency += cost;
        }
        cost
    }

    /// Buys `q` slices: budget check, escrow lock buyer to seller, a
    /// pool-trade record, then slice transfers. Nothing changes on error.
    pub fn execute_buy(
        &mut self,
        ledger: &mut Ledger,
        registry: &mut TokenRegistry,
        buyer: AccountId,
        q: u32,
    ) -> Result<TradeRecord, AmmError> {
        let cost = self.quote_buy(q)?;
        if !ledger.is_verified(buyer) {
            return Err(LedgerError::UnverifiedIdentity(buyer).into());
        }
        let paid = Amount::from_units_ceil(cost);
        let available = ledger.balance(buyer);
        if available < paid {
            return Err(AmmError::InsufficientBudget { buyer, needed: paid, available });
        }
        let escrow = ledger.escrow_lock(buyer, self.seller, paid)?;
        let tx = ledger.record(Payload::PoolTrade { asset: self.asset.0, buyer, slices: q, cost: paid, escrow })?;
        let first = self.slices - self.inventory;
        for index in first..first + q {
            registry.transfer_slice(ledger, TokenId { asset: self.asset, index }, self.seller, buyer)?;
        }
        self.apply_buy(q);
        Ok(TradeRecord { asset: self.asset, buyer, seller: self.seller, slices: q, cost, paid, escrow, tx })
    }

    /// Currency returned for selling `q` slices back into the curve.
    pub fn quote_sell(&self, q: u32) -> Result<f64, AmmError> {
        let x_after = self.x() + q as f64;
        let y_after = self.k / x_after;
        if self.x() == 0.0 || y_after < self.params.virtual_currency * (1.0 - CURVE_TOLERANCE) {
            return Err(AmmError::InsufficientReserve);
        }
        Ok((self.y() - y_after) * (1.0 - self.params.fee))
    }

    /// Sells `q` slices into the curve (currency side only).
    pub fn sell(&mut self, q: u32) -> Result<f64, AmmError> {
        let out = self.quote_sell(q)?;
        self.inventory += q;
        self.real_currency = (self.k / self.x() - self.params.virtual_currency).max(0.0);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapDirection {
    SlicesIn,
    CurrencyIn,
}

/// Two-sided constant-product pool seeded by resellers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondaryPool {
    pub slice_reserve: f64,
    pub currency_reserve: f64,
    pub fee: f64,
}

impl SecondaryPool {
    pub fn new(slice_reserve: f64, currency_reserve: f64) -> Self {
        SecondaryPool { slice_reserve, currency_reserve, fee: 0.0 }
    }

    pub fn k(&self) -> f64 {
        self.slice_reserve * self.currency_reserve
    }

    pub fn spot_price(&self) -> f64 {
        self.currency_reserve / self.slice_reserve
    }

    pub fn quote(&self, direction: SwapDirection, amount: f64) -> Result<f64, AmmError> {
        if !(self.slice_reserve > 0.0 && self.currency_reserve > 0.0) {
            return Err(AmmError::EmptyPool);
        }
        let (r_in, r_out) = match direction {
            SwapDirection::SlicesIn => (self.slice_reserve, self.currency_reserve),
            SwapDirection::CurrencyIn => (self.currency_reserve, self.slice_reserve),
        };
        let effective = amount.max(0.0) * (1.0 - self.fee);
        Ok(r_out * effective / (r_in + effective))
    }

    pub fn swap(&mut self, direction: SwapDirection, amount: f64) -> Result<f64, AmmError> {
        let out = self.quote(direction, amount)?;
        let amount = amount.max(0.0);
        match direction {
            SwapDirection::SlicesIn => {
                self.slice_reserve += amount;
                self.currency_reserve -= out;
            }
            SwapDirection::CurrencyIn => {
                self.currency_reserve += amount;
                self.slice_reserve -= out;
            }
        }
        Ok(out)
    }
}
