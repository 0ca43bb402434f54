//! Byzantine behaviour injection.
//!
//! A fraction of one side of the market is flagged malicious. Colluding
//! buyers shade their bids down by a common factor; colluding sellers
//! inflate asks and withhold part of their supply; defaulting buyers refuse
//! to pay after delivery with a fixed probability. Honest agents are never
//! touched.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{Ask, Bid};

/// Tolerance ceiling for the Byzantine fraction.
pub const MAX_BYZANTINE_RATIO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    BuyerCollusion,
    SellerCollusion,
    #[serde(alias = "default-attack")]
    Default,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::BuyerCollusion => "buyer-collusion",
            AttackKind::SellerCollusion => "seller-collusion",
            AttackKind::Default => "default",
        }
    }

    /// Sellers are the flagged side for seller collusion, buyers otherwise.
    pub fn targets_sellers(self) -> bool {
        self == AttackKind::SellerCollusion
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(AttackKind::None),
            "buyer-collusion" | "buyer_collusion" => Ok(AttackKind::BuyerCollusion),
            "seller-collusion" | "seller_collusion" => Ok(AttackKind::SellerCollusion),
            "default" | "default-attack" | "default_attack" => Ok(AttackKind::Default),
            other => Err(format!("unknown attack kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub byzantine_ratio: f64,
    pub bid_depression: f64,
    pub ask_inflation: f64,
    pub supply_withholding: f64,
    pub default_probability: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            kind: AttackKind::None,
            byzantine_ratio: 0.0,
            bid_depression: 0.5,
            ask_inflation: 2.0,
            supply_withholding: 0.5,
            default_probability: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("byzantine ratio {0} outside [0, {MAX_BYZANTINE_RATIO}]")]
    RatioOutOfRange(f64),
    #[error("{0}")]
    InvalidFactor(&'static str),
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AdversaryError> {
        check_ratio(self.byzantine_ratio)?;
        if !(0.0..=1.0).contains(&self.bid_depression) {
            return Err(AdversaryError::InvalidFactor("bid_depression must lie in [0, 1]"));
        }
        if !(self.ask_inflation >= 1.0) {
            return Err(AdversaryError::InvalidFactor("ask_inflation must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.supply_withholding) {
            return Err(AdversaryError::InvalidFactor("supply_withholding must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.default_probability) {
            return Err(AdversaryError::InvalidFactor("default_probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn check_ratio(ratio: f64) -> Result<(), AdversaryError> {
    if (0.0..=MAX_BYZANTINE_RATIO).contains(&ratio) {
        Ok(())
    } else {
        Err(AdversaryError::RatioOutOfRange(ratio))
    }
}

/// Number of malicious agents among `n` at `ratio`.
pub fn malicious_count(n: usize, ratio: f64) -> usize {
    // the epsilon absorbs products like 0.3 * 200 = 60.000000000000007
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Flags `floor(ratio * n)` of `n` agents, chosen uniformly by `rng`.
pub fn assign_roles<R: Rng + ?Sized>(n: usize, ratio: f64, rng: &mut R) -> Result<Vec<bool>, AdversaryError> {
    check_ratio(ratio)?;
    let mut flags = vec![false; n];
    for i in rand::seq::index::sample(rng, n, malicious_count(n, ratio)) {
        flags[i] = true;
    }
    Ok(flags)
}

pub fn distort_bid(bid: Bid, malicious: bool, config: &AttackConfig) -> Bid {
    if malicious && config.kind == AttackKind::BuyerCollusion {
        Bid { price: bid.price * config.bid_depression, ..bid }
    } else {
        bid
    }
}

/// `None` when withholding leaves nothing to offer.
pub fn distort_ask(ask: Ask, malicious: bool, config: &AttackConfig) -> Option<Ask> {
    if !(malicious && config.kind == AttackKind::SellerCollusion) {
        return Some(ask);
    }
    let quantity = (ask.quantity as f64 * (1.0 - config.supply_withholding) + 1e-9).floor() as u32;
    (quantity > 0).then_some(Ask { price: ask.price * config.ask_inflation, quantity, ..ask })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaymentDecision {
    Pay,
    Refuse,
}

/// Pay-after-delivery outcome. Draws from `rng` only for malicious buyers
/// under the default attack.
pub fn default_decision<R: Rng + ?Sized>(malicious: bool, rng: &mut R, config: &AttackConfig) -> PaymentDecision {
    if malicious && config.kind == AttackKind::Default && rng.gen_bool(config.default_probability) {
        PaymentDecision::Refuse
    } else {
        PaymentDecision::Pay
    }
}
