//! Agent-based simulator for tokenized network-resource markets.
//!
//! Spectrum licenses are registered on a simulated permissioned ledger,
//! fractionalized into slice tokens and sold through per-license bonding
//! curves. The same populations can be cleared by three order-book
//! mechanisms (`mpra`, `tra`, `cpa`) so that utilization can be compared
//! under buyer collusion, seller collusion and payment-default attacks.
//!
//! Module map:
//!
//! - [`ledger`]: mempool, block sealing, balances, identity gate, escrow.
//! - [`tokenization`]: asset registration, slice tokens, usage rights.
//! - [`amm`]: virtual-reserve constant-product pools and a secondary swap pool.
//! - [`channels`]: leasing through state channels with dispute-window settlement.
//! - [`baselines`]: the three order-book clearing mechanisms.
//! - [`adversary`]: Byzantine role assignment and order distortion.
//! - [`engine`]: the tick loop, metrics and parameter sweeps.
//! - [`cli`]: config parsing, CSV output and the command-line front end.

pub mod adversary;
pub mod amm;
pub mod baselines;
pub mod channels;
pub mod cli;
pub mod engine;
pub mod ledger;
pub mod rng;
pub mod tokenization;

pub use ledger::{AccountId, Amount};
