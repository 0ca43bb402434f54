//! Simulated permissioned chain.
//!
//! The ledger is a single-threaded state machine: a mempool, a chain of
//! sealed blocks, currency balances, an identity registry acting as the
//! transfer compliance gate, and escrow entries used for pay-before-delivery
//! settlement.
//!
//! Blocks seal when the mempool reaches `block_size`, or when the block
//! timer expires with a non-empty mempool. The timer is anchored to the last
//! seal event and restarts on every seal, so no transaction waits longer than
//! `block_timeout_s` simulated seconds.
//!
//! Two kinds of transactions exist:
//!
//! - transactions submitted through [`Ledger::submit_tx`] whose currency
//!   effect (transfer or mint) is applied when the block containing them is
//!   sealed; a transfer that is under-funded at that point is dropped and
//!   logged as a [`Rejection`];
//! - record transactions emitted by the immediate helpers
//!   ([`Ledger::mint`], the escrow operations, [`Ledger::execute_contract`],
//!   [`Ledger::record`]) whose effect has already happened and which only
//!   enter the chain for traceability.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::io::{self, Write};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccountId(pub u64);

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "acct-{}", self.0)
    }
}

/// Currency amount in micro-units. Integer so conservation checks are exact.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);
    pub const MICROS_PER_UNIT: u64 = 1_000_000;

    pub const fn from_micros(micros: u64) -> Self {
        Amount(micros)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    /// Nearest micro-unit; negative and NaN inputs map to zero.
    pub fn from_units(units: f64) -> Self {
        Amount(Self::scaled(units).round() as u64)
    }

    /// Smallest micro-unit amount not below `units`.
    pub fn from_units_ceil(units: f64) -> Self {
        Amount(Self::scaled(units).ceil() as u64)
    }

    /// Largest micro-unit amount not above `units`.
    pub fn from_units_floor(units: f64) -> Self {
        Amount(Self::scaled(units).floor() as u64)
    }

    fn scaled(units: f64) -> f64 {
        if units.is_nan() || units <= 0.0 {
            0.0
        } else {
            units * Self::MICROS_PER_UNIT as f64
        }
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / Self::MICROS_PER_UNIT as f64
    }

    pub fn checked_sub(self, rhs: Amount) -> Option<Amount> {
        self.0.checked_sub(rhs.0).map(Amount)
    }

    pub fn saturating_sub(self, rhs: Amount) -> Amount {
        Amount(self.0.saturating_sub(rhs.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add for Amount {
    type Output = Amount;
    fn add(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_add(rhs.0).expect("currency overflow"))
    }
}

impl AddAssign for Amount {
    fn add_assign(&mut self, rhs: Amount) {
        *self = *self + rhs;
    }
}

impl Sub for Amount {
    type Output = Amount;
    fn sub(self, rhs: Amount) -> Amount {
        Amount(self.0.checked_sub(rhs.0).expect("currency underflow"))
    }
}

impl Sum for Amount {
    fn sum<I: Iterator<Item = Amount>>(iter: I) -> Amount {
        iter.fold(Amount::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / Self::MICROS_PER_UNIT, self.0 % Self::MICROS_PER_UNIT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EscrowId(pub u64);

/// Simulated wall clock in whole seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    now: u64,
}

impl SimClock {
    pub fn now(&self) -> u64 {
        self.now
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxKind {
    Transfer,
    Mint,
    EscrowLock,
    EscrowRelease,
    EscrowRefund,
    PoolTrade,
    ChannelOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    CurrencyTransfer {
        from: AccountId,
        to: AccountId,
        amount: Amount,
    },
    SliceTransfer {
        asset: u64,
        slice: u32,
        from: AccountId,
        to: AccountId,
    },
    MintCurrency {
        to: AccountId,
        amount: Amount,
    },
    MintAsset {
        asset: u64,
        owner: AccountId,
    },
    EscrowLock {
        escrow: EscrowId,
        payer: AccountId,
        payee: AccountId,
        amount: Amount,
    },
    EscrowRelease {
        escrow: EscrowId,
    },
    EscrowRefund {
        escrow: EscrowId,
    },
    PoolTrade {
        asset: u64,
        buyer: AccountId,
        slices: u32,
        cost: Amount,
        escrow: EscrowId,
    },
    ChannelOpen {
        channel: u64,
        owner: AccountId,
        lessee: AccountId,
        tokens: u32,
        deposit: Amount,
    },
    ChannelSettle {
        channel: u64,
        final_seq: u64,
        owner_payout: Amount,
        protocol_payout: Amount,
    },
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::CurrencyTransfer { .. } | Payload::SliceTransfer { .. } => TxKind::Transfer,
            Payload::MintCurrency { .. } | Payload::MintAsset { .. } => TxKind::Mint,
            Payload::EscrowLock { .. } => TxKind::EscrowLock,
            Payload::EscrowRelease { .. } => TxKind::EscrowRelease,
            Payload::EscrowRefund { .. } => TxKind::EscrowRefund,
            Payload::PoolTrade { .. } => TxKind::PoolTrade,
            Payload::ChannelOpen { .. } | Payload::ChannelSettle { .. } => TxKind::ChannelOp,
        }
    }

    /// Accounts that must be verified for the payload to pass the gate.
    fn gated_parties(&self) -> Vec<AccountId> {
        match *self {
            Payload::CurrencyTransfer { from, to, .. } | Payload::SliceTransfer { from, to, .. } => {
                vec![from, to]
            }
            Payload::EscrowLock { payer, payee, .. } => vec![payer, payee],
            Payload::PoolTrade { buyer, .. } => vec![buyer],
            Payload::ChannelOpen { owner, lessee, .. } => vec![owner, lessee],
            Payload::MintAsset { owner, .. } => vec![owner],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tx {
    pub id: TxId,
    pub payload: Payload,
    pub submitted_at: u64,
    /// True when the currency effect is applied at inclusion rather than
    /// having been applied by an immediate helper.
    #[serde(skip)]
    deferred: bool,
}

impl Tx {
    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub sealed_at: u64,
    pub txs: Vec<Tx>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerParams {
    pub block_size: usize,
    pub block_timeout_s: u64,
}

impl Default for LedgerParams {
    fn default() -> Self {
        LedgerParams { block_size: 10, block_timeout_s: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EscrowStatus {
    Locked,
    Released,
    Refunded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscrowEntry {
    pub id: EscrowId,
    /// Record of the lock on the chain.
    pub lock_tx: TxId,
    pub payer: AccountId,
    pub payee: AccountId,
    pub amount: Amount,
    pub status: EscrowStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRegistry {
    verified: BTreeSet<AccountId>,
}

impl IdentityRegistry {
    pub fn is_verified(&self, account: AccountId) -> bool {
        self.verified.contains(&account)
    }

    pub fn len(&self) -> usize {
        self.verified.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verified.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AccountId> {
        self.verified.iter()
    }
}

/// A transaction dropped at inclusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub tx: TxId,
    pub at: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("transaction id {0:?} already used")]
    DuplicateTxId(TxId),
    #[error("account {0} is not a verified identity")]
    UnverifiedIdentity(AccountId),
    #[error("account {account} holds {available}, needs {needed}")]
    InsufficientBalance { account: AccountId, needed: Amount, available: Amount },
    #[error("escrow {id:?} is {status:?}, expected Locked")]
    InvalidEscrowState { id: EscrowId, status: EscrowStatus },
    #[error("unknown escrow {0:?}")]
    UnknownEscrow(EscrowId),
}

/// Contract accounts are allocated above this id.
pub const CONTRACT_ACCOUNT_BASE: u64 = 1 << 48;

#[derive(Debug, Clone)]
pub struct Ledger {
    clock: SimClock,
    params: LedgerParams,
    mempool: VecDeque<Tx>,
    chain: Vec<Block>,
    balances: BTreeMap<AccountId, Amount>,
    identities: IdentityRegistry,
    escrows: BTreeMap<EscrowId, EscrowEntry>,
    timer_anchor: u64,
    used_ids: HashSet<TxId>,
    next_tx: u64,
    next_escrow: u64,
    next_contract: u64,
    rejections: Vec<Rejection>,
}

impl Default for Ledger {
    fn default() -> Self {
        Ledger::new(LedgerParams::default())
    }
}

impl Ledger {
    /// # Panics
    /// If `block_size` or `block_timeout_s` is zero.
    pub fn new(params: LedgerParams) -> Self {
        assert!(params.block_size >= 1, "block_size must be at least 1");
        assert!(params.block_timeout_s >= 1, "block_timeout_s must be at least 1");
        Ledger {
            clock: SimClock::default(),
            params,
            mempool: VecDeque::new(),
            chain: Vec::new(),
            balances: BTreeMap::new(),
            identities: IdentityRegistry::default(),
            escrows: BTreeMap::new(),
            timer_anchor: 0,
            used_ids: HashSet::new(),
            next_tx: 0,
            next_escrow: 0,
            next_contract: CONTRACT_ACCOUNT_BASE,
            rejections: Vec::new(),
        }
    }

    pub fn params(&self) -> LedgerParams {
        self.params
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn mempool(&self) -> impl ExactSizeIterator<Item = &Tx> {
        self.mempool.iter()
    }

    pub fn rejections(&self) -> &[Rejection] {
        &self.rejections
    }

    pub fn identities(&self) -> &IdentityRegistry {
        &self.identities
    }

    pub fn is_verified(&self, account: AccountId) -> bool {
        self.identities.is_verified(account)
    }

    pub fn balance(&self, account: AccountId) -> Amount {
        self.balances.get(&account).copied().unwrap_or_default()
    }

    pub fn escrow(&self, id: EscrowId) -> Option<&EscrowEntry> {
        self.escrows.get(&id)
    }

    pub fn escrows(&self) -> impl Iterator<Item = &EscrowEntry> {
        self.escrows.values()
    }

    /// Sum of all balances plus currency held in locked escrows.
    pub fn total_currency(&self) -> Amount {
        let locked: Amount = self
            .escrows
            .values()
            .filter(|e| e.status == EscrowStatus::Locked)
            .map(|e| e.amount)
            .sum();
        self.balances.values().copied().sum::<Amount>() + locked
    }

    /// Idempotent.
    pub fn register_identity(&mut self, account: AccountId) {
        self.identities.verified.insert(account);
    }

    /// Allocates a fresh, verified account for contract custody.
    pub fn open_contract_account(&mut self) -> AccountId {
        let id = AccountId(self.next_contract);
        self.next_contract += 1;
        self.register_identity(id);
        id
    }

    pub fn next_tx_id(&mut self) -> TxId {
        loop {
            let id = TxId(self.next_tx);
            self.next_tx += 1;
            if !self.used_ids.contains(&id) {
                return id;
            }
        }
    }

    fn check_gate(&self, payload: &Payload) -> Result<(), LedgerError> {
        for party in payload.gated_parties() {
            if !self.is_verified(party) {
                return Err(LedgerError::UnverifiedIdentity(party));
            }
        }
        Ok(())
    }

    /// Queues a transaction whose currency effect applies at inclusion.
    ///
    /// Seals a block immediately when the mempool reaches `block_size`.
    pub fn submit_tx(&mut self, id: TxId, payload: Payload) -> Result<TxId, LedgerError> {
        self.enqueue(id, payload, true)
    }

    /// Queues a record of an effect that has already been applied.
    pub fn record(&mut self, payload: Payload) -> Result<TxId, LedgerError> {
        let id = self.next_tx_id();
        self.enqueue(id, payload, false)
    }

    fn enqueue(&mut self, id: TxId, payload: Payload, deferred: bool) -> Result<TxId, LedgerError> {
        if self.used_ids.contains(&id) {
            return Err(LedgerError::DuplicateTxId(id));
        }
        self.check_gate(&payload)?;
        self.used_ids.insert(id);
        self.mempool.push_back(Tx { id, payload, submitted_at: self.now(), deferred });
        if self.mempool.len() >= self.params.block_size {
            self.seal(self.now());
        }
        Ok(id)
    }

    /// Advances the clock, sealing one block at every elapsed timer boundary
    /// that finds a non-empty mempool. Returns the blocks sealed.
    pub fn advance_clock(&mut self, dt: u64) -> Vec<Block> {
        let first_new = self.chain.len();
        let target = self.now() + dt;
        let timeout = self.params.block_timeout_s;
        loop {
            if self.mempool.is_empty() {
                // idle timer: skip whole periods
                let periods = (target - self.timer_anchor) / timeout;
                self.timer_anchor += periods * timeout;
                break;
            }
            let deadline = self.timer_anchor + timeout;
            if deadline > target {
                break;
            }
            self.clock.now = deadline;
            self.seal(deadline);
        }
        self.clock.now = target;
        self.chain[first_new..].to_vec()
    }

    fn seal(&mut self, at: u64) {
        self.timer_anchor = at;
        let take = self.mempool.len().min(self.params.block_size);
        let mut included = Vec::with_capacity(take);
        for tx in self.mempool.drain(..take).collect::<Vec<_>>() {
            if tx.deferred {
                if let Err(reason) = self.apply_deferred(&tx.payload) {
                    self.rejections.push(Rejection { tx: tx.id, at, reason });
                    continue;
                }
            }
            included.push(tx);
        }
        if !included.is_empty() {
            self.chain.push(Block { height: self.chain.len() as u64, sealed_at: at, txs: included });
        }
    }

    fn apply_deferred(&mut self, payload: &Payload) -> Result<(), String> {
        match *payload {
            Payload::CurrencyTransfer { from, to, amount } => {
                self.move_funds(from, to, amount).map_err(|e| e.to_string())
            }
            Payload::MintCurrency { to, amount } => {
                self.credit(to, amount);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn credit(&mut self, account: AccountId, amount: Amount) {
        *self.balances.entry(account).or_default() += amount;
    }

    fn debit(&mut self, account: AccountId, amount: Amount) -> Result<(), LedgerError> {
        let available = self.balance(account);
        let rest = available.checked_sub(amount).ok_or(LedgerError::InsufficientBalance {
            account,
            needed: amount,
            available,
        })?;
        self.balances.insert(account, rest);
        Ok(())
    }

    fn move_funds(&mut self, from: AccountId, to: AccountId, amount: Amount) -> Result<(), LedgerError> {
        self.debit(from, amount)?;
        self.credit(to, amount);
        Ok(())
    }

    /// Credits `account` immediately. Minting is the only operation that
    /// changes total currency.
    pub fn mint(&mut self, account: AccountId, amount: Amount) -> TxId {
        self.credit(account, amount);
        self.record(Payload::MintCurrency { to: account, amount })
            .expect("mint records are not gated")
    }

    pub fn escrow_lock(
        &mut self,
        payer: AccountId,
        payee: AccountId,
        amount: Amount,
    ) -> Result<EscrowId, LedgerError> {
        let id = EscrowId(self.next_escrow);
        let payload = Payload::EscrowLock { escrow: id, payer, payee, amount };
        self.check_gate(&payload)?;
        self.debit(payer, amount)?;
        self.next_escrow += 1;
        let lock_tx = self.record(payload)?;
        self.escrows.insert(id, EscrowEntry { id, lock_tx, payer, payee, amount, status: EscrowStatus::Locked });
        Ok(id)
    }

    pub fn escrow_release(&mut self, id: EscrowId) -> Result<(), LedgerError> {
        let (payee, amount) = self.close_escrow(id, EscrowStatus::Released)?;
        self.credit(payee, amount);
        self.record(Payload::EscrowRelease { escrow: id })?;
        Ok(())
    }

    pub fn escrow_refund(&mut self, id: EscrowId) -> Result<(), LedgerError> {
        let (payer, amount) = self.close_escrow(id, EscrowStatus::Refunded)?;
        self.credit(payer, amount);
        self.record(Payload::EscrowRefund { escrow: id })?;
        Ok(())
    }

    /// Marks a locked escrow closed and returns whom to credit.
    fn close_escrow(&mut self, id: EscrowId, to: EscrowStatus) -> Result<(AccountId, Amount), LedgerError> {
        let entry = self.escrows.get_mut(&id).ok_or(LedgerError::UnknownEscrow(id))?;
        if entry.status != EscrowStatus::Locked {
            return Err(LedgerError::InvalidEscrowState { id, status: entry.status });
        }
        entry.status = to;
        let who = if to == EscrowStatus::Released { entry.payee } else { entry.payer };
        Ok((who, entry.amount))
    }

    /// Applies a batch of balance moves atomically and records one
    /// transaction for the whole batch.
    pub fn execute_contract(
        &mut self,
        payload: Payload,
        moves: &[(AccountId, AccountId, Amount)],
    ) -> Result<TxId, LedgerError> {
        self.check_gate(&payload)?;
        let mut needed: BTreeMap<AccountId, Amount> = BTreeMap::new();
        for &(from, to, amount) in moves {
            for party in [from, to] {
                if !self.is_verified(party) {
                    return Err(LedgerError::UnverifiedIdentity(party));
                }
            }
            *needed.entry(from).or_default() += amount;
        }
        for (&account, &amount) in &needed {
            let available = self.balance(account);
            if available < amount {
                return Err(LedgerError::InsufficientBalance { account, needed: amount, available });
            }
        }
        for &(from, to, amount) in moves {
            self.move_funds(from, to, amount)?;
        }
        self.record(payload)
    }

    /// Writes one line per block: `{"height":..,"sealed_at":..,"txs":[ids]}`.
    pub fn dump_chain<W: Write>(&self, mut out: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            height: u64,
            sealed_at: u64,
            txs: Vec<&'a TxId>,
        }
        for block in &self.chain {
            let line = Line {
                height: block.height,
                sealed_at: block.sealed_at,
                txs: block.txs.iter().map(|t| &t.id).collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
