//! Leasing through state channels.
//!
//! Opening a channel locks the leased slices and moves the lessee's deposit
//! (`payment_rate * lease_duration`) into a custody account, in one ledger
//! transaction. Updates are exchanged off-chain: each carries both parties'
//! attestations, bumps `seq`, adds to the cumulative payment and may extend
//! the usage-right schedule. Closing starts a dispute window during which a
//! fresher attested state supersedes the submitted one. Finalizing unlocks
//! the slices (ownership never moves), pays the owner its share, sends the
//! remainder to the protocol sink and refunds the unused deposit, again in
//! one ledger transaction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AccountId, Amount, Ledger, LedgerError, Payload};
use crate::tokenization::{TokenError, TokenId, TokenRegistry, UsageRight};

pub const DEFAULT_DISPUTE_WINDOW_S: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelId(pub u64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTerms {
    pub lease_duration_h: u64,
    pub sla: String,
    /// Per hour of lease.
    pub payment_rate: Amount,
    /// Fraction of revenue paid to the owner; the rest goes to the sink.
    pub owner_share: f64,
}

impl ChannelTerms {
    pub fn deposit(&self) -> Amount {
        Amount::from_micros(self.payment_rate.micros() * self.lease_duration_h)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attestations {
    pub owner: bool,
    pub lessee: bool,
}

impl Attestations {
    pub const BOTH: Attestations = Attestations { owner: true, lessee: true };

    pub fn complete(&self) -> bool {
        self.owner && self.lessee
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub channel: ChannelId,
    pub seq: u64,
    pub locked_tokens: Vec<TokenId>,
    pub lessee_paid: Amount,
    pub schedule: Vec<UsageRight>,
    pub attestations: Attestations,
}

/// A usage window requested in an update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RightRequest {
    pub token: TokenId,
    pub start_h: u64,
    pub duration_h: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub channel: ChannelId,
    pub final_seq: u64,
    pub owner_payout: Amount,
    pub protocol_payout: Amount,
    pub lessee_refund: Amount,
    pub tokens_returned: Vec<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelPhase {
    Open,
    Closing { best_seq: u64, deadline: u64 },
    Settled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: ChannelId,
    pub owner: AccountId,
    pub lessee: AccountId,
    pub terms: ChannelTerms,
    pub custody: AccountId,
    pub deposit: Amount,
    pub phase: ChannelPhase,
    /// Every accepted state, indexed by seq.
    pub history: Vec<ChannelState>,
}

impl Channel {
    pub fn latest(&self) -> &ChannelState {
        self.history.last().expect("opened with seq 0")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error("unknown channel {0:?}")]
    UnknownChannel(ChannelId),
    #[error("invalid terms: {0}")]
    InvalidTerms(&'static str),
    #[error("update lacks an attestation")]
    MissingAttestation,
    #[error("payment delta {0} is negative")]
    NegativePayment(i64),
    #[error("cumulative payment would exceed the deposit {0}")]
    PaymentExceedsDeposit(Amount),
    #[error("channel {0:?} is not open")]
    NotOpen(ChannelId),
    #[error("state does not match any attested state of the channel")]
    UnknownState,
    #[error("seq {submitted} is not fresher than submitted seq {best}")]
    StaleStateAfterFresherSubmission { submitted: u64, best: u64 },
    #[error("dispute window closed at {0}")]
    WindowClosed(u64),
    #[error("dispute window open until {0}")]
    WindowOpen(u64),
}

#[derive(Debug, Clone)]
pub struct ChannelManager {
    channels: BTreeMap<ChannelId, Channel>,
    next_id: u64,
    pub protocol_sink: AccountId,
    pub dispute_window_s: u64,
}

impl ChannelManager {
    /// Allocates the protocol sink on `ledger`.
    pub fn new(ledger: &mut Ledger) -> Self {
        ChannelManager {
            channels: BTreeMap::new(),
            next_id: 0,
            protocol_sink: ledger.open_contract_account(),
            dispute_window_s: DEFAULT_DISPUTE_WINDOW_S,
        }
    }

    pub fn channel(&self, id: ChannelId) -> Option<&Channel> {
        self.channels.get(&id)
    }

    fn get_mut(&mut self, id: ChannelId) -> Result<&mut Channel, ChannelError> {
        self.channels.get_mut(&id).ok_or(ChannelError::UnknownChannel(id))
    }

    pub fn open_channel(
        &mut self,
        ledger: &mut Ledger,
        registry: &mut TokenRegistry,
        owner: AccountId,
        lessee: AccountId,
        tokens: &[TokenId],
        terms: ChannelTerms,
    ) -> Result<ChannelId, ChannelError> {
        if terms.lease_duration_h < 1 {
            return Err(ChannelError::InvalidTerms("lease duration below one hour"));
        }
        if !(0.0..=1.0).contains(&terms.owner_share) {
            return Err(ChannelError::InvalidTerms("owner share outside [0, 1]"));
        }
        for party in [owner, lessee] {
            if !ledger.is_verified(party) {
                return Err(LedgerError::UnverifiedIdentity(party).into());
            }
        }
        let deposit = terms.deposit();
        let available = ledger.balance(lessee);
        if available < deposit {
            return Err(LedgerError::InsufficientBalance { account: lessee, needed: deposit, available }.into());
        }
        registry.lock_tokens(tokens, owner)?;
        let id = ChannelId(self.next_id);
        let custody = ledger.open_contract_account();
        let payload = Payload::ChannelOpen { channel: id.0, owner, lessee, tokens: tokens.len() as u32, deposit };
        if let Err(e) = ledger.execute_contract(payload, &[(lessee, custody, deposit)]) {
            registry.unlock_tokens(tokens);
            return Err(e.into());
        }
        self.next_id += 1;
        let genesis = ChannelState {
            channel: id,
            seq: 0,
            locked_tokens: tokens.to_vec(),
            lessee_paid: Amount::ZERO,
            schedule: Vec::new(),
            attestations: Attestations::BOTH,
        };
        self.channels.insert(
            id,
            Channel { id, owner, lessee, terms, custody, deposit, phase: ChannelPhase::Open, history: vec![genesis] },
        );
        Ok(id)
    }

    /// Off-chain update; touches no ledger state.
    pub fn channel_update(
        &mut self,
        registry: &mut TokenRegistry,
        id: ChannelId,
        schedule_delta: &[RightRequest],
        payment_delta: i64,
        attestations: Attestations,
    ) -> Result<&ChannelState, ChannelError> {
        let channel = self.channels.get_mut(&id).ok_or(ChannelError::UnknownChannel(id))?;
        if channel.phase != ChannelPhase::Open {
            return Err(ChannelError::NotOpen(id));
        }
        if !attestations.complete() {
            return Err(ChannelError::MissingAttestation);
        }
        if payment_delta < 0 {
            return Err(ChannelError::NegativePayment(payment_delta));
        }
        let current = channel.latest();
        let paid = current.lessee_paid + Amount::from_micros(payment_delta as u64);
        if paid > channel.deposit {
            return Err(ChannelError::PaymentExceedsDeposit(channel.deposit));
        }
        let mut schedule = current.schedule.clone();
        for req in schedule_delta {
            if !current.locked_tokens.contains(&req.token) {
                return Err(TokenError::NotHolder { token: req.token, account: channel.lessee }.into());
            }
            let duration_h = registry.check_usage_right(req.token, req.start_h, req.duration_h, &schedule)?;
            schedule.push(UsageRight {
                id: registry.allocate_right_id(),
                token: req.token,
                start_h: req.start_h,
                duration_h,
                grantee: channel.lessee,
            });
        }
        let next = ChannelState {
            channel: id,
            seq: current.seq + 1,
            locked_tokens: current.locked_tokens.clone(),
            lessee_paid: paid,
            schedule,
            attestations,
        };
        channel.history.push(next);
        Ok(channel.latest())
    }

    /// Submits a state for closing, or challenges with a fresher one.
    pub fn submit_close(&mut self, ledger: &Ledger, id: ChannelId, state: &ChannelState) -> Result<(), ChannelError> {
        let window = self.dispute_window_s;
        let channel = self.get_mut(id)?;
        let known = channel.history.get(state.seq as usize);
        if state.channel != id || known != Some(state) || !state.attestations.complete() {
            return Err(ChannelError::UnknownState);
        }
        let now = ledger.now();
        match channel.phase {
            ChannelPhase::Open => {
                channel.phase = ChannelPhase::Closing { best_seq: state.seq, deadline: now + window };
            }
            ChannelPhase::Closing { best_seq, deadline } => {
                if now >= deadline {
                    return Err(ChannelError::WindowClosed(deadline));
                }
                if state.seq <= best_seq {
                    return Err(ChannelError::StaleStateAfterFresherSubmission { submitted: state.seq, best: best_seq });
                }
                channel.phase = ChannelPhase::Closing { best_seq: state.seq, deadline };
            }
            ChannelPhase::Settled => return Err(ChannelError::NotOpen(id)),
        }
        Ok(())
    }

    /// Settles the freshest submitted state once the window has passed.
    pub fn finalize(
        &mut self,
        ledger: &mut Ledger,
        registry: &mut TokenRegistry,
        id: ChannelId,
    ) -> Result<Settlement, ChannelError> {
        let sink = self.protocol_sink;
        let channel = self.get_mut(id)?;
        let ChannelPhase::Closing { best_seq, deadline } = channel.phase else {
            return Err(ChannelError::NotOpen(id));
        };
        if ledger.now() < deadline {
            return Err(ChannelError::WindowOpen(deadline));
        }
        let state = &channel.history[best_seq as usize];
        let paid = state.lessee_paid;
        let owner_payout = Amount::from_micros((paid.micros() as f64 * channel.terms.owner_share).round() as u64);
        let protocol_payout = paid - owner_payout;
        let lessee_refund = channel.deposit - paid;
        let payload = Payload::ChannelSettle { channel: id.0, final_seq: best_seq, owner_payout, protocol_payout };
        ledger.execute_contract(
            payload,
            &[
                (channel.custody, channel.owner, owner_payout),
                (channel.custody, sink, protocol_payout),
                (channel.custody, channel.lessee, lessee_refund),
            ],
        )?;
        registry.unlock_tokens(&state.locked_tokens);
        let settlement = Settlement {
            channel: id,
            final_seq: best_seq,
            owner_payout,
            protocol_payout,
            lessee_refund,
            tokens_returned: state.locked_tokens.clone(),
        };
        channel.phase = ChannelPhase::Settled;
        Ok(settlement)
    }

    /// Submits `state`, lets the dispute window elapse on the ledger clock
    /// and finalizes.
    pub fn settle(
        &mut self,
        ledger: &mut Ledger,
        registry: &mut TokenRegistry,
        id: ChannelId,
        state: &ChannelState,
        dispute_window_s: u64,
    ) -> Result<Settlement, ChannelError> {
        let saved = std::mem::replace(&mut self.dispute_window_s, dispute_window_s);
        let submitted = self.submit_close(ledger, id, state);
        self.dispute_window_s = saved;
        submitted?;
        ledger.advance_clock(dispute_window_s);
        self.finalize(ledger, registry, id)
    }
}
