//! Spectrum licenses as on-ledger assets.
//!
//! A license is registered as a digital twin, split into `n` homogeneous
//! slice tokens and traded slice by slice. Slices keep their asset lineage so
//! the whole-license sold rule can be evaluated. Usage rights are hourly
//! time windows on individual slices.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{AccountId, Ledger, LedgerError, Payload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AssetId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenId {
    pub asset: AssetId,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetDescriptor {
    pub owner: AccountId,
    pub band_center_ghz: f64,
    pub bandwidth_mhz: f64,
    pub metadata: String,
    pub value_estimate: f64,
}

impl AssetDescriptor {
    /// A 10 MHz block in the 3.5 GHz band.
    pub fn standard_license(owner: AccountId, value_estimate: f64) -> Self {
        AssetDescriptor {
            owner,
            band_center_ghz: 3.5,
            bandwidth_mhz: 10.0,
            metadata: String::new(),
            value_estimate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumAsset {
    pub id: AssetId,
    pub band_center_ghz: f64,
    pub bandwidth_mhz: f64,
    pub owner: AccountId,
    pub metadata: String,
    pub value_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceToken {
    pub id: TokenId,
    pub slice_bandwidth_mhz: f64,
    pub holder: AccountId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRight {
    pub id: u64,
    pub token: TokenId,
    pub start_h: u64,
    pub duration_h: u64,
    pub grantee: AccountId,
}

impl UsageRight {
    pub fn end_h(&self) -> u64 {
        self.start_h + self.duration_h
    }

    /// Half-open interval overlap on the same token.
    pub fn overlaps(&self, other: &UsageRight) -> bool {
        self.token == other.token && self.start_h < other.end_h() && other.start_h < self.end_h()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TokenError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("account {0} is not a verified identity")]
    UnverifiedIdentity(AccountId),
    #[error("bandwidth must be positive, got {0} MHz")]
    InvalidBandwidth(f64),
    #[error("unknown asset {0:?}")]
    UnknownAsset(AssetId),
    #[error("unknown token {0:?}")]
    UnknownToken(TokenId),
    #[error("asset {0:?} is already fractionalized")]
    AlreadyFractionalized(AssetId),
    #[error("slice count must be at least 1, got {0}")]
    InvalidCount(u32),
    #[error("{account} does not hold {token:?}")]
    NotHolder { token: TokenId, account: AccountId },
    #[error("token {0:?} is locked")]
    TokenLocked(TokenId),
    #[error("token {0:?} is already locked")]
    TokensAlreadyLocked(TokenId),
    #[error("usage right of {0} h is shorter than one hour")]
    SubHourDuration(f64),
    #[error("usage right duration {0} h is not a whole number of hours")]
    FractionalDuration(f64),
    #[error("usage right overlaps existing right {0}")]
    OverlappingRight(u64),
}

#[derive(Debug, Clone)]
struct AssetEntry {
    asset: SpectrumAsset,
    slices: Vec<SliceToken>,
}

/// Owns every asset, slice and usage right of a run.
#[derive(Debug, Clone, Default)]
pub struct TokenRegistry {
    assets: BTreeMap<AssetId, AssetEntry>,
    locked: BTreeSet<TokenId>,
    rights: BTreeMap<TokenId, Vec<UsageRight>>,
    next_asset: u64,
    next_right: u64,
}

impl TokenRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the asset and records its minting on the ledger.
    pub fn register_asset(
        &mut self,
        ledger: &mut Ledger,
        desc: AssetDescriptor,
    ) -> Result<SpectrumAsset, TokenError> {
        if !ledger.is_verified(desc.owner) {
            return Err(TokenError::UnverifiedIdentity(desc.owner));
        }
        if !(desc.bandwidth_mhz > 0.0) {
            return Err(TokenError::InvalidBandwidth(desc.bandwidth_mhz));
        }
        let id = AssetId(self.next_asset);
        ledger.record(Payload::MintAsset { asset: id.0, owner: desc.owner })?;
        self.next_asset += 1;
        let asset = SpectrumAsset {
            id,
            band_center_ghz: desc.band_center_ghz,
            bandwidth_mhz: desc.bandwidth_mhz,
            owner: desc.owner,
            metadata: desc.metadata,
            value_estimate: desc.value_estimate,
        };
        self.assets.insert(id, AssetEntry { asset: asset.clone(), slices: Vec::new() });
        Ok(asset)
    }

    pub fn fractionalize(&mut self, asset: AssetId, n: u32) -> Result<&[SliceToken], TokenError> {
        let entry = self.assets.get_mut(&asset).ok_or(TokenError::UnknownAsset(asset))?;
        if !entry.slices.is_empty() {
            return Err(TokenError::AlreadyFractionalized(asset));
        }
        if n < 1 {
            return Err(TokenError::InvalidCount(n));
        }
        let width = entry.asset.bandwidth_mhz / n as f64;
        let owner = entry.asset.owner;
        entry.slices = (0..n)
            .map(|index| SliceToken { id: TokenId { asset, index }, slice_bandwidth_mhz: width, holder: owner })
            .collect();
        Ok(&entry.slices)
    }

    pub fn asset(&self, id: AssetId) -> Option<&SpectrumAsset> {
        self.assets.get(&id).map(|e| &e.asset)
    }

    pub fn assets(&self) -> impl Iterator<Item = &SpectrumAsset> {
        self.assets.values().map(|e| &e.asset)
    }

    pub fn slices(&self, asset: AssetId) -> &[SliceToken] {
        self.assets.get(&asset).map(|e| e.slices.as_slice()).unwrap_or(&[])
    }

    pub fn slice(&self, token: TokenId) -> Option<&SliceToken> {
        self.assets.get(&token.asset)?.slices.get(token.index as usize)
    }

    pub fn holder(&self, token: TokenId) -> Option<AccountId> {
        self.slice(token).map(|s| s.holder)
    }

    pub fn is_locked(&self, token: TokenId) -> bool {
        self.locked.contains(&token)
    }

    /// Moves one slice and records the transfer on the ledger.
    pub fn transfer_slice(
        &mut self,
        ledger: &mut Ledger,
        token: TokenId,
        from: AccountId,
        to: AccountId,
    ) -> Result<(), TokenError> {
        let holder = self.holder(token).ok_or(TokenError::UnknownToken(token))?;
        if holder != from {
            return Err(TokenError::NotHolder { token, account: from });
        }
        if self.is_locked(token) {
            return Err(TokenError::TokenLocked(token));
        }
        ledger.record(Payload::SliceTransfer { asset: token.asset.0, slice: token.index, from, to })?;
        self.slice_mut(token).holder = to;
        Ok(())
    }

    fn slice_mut(&mut self, token: TokenId) -> &mut SliceToken {
        &mut self.assets.get_mut(&token.asset).expect("checked").slices[token.index as usize]
    }

    /// Slices no longer held by the registering owner.
    pub fn sold_count(&self, asset: AssetId) -> usize {
        match self.assets.get(&asset) {
            Some(e) => e.slices.iter().filter(|s| s.holder != e.asset.owner).count(),
            None => 0,
        }
    }

    /// True once every slice of a fractionalized asset has left the owner.
    pub fn is_fully_sold(&self, asset: AssetId) -> bool {
        let n = self.slices(asset).len();
        n > 0 && self.sold_count(asset) == n
    }

    /// Locks all tokens for `owner`, or none of them.
    pub fn lock_tokens(&mut self, tokens: &[TokenId], owner: AccountId) -> Result<(), TokenError> {
        let mut seen = BTreeSet::new();
        for &t in tokens {
            let holder = self.holder(t).ok_or(TokenError::UnknownToken(t))?;
            if holder != owner {
                return Err(TokenError::NotHolder { token: t, account: owner });
            }
            if self.is_locked(t) || !seen.insert(t) {
                return Err(TokenError::TokensAlreadyLocked(t));
            }
        }
        self.locked.extend(tokens.iter().copied());
        Ok(())
    }

    pub fn unlock_tokens(&mut self, tokens: &[TokenId]) {
        for t in tokens {
            self.locked.remove(t);
        }
    }

    /// Validates a prospective right against the rights already minted and
    /// against `pending` (rights not yet minted, e.g. a channel schedule).
    pub fn check_usage_right(
        &self,
        token: TokenId,
        start_h: u64,
        duration_h: f64,
        pending: &[UsageRight],
    ) -> Result<u64, TokenError> {
        if self.slice(token).is_none() {
            return Err(TokenError::UnknownToken(token));
        }
        if !(duration_h >= 1.0) {
            return Err(TokenError::SubHourDuration(duration_h));
        }
        if duration_h.fract() != 0.0 {
            return Err(TokenError::FractionalDuration(duration_h));
        }
        let probe = UsageRight {
            id: u64::MAX,
            token,
            start_h,
            duration_h: duration_h as u64,
            grantee: AccountId(0),
        };
        let minted = self.rights.get(&token).into_iter().flatten();
        if let Some(clash) = minted.chain(pending).find(|r| r.overlaps(&probe)) {
            return Err(TokenError::OverlappingRight(clash.id));
        }
        Ok(probe.duration_h)
    }

    pub fn mint_usage_right(
        &mut self,
        token: TokenId,
        start_h: u64,
        duration_h: f64,
        grantee: AccountId,
    ) -> Result<UsageRight, TokenError> {
        let duration_h = self.check_usage_right(token, start_h, duration_h, &[])?;
        let right = UsageRight { id: self.allocate_right_id(), token, start_h, duration_h, grantee };
        self.rights.entry(token).or_default().push(right.clone());
        Ok(right)
    }

    pub fn allocate_right_id(&mut self) -> u64 {
        let id = self.next_right;
        self.next_right += 1;
        id
    }

    pub fn usage_rights(&self, token: TokenId) -> &[UsageRight] {
        self.rights.get(&token).map(|v| v.as_slice()).unwrap_or(&[])
    }
}
