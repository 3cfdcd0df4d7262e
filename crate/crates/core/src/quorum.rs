// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Stake-weighted vote tallies.
//!
//! A tally passes a threshold of `x/3` only when the combined voting share of
//! distinct senders is strictly greater than `x/3` of the total stake. A
//! player named as a deviator in the value under vote contributes nothing,
//! and the threshold is not rescaled to compensate.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::domain::rational::{self, Rational};
use crate::domain::{Digest, PlayerId, SignedHeader, Tag};
use crate::ledger::Ledger;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum QuorumError {
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
    #[error("vote does not match the set's key")]
    KeyMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threshold {
    OneThird,
    TwoThirds,
}

impl Threshold {
    pub fn value(self) -> Rational {
        match self {
            Threshold::OneThird => rational::ratio(1, 3),
            Threshold::TwoThirds => rational::ratio(2, 3),
        }
    }
}

/// Shares as seen on one player's chain, plus the deviators named by the
/// value being voted on.
#[derive(Clone, Debug)]
pub struct VoteContext<'a> {
    pub ledger: &'a Ledger,
    pub proposed_deviators: BTreeSet<PlayerId>,
}

impl<'a> VoteContext<'a> {
    pub fn new(ledger: &'a Ledger) -> Self {
        Self { ledger, proposed_deviators: BTreeSet::new() }
    }

    pub fn with_deviators(ledger: &'a Ledger, proposed_deviators: BTreeSet<PlayerId>) -> Self {
        Self { ledger, proposed_deviators }
    }
}

pub fn voting_share(player: PlayerId, ctx: &VoteContext<'_>) -> Result<Rational, QuorumError> {
    let share = ctx.ledger.share(player).ok_or(QuorumError::UnknownPlayer(player))?;
    if ctx.proposed_deviators.contains(&player) || ctx.ledger.is_slashed(player) {
        Ok(rational::zero())
    } else {
        Ok(share.clone())
    }
}

/// Combined voting share of the distinct players in `senders`. Unknown
/// players contribute nothing.
pub fn tally(senders: impl IntoIterator<Item = PlayerId>, ctx: &VoteContext<'_>) -> Rational {
    let distinct: BTreeSet<PlayerId> = senders.into_iter().collect();
    distinct.into_iter().filter_map(|p| voting_share(p, ctx).ok()).sum()
}

pub fn exceeds(
    senders: impl IntoIterator<Item = PlayerId>,
    threshold: Threshold,
    ctx: &VoteContext<'_>,
) -> bool {
    tally(senders, ctx) > threshold.value()
}

pub fn tally_exceeds(votes: &VoteSet, threshold: Threshold, ctx: &VoteContext<'_>) -> bool {
    exceeds(votes.senders(), threshold, ctx)
}

/// Which values a vote set accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueSelector {
    Any,
    Nil,
    Value(Digest),
}

impl ValueSelector {
    pub fn matches(self, value_ref: Option<Digest>) -> bool {
        match self {
            ValueSelector::Any => true,
            ValueSelector::Nil => value_ref.is_none(),
            ValueSelector::Value(d) => value_ref == Some(d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VoteKey {
    pub tag: Tag,
    pub height: u64,
    pub epoch: u64,
    pub value: ValueSelector,
}

impl VoteKey {
    pub fn matches(&self, vote: &SignedHeader) -> bool {
        vote.tag == self.tag
            && vote.height == self.height
            && vote.epoch == self.epoch
            && self.value.matches(vote.value_ref)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Insert {
    Added,
    Duplicate,
    /// The sender already voted differently; the earlier vote is returned.
    Conflict(Box<SignedHeader>),
}

/// At most one vote per sender, all matching one key.
#[derive(Clone, Debug)]
pub struct VoteSet {
    key: VoteKey,
    votes: BTreeMap<PlayerId, SignedHeader>,
}

impl VoteSet {
    pub fn new(key: VoteKey) -> Self {
        Self { key, votes: BTreeMap::new() }
    }

    /// Collects the matching votes from `votes`, keeping the first per sender.
    pub fn collect<'a>(key: VoteKey, votes: impl IntoIterator<Item = &'a SignedHeader>) -> Self {
        let mut set = Self::new(key);
        for v in votes {
            if key.matches(v) {
                let _ = set.insert(v.clone());
            }
        }
        set
    }

    pub fn key(&self) -> &VoteKey {
        &self.key
    }

    pub fn insert(&mut self, vote: SignedHeader) -> Result<Insert, QuorumError> {
        if !self.key.matches(&vote) {
            return Err(QuorumError::KeyMismatch);
        }
        match self.votes.get(&vote.sender) {
            Some(existing) if existing.same_content(&vote) => Ok(Insert::Duplicate),
            Some(existing) => Ok(Insert::Conflict(Box::new(existing.clone()))),
            None => {
                self.votes.insert(vote.sender, vote);
                Ok(Insert::Added)
            }
        }
    }

    pub fn senders(&self) -> impl Iterator<Item = PlayerId> + '_ {
        self.votes.keys().copied()
    }

    pub fn votes(&self) -> impl Iterator<Item = &SignedHeader> {
        self.votes.values()
    }

    pub fn into_votes(self) -> Vec<SignedHeader> {
        self.votes.into_values().collect()
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }
}
