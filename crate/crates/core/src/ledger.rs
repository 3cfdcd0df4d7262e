// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Stake, shares and rewards, and the slashing adjustment applied when a
//! decided value names new deviators.
//!
//! The arithmetic keeps two exact identities:
//!
//! * `share(p) * reward` is the same at every height for a player that is
//!   never slashed, because slashing divides shares by `1 - slashed` and
//!   multiplies the reward by the same factor.
//! * The bonus paid for removing deviators is sized by their *genesis*
//!   shares, so a player's lifetime bonus stays below
//!   `genesis_share(p) * genesis_reward`.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::rational::{self, Rational};
use crate::domain::{Genesis, PlayerId, Value};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("no deviators to slash")]
    EmptyDeviators,
    #[error("{0} is already slashed")]
    AlreadySlashed(PlayerId),
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
    #[error("slashing {0} would remove all remaining stake")]
    SlashesEverything(String),
}

/// One player's view of stake distribution after some number of decisions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ledger {
    shares: Vec<Rational>,
    stake: Rational,
    reward: Rational,
    slashed: BTreeSet<PlayerId>,
    genesis: Arc<Genesis>,
}

impl Ledger {
    pub fn from_genesis(genesis: Arc<Genesis>) -> Self {
        Self {
            shares: genesis.shares().to_vec(),
            stake: genesis.stake().clone(),
            reward: genesis.reward().clone(),
            slashed: BTreeSet::new(),
            genesis,
        }
    }

    pub fn shares(&self) -> &[Rational] {
        &self.shares
    }

    pub fn share(&self, player: PlayerId) -> Option<&Rational> {
        self.shares.get(player.index())
    }

    /// Total stake in the system.
    pub fn stake(&self) -> &Rational {
        &self.stake
    }

    /// Total reward paid for the next decided value.
    pub fn reward(&self) -> &Rational {
        &self.reward
    }

    pub fn slashed(&self) -> &BTreeSet<PlayerId> {
        &self.slashed
    }

    pub fn is_slashed(&self, player: PlayerId) -> bool {
        self.slashed.contains(&player)
    }

    pub fn genesis(&self) -> &Arc<Genesis> {
        &self.genesis
    }

    pub fn num_players(&self) -> usize {
        self.shares.len()
    }

    pub fn is_known(&self, player: PlayerId) -> bool {
        player.0 >= 1 && player.index() < self.shares.len()
    }

    /// Players with a positive share, in id order.
    pub fn active_players(&self) -> Vec<PlayerId> {
        self.shares
            .iter()
            .enumerate()
            .filter(|(_, s)| rational::is_positive(s))
            .map(|(i, _)| PlayerId::from_index(i))
            .collect()
    }

    /// `share(p) * stake`.
    pub fn absolute_stake(&self, player: PlayerId) -> Rational {
        self.share(player).map_or_else(rational::zero, |s| s * &self.stake)
    }

    /// Combined share of `players`.
    pub fn combined_share<'a>(&self, players: impl IntoIterator<Item = &'a PlayerId>) -> Rational {
        players.into_iter().filter_map(|p| self.share(*p)).sum()
    }
}

/// Outcome of one call to [`adjust_for_slashing`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlashEvent {
    pub height: u64,
    pub new_deviators: BTreeSet<PlayerId>,
    /// Sum of the deviators' shares just before they were removed.
    #[serde(with = "rational::serde_str")]
    pub slashed_share: Rational,
    /// Genesis shares of the deviators times the adjusted reward.
    #[serde(with = "rational::serde_str")]
    pub bonus_pool: Rational,
}

/// Reward paid to one player for one decided height.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub height: u64,
    pub player: PlayerId,
    #[serde(with = "rational::serde_str")]
    pub base_reward: Rational,
    #[serde(with = "rational::serde_str")]
    pub slash_bonus: Rational,
    /// The player's share after the decision.
    #[serde(with = "rational::serde_str")]
    pub share: Rational,
}

/// Removes `new_deviators` from the ledger, renormalising the remaining
/// shares and scaling reward and stake by `1 - slashed_share`, then adds the
/// slash bonus to the total stake.
pub fn adjust_for_slashing(
    ledger: &Ledger,
    new_deviators: &BTreeSet<PlayerId>,
    height: u64,
) -> Result<(Ledger, SlashEvent), LedgerError> {
    if new_deviators.is_empty() {
        return Err(LedgerError::EmptyDeviators);
    }
    for &p in new_deviators {
        if !ledger.is_known(p) {
            return Err(LedgerError::UnknownPlayer(p));
        }
        if ledger.is_slashed(p) {
            return Err(LedgerError::AlreadySlashed(p));
        }
    }
    let slashed_share = ledger.combined_share(new_deviators);
    let remaining = rational::one() - &slashed_share;
    if !rational::is_positive(&remaining) {
        return Err(LedgerError::SlashesEverything(rational::format(&slashed_share)));
    }

    let mut next = ledger.clone();
    for &p in new_deviators {
        next.shares[p.index()] = rational::zero();
    }
    for share in &mut next.shares {
        *share = &*share / &remaining;
    }
    next.reward = &remaining * &ledger.reward;
    next.stake = &remaining * &ledger.stake;
    let genesis_share: Rational =
        new_deviators.iter().filter_map(|p| ledger.genesis.share(*p)).sum();
    let bonus_pool = genesis_share * &next.reward;
    next.stake += &bonus_pool;
    next.slashed.extend(new_deviators.iter().copied());

    let event =
        SlashEvent { height, new_deviators: new_deviators.clone(), slashed_share, bonus_pool };
    Ok((next, event))
}

/// Ledger effect of deciding `value` at `value.height`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settlement {
    pub ledger: Ledger,
    pub slash: Option<SlashEvent>,
    pub rewards: Vec<RewardRecord>,
}

/// Slashes the deviators in `value` not already in `known_deviators`, then
/// pays the per-block reward.
pub fn settle_decision(
    ledger: &Ledger,
    known_deviators: &BTreeSet<PlayerId>,
    value: &Value,
) -> Result<Settlement, LedgerError> {
    let height = value.height;
    let new_deviators: BTreeSet<PlayerId> =
        value.deviator_ids().difference(known_deviators).copied().collect();
    let (mut next, slash) = if new_deviators.is_empty() {
        (ledger.clone(), None)
    } else {
        let (l, e) = adjust_for_slashing(ledger, &new_deviators, height)?;
        (l, Some(e))
    };
    next.stake = &next.stake + &next.reward;

    let rewards = next
        .active_players()
        .into_iter()
        .map(|player| {
            let share = next.shares[player.index()].clone();
            let slash_bonus =
                slash.as_ref().map_or_else(rational::zero, |e| &share * &e.bonus_pool);
            RewardRecord { height, player, base_reward: &share * &next.reward, slash_bonus, share }
        })
        .collect();
    Ok(Settlement { ledger: next, slash, rewards })
}

/// Total slash bonus `player` received across `records`.
pub fn cumulative_slash_income(records: &[RewardRecord], player: PlayerId) -> Rational {
    records.iter().filter(|r| r.player == player).map(|r| r.slash_bonus.clone()).sum()
}
