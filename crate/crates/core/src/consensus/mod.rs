// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! The per-player state machine: epochs of propose, prevote and precommit at
//! each height, with locking, timeouts and the skip rule.

mod player;
mod votes;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Block, ChainError, Digest, Message, MessageRecord, PlayerId};
use crate::ledger::{Ledger, LedgerError, RewardRecord, SlashEvent};
use crate::proofs::{DeviationForm, ProofKind};

pub use player::{init_player, PlayerConfig, PlayerState};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ConsensusError {
    #[error("no active players")]
    NoActivePlayers,
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
    #[error("timeout schedule needs positive base and increment")]
    BadTimeouts,
    #[error("decision rejected: {0}")]
    InvalidDecision(&'static str),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// The proposer of epoch `epoch` at height `height`: round robin over
/// players with positive share, offset by `height + epoch`.
pub fn proposer(height: u64, epoch: u64, ledger: &Ledger) -> Result<PlayerId, ConsensusError> {
    let active = ledger.active_players();
    if active.is_empty() {
        return Err(ConsensusError::NoActivePlayers);
    }
    let idx = (height + epoch).wrapping_sub(2) % active.len() as u64;
    Ok(active[idx as usize])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Propose,
    Prevote,
    Precommit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutKind {
    Propose,
    Prevote,
    Precommit,
}

/// `timeout(e) = base + increment * (e - 1)`, with optional per-epoch
/// overrides. Overrides must keep the schedule increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeoutSchedule {
    base: u64,
    increment: u64,
    #[serde(default)]
    overrides: BTreeMap<u64, u64>,
}

impl TimeoutSchedule {
    pub fn new(base: u64, increment: u64) -> Result<Self, ConsensusError> {
        if base == 0 || increment == 0 {
            return Err(ConsensusError::BadTimeouts);
        }
        Ok(Self { base, increment, overrides: BTreeMap::new() })
    }

    /// Replaces the duration of individual epochs. Rejected unless the
    /// resulting schedule is still strictly increasing.
    pub fn with_overrides(mut self, overrides: BTreeMap<u64, u64>) -> Result<Self, ConsensusError> {
        self.overrides = overrides;
        let last = self.overrides.keys().next_back().copied().unwrap_or(0);
        let increasing = (1..=last + 1).all(|e| self.duration(e) < self.duration(e + 1));
        if self.overrides.contains_key(&0) || !increasing {
            return Err(ConsensusError::BadTimeouts);
        }
        Ok(self)
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn increment(&self) -> u64 {
        self.increment
    }

    pub fn overrides(&self) -> &BTreeMap<u64, u64> {
        &self.overrides
    }

    /// Re-checks a schedule built by deserialisation.
    pub fn validated(self) -> Result<Self, ConsensusError> {
        Self::new(self.base, self.increment)?.with_overrides(self.overrides)
    }

    pub fn duration(&self, epoch: u64) -> u64 {
        if let Some(&d) = self.overrides.get(&epoch) {
            return d;
        }
        self.base + self.increment * epoch.saturating_sub(1)
    }
}

impl Default for TimeoutSchedule {
    fn default() -> Self {
        Self { base: 4, increment: 2, overrides: BTreeMap::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeoutRequest {
    pub kind: TimeoutKind,
    pub height: u64,
    pub epoch: u64,
    pub fire_round: u64,
}

/// Upon-rules, in listing order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Fresh proposal: prevote.
    A,
    /// Re-proposal backed by a prevote quorum: prevote.
    B,
    /// Any prevote quorum: arm the prevote timeout.
    C,
    /// Prevote quorum for the proposal: lock and precommit.
    D,
    /// Nil prevote quorum: precommit nil.
    E,
    /// Any precommit quorum: arm the precommit timeout.
    F,
    /// Nil precommit quorum: next epoch.
    G,
    /// Precommit quorum for a proposal in any epoch: decide.
    H,
    /// More than a third in a later epoch: skip to it.
    I,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Rule { rule: Rule, height: u64, epoch: u64 },
    Timeout { kind: TimeoutKind, height: u64, epoch: u64 },
    EpochStarted { height: u64, epoch: u64, entry: ProofKind },
    Sent { message: MessageRecord, digest: Digest },
    Deviation { offender: PlayerId, form: DeviationForm, height: u64 },
    Decided { height: u64, epoch: u64, digest: Digest },
}

/// Effects of one state-machine step.
#[derive(Clone, Debug, Default)]
pub struct Outbox {
    pub to_broadcast: Vec<Message>,
    pub timeouts: Vec<TimeoutRequest>,
    /// Blocks decided during this step, in height order.
    pub decided: Vec<(u64, Block)>,
    pub rewards: Vec<RewardRecord>,
    pub slashes: Vec<SlashEvent>,
    pub events: Vec<TraceEvent>,
}

impl Outbox {
    pub fn is_empty(&self) -> bool {
        self.to_broadcast.is_empty()
            && self.timeouts.is_empty()
            && self.decided.is_empty()
            && self.events.is_empty()
    }

    pub fn extend(&mut self, other: Outbox) {
        self.to_broadcast.extend(other.to_broadcast);
        self.timeouts.extend(other.timeouts);
        self.decided.extend(other.decided);
        self.rewards.extend(other.rewards);
        self.slashes.extend(other.slashes);
        self.events.extend(other.events);
    }
}
