// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Discrete-round network with a global stabilisation round (GSR).
//!
//! A broadcast in round `r` reaches every player, the sender included, by
//! round `max(r, gsr) + delta`. Within that bound the delivery round is drawn
//! from a seeded generator, so a run is a pure function of its inputs.
//!
//! Correct players echo what they receive. Broadcasts already reach
//! everyone, so echoing only matters for messages the adversary addressed to
//! some players: the first correct recipient forwards them to the rest.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tenderstake::consensus::{Outbox, PlayerState, TimeoutRequest};
use tenderstake::domain::{Digest, Keyring, Message, PlayerId};
use thiserror::Error;

use crate::adversary::{Adversary, Emission, Observation};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreGsrPolicy {
    /// Any delay up to the bound.
    #[default]
    ArbitraryDelay,
    /// Nothing arrives before GSR; messages sent earlier are delivered in
    /// the `delta` rounds after it.
    DropUntilGsrResend,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub gsr: u64,
    pub delta: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pre_gsr_policy: PreGsrPolicy,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("gsr and delta must be at least 1")]
    BadConfig,
    #[error("message claiming to be from {0} does not authenticate")]
    Forged(PlayerId),
    #[error("{0} is not corrupted")]
    NotCorrupted(PlayerId),
    #[error("unknown recipient {0}")]
    UnknownRecipient(PlayerId),
}

impl NetConfig {
    pub fn new(gsr: u64, delta: u64, seed: u64) -> Result<Self, NetError> {
        let cfg = Self { gsr, delta, seed, pre_gsr_policy: PreGsrPolicy::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.gsr == 0 || self.delta == 0 {
            return Err(NetError::BadConfig);
        }
        Ok(())
    }

    /// Latest round a message sent in `round` may arrive.
    pub fn bound(&self, round: u64) -> u64 {
        round.max(self.gsr) + self.delta
    }
}

#[derive(Clone, Debug)]
pub struct InFlight {
    pub msg: Message,
    pub send_round: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryEvent {
    pub to: PlayerId,
    pub from: PlayerId,
    pub digest: Digest,
    pub sent: u64,
}

/// What happened in one round.
#[derive(Clone, Debug, Default)]
pub struct RoundEvents {
    pub round: u64,
    pub deliveries: Vec<DeliveryEvent>,
    /// Every player's outbox, in processing order. Corrupted players'
    /// broadcasts were handed to the adversary rather than sent.
    pub outputs: Vec<(PlayerId, Outbox)>,
    /// Everything put on the wire this round.
    pub sent: Vec<Message>,
    /// Adversary emissions the network refused.
    pub rejected: Vec<(PlayerId, NetError)>,
}

#[derive(Clone, Debug)]
pub struct NetState {
    round: u64,
    seq: u64,
    n: usize,
    keys: Arc<Keyring>,
    in_flight: BTreeMap<(u64, PlayerId, u64), InFlight>,
    timers: BTreeMap<(u64, PlayerId, u64), TimeoutRequest>,
    rng: ChaCha8Rng,
    delivered_log: Vec<Vec<(u64, Digest)>>,
    /// Recipients so far of messages not addressed to everyone.
    partial: BTreeMap<Digest, BTreeSet<PlayerId>>,
}

impl NetState {
    pub fn new(keys: Arc<Keyring>, cfg: &NetConfig) -> Self {
        let n = keys.num_players();
        Self {
            round: 0,
            seq: 0,
            n,
            keys,
            in_flight: BTreeMap::new(),
            timers: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            delivered_log: vec![Vec::new(); n],
            partial: BTreeMap::new(),
        }
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn in_flight(&self) -> impl Iterator<Item = (&(u64, PlayerId, u64), &InFlight)> {
        self.in_flight.iter()
    }

    pub fn pending_timeouts(&self) -> usize {
        self.timers.len()
    }

    /// Digests delivered to `player`, with their delivery rounds, in order.
    pub fn delivered_log(&self, player: PlayerId) -> &[(u64, Digest)] {
        &self.delivered_log[player.index()]
    }

    fn players(&self) -> impl Iterator<Item = PlayerId> {
        (0..self.n).map(PlayerId::from_index)
    }

    fn draw_round(&mut self, cfg: &NetConfig) -> u64 {
        let bound = cfg.bound(self.round);
        let earliest = match cfg.pre_gsr_policy {
            PreGsrPolicy::DropUntilGsrResend if self.round < cfg.gsr => cfg.gsr + 1,
            _ => self.round + 1,
        };
        self.rng.random_range(earliest..=bound)
    }

    /// Schedules one delivery of `msg` to every player, the sender included.
    pub fn schedule_broadcast(&mut self, msg: Message, cfg: &NetConfig) -> Result<(), NetError> {
        let all: Vec<PlayerId> = self.players().collect();
        self.schedule_to(msg, &all, cfg)
    }

    /// Schedules `msg` for the given recipients only.
    pub fn schedule_to(
        &mut self,
        msg: Message,
        recipients: &[PlayerId],
        cfg: &NetConfig,
    ) -> Result<(), NetError> {
        if !self.keys.verify_message(&msg) {
            return Err(NetError::Forged(msg.sender));
        }
        if let Some(&bad) = recipients.iter().find(|p| !self.keys.is_known(**p)) {
            return Err(NetError::UnknownRecipient(bad));
        }
        let reached = recipients.iter().copied().collect::<BTreeSet<_>>();
        if reached.len() < self.n {
            self.partial.entry(msg.digest()).or_default().extend(reached);
        }
        for &to in recipients {
            let at = self.draw_round(cfg);
            self.seq += 1;
            let entry = InFlight { msg: msg.clone(), send_round: self.round };
            self.in_flight.insert((at, to, self.seq), entry);
        }
        Ok(())
    }

    fn echo(&mut self, msg: &Message, digest: Digest, cfg: &NetConfig) {
        let Some(reached) = self.partial.remove(&digest) else { return };
        let rest: Vec<PlayerId> = self.players().filter(|p| !reached.contains(p)).collect();
        // Already authenticated when first scheduled.
        self.schedule_to(msg.clone(), &rest, cfg).expect("echo of an accepted message");
        self.partial.remove(&digest);
    }

    pub fn schedule_timeout(&mut self, player: PlayerId, req: TimeoutRequest) {
        self.seq += 1;
        self.timers.insert((req.fire_round.max(self.round + 1), player, self.seq), req);
    }

    /// Routes outboxes produced in the current round: timeouts are armed,
    /// correct players' broadcasts go on the wire, corrupted players'
    /// broadcasts go to the adversary, whose emissions are then checked and
    /// sent.
    pub fn dispatch(
        &mut self,
        outputs: Vec<(PlayerId, Outbox)>,
        players: &[PlayerState],
        adv: Option<&mut Adversary>,
        cfg: &NetConfig,
        events: &mut RoundEvents,
    ) {
        let corrupted: BTreeSet<PlayerId> =
            adv.as_ref().map(|a| a.corrupted().clone()).unwrap_or_default();
        let mut honest = Vec::new();
        let mut own: BTreeMap<PlayerId, Vec<Message>> = BTreeMap::new();
        for (p, out) in &outputs {
            for t in &out.timeouts {
                self.schedule_timeout(*p, *t);
            }
            if corrupted.contains(p) {
                own.entry(*p).or_default().extend(out.to_broadcast.iter().cloned());
                continue;
            }
            for m in &out.to_broadcast {
                // Correct players sign with their own key; this cannot fail.
                self.schedule_broadcast(m.clone(), cfg).expect("correct player message");
                honest.push(m.clone());
            }
        }
        events.sent.extend(honest.iter().cloned());
        events.outputs.extend(outputs);

        let Some(adv) = adv else { return };
        let obs = Observation { round: self.round, honest: &honest, own: &own, states: players };
        for Emission { msg, recipients } in adv.adversary_act(&obs) {
            let sender = msg.sender;
            let sent = if !corrupted.contains(&sender) {
                Err(NetError::NotCorrupted(sender))
            } else {
                match &recipients {
                    None => self.schedule_broadcast(msg.clone(), cfg),
                    Some(to) => self.schedule_to(msg.clone(), to, cfg),
                }
            };
            match sent {
                Ok(()) => events.sent.push(msg),
                Err(e) => events.rejected.push((sender, e)),
            }
        }
    }

    /// Moves to the next round: hands due messages and timeouts to their
    /// players, then dispatches whatever they produce.
    pub fn advance_round(
        &mut self,
        players: &mut [PlayerState],
        adv: Option<&mut Adversary>,
        cfg: &NetConfig,
    ) -> RoundEvents {
        self.round += 1;
        let round = self.round;
        let mut events = RoundEvents { round, ..RoundEvents::default() };
        let mut outputs = Vec::new();

        let corrupted: BTreeSet<PlayerId> =
            adv.as_ref().map(|a| a.corrupted().clone()).unwrap_or_default();
        let later = self.in_flight.split_off(&(round + 1, PlayerId(0), 0));
        let due = std::mem::replace(&mut self.in_flight, later);
        for ((at, to, _), f) in due {
            assert!(
                at <= cfg.bound(f.send_round),
                "delivery bound broken: sent {} delivered {at}",
                f.send_round
            );
            let digest = f.msg.digest();
            if !corrupted.contains(&to) {
                self.echo(&f.msg, digest, cfg);
            }
            self.delivered_log[to.index()].push((round, digest));
            events.deliveries.push(DeliveryEvent {
                to,
                from: f.msg.sender,
                digest,
                sent: f.send_round,
            });
            outputs.push((to, players[to.index()].handle_message(f.msg, round)));
        }

        let later = self.timers.split_off(&(round + 1, PlayerId(0), 0));
        let due = std::mem::replace(&mut self.timers, later);
        for ((_, p, _), t) in due {
            let out = players[p.index()].handle_timeout(t.kind, t.height, t.epoch, round);
            outputs.push((p, out));
        }

        self.dispatch(outputs, players, adv, cfg, &mut events);
        events
    }
}
