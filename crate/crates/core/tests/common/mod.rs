// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use tenderstake::consensus::{
    init_player, Outbox, PlayerConfig, PlayerState, TimeoutRequest, TraceEvent,
};
use tenderstake::domain::rational::{int, ratio};
use tenderstake::domain::{Genesis, Keyring, Message, PayloadPredicate, PlayerId};

pub fn quarters() -> Arc<Genesis> {
    Arc::new(Genesis::equal(4, int(100), int(12), PayloadPredicate::MaxLen(64)).unwrap())
}

pub fn genesis_of(shares: &[(i64, i64)]) -> Arc<Genesis> {
    let shares = shares.iter().map(|&(a, b)| ratio(a, b)).collect();
    Arc::new(Genesis::new(shares, int(100), int(12), PayloadPredicate::MaxLen(64)).unwrap())
}

/// Every broadcast reaches every player in FIFO order; when the queue is
/// empty the earliest pending timeout fires.
pub struct Lockstep {
    pub players: Vec<PlayerState>,
    pub keys: Arc<Keyring>,
    queue: VecDeque<Message>,
    timers: BTreeMap<(u64, usize, u64), (usize, TimeoutRequest)>,
    seq: u64,
    pub round: u64,
    pub events: Vec<(PlayerId, TraceEvent)>,
    pub sent: Vec<Message>,
    /// Drop messages from these senders instead of delivering them.
    pub muted: Vec<PlayerId>,
}

impl Lockstep {
    pub fn new(genesis: Arc<Genesis>) -> Self {
        let keys = Arc::new(Keyring::new(genesis.num_players(), 7));
        let mut net = Self {
            players: Vec::new(),
            keys: Arc::clone(&keys),
            queue: VecDeque::new(),
            timers: BTreeMap::new(),
            seq: 0,
            round: 0,
            events: Vec::new(),
            sent: Vec::new(),
            muted: Vec::new(),
        };
        for p in genesis.players() {
            let (st, out) =
                init_player(Arc::clone(&genesis), p, Arc::clone(&keys), PlayerConfig::default())
                    .unwrap();
            net.players.push(st);
            net.absorb(p.index(), out);
        }
        net
    }

    pub fn absorb(&mut self, idx: usize, out: Outbox) {
        let id = PlayerId::from_index(idx);
        for m in out.to_broadcast {
            self.sent.push(m.clone());
            if !self.muted.contains(&m.sender) {
                self.queue.push_back(m);
            }
        }
        for t in out.timeouts {
            self.seq += 1;
            self.timers.insert((t.fire_round, idx, self.seq), (idx, t));
        }
        self.events.extend(out.events.into_iter().map(|e| (id, e)));
    }

    pub fn inject(&mut self, msg: Message) {
        self.sent.push(msg.clone());
        self.queue.push_back(msg);
    }

    /// One delivery or one timeout. Returns false when nothing is left.
    pub fn step(&mut self) -> bool {
        if let Some(msg) = self.queue.pop_front() {
            for i in 0..self.players.len() {
                let out = self.players[i].handle_message(msg.clone(), self.round);
                self.absorb(i, out);
            }
            return true;
        }
        let Some((&key, _)) = self.timers.iter().next() else { return false };
        let (idx, t) = self.timers.remove(&key).unwrap();
        self.round = self.round.max(t.fire_round);
        let out = self.players[idx].handle_timeout(t.kind, t.height, t.epoch, self.round);
        self.absorb(idx, out);
        true
    }

    pub fn run_until_height(&mut self, decided: u64, max_steps: usize) {
        for _ in 0..max_steps {
            if self.players.iter().all(|p| p.chain().height() >= decided) {
                return;
            }
            if !self.step() {
                break;
            }
        }
    }

    pub fn deviations(&self) -> Vec<&TraceEvent> {
        self.events
            .iter()
            .filter(|(_, e)| matches!(e, TraceEvent::Deviation { .. }))
            .map(|(_, e)| e)
            .collect()
    }
}

/// Hand-routed cluster: nothing moves unless a test delivers it.
pub struct Cluster {
    pub players: Vec<PlayerState>,
    pub keys: Arc<Keyring>,
    pub sent: Vec<Message>,
    pub timers: Vec<(PlayerId, TimeoutRequest)>,
    pub events: Vec<(PlayerId, TraceEvent)>,
    pub decided: Vec<(PlayerId, u64)>,
}

impl Cluster {
    pub fn new(genesis: Arc<Genesis>) -> Self {
        Self::with_config(genesis, PlayerConfig::default())
    }

    pub fn with_config(genesis: Arc<Genesis>, config: PlayerConfig) -> Self {
        let keys = Arc::new(Keyring::new(genesis.num_players(), 7));
        let mut c = Self {
            players: Vec::new(),
            keys: Arc::clone(&keys),
            sent: Vec::new(),
            timers: Vec::new(),
            events: Vec::new(),
            decided: Vec::new(),
        };
        for p in genesis.players() {
            let (st, out) =
                init_player(Arc::clone(&genesis), p, Arc::clone(&keys), config.clone()).unwrap();
            c.players.push(st);
            c.absorb(p, out);
        }
        c
    }

    pub fn player(&self, id: u32) -> &PlayerState {
        &self.players[id as usize - 1]
    }

    fn absorb(&mut self, id: PlayerId, out: Outbox) {
        self.sent.extend(out.to_broadcast);
        self.timers.extend(out.timeouts.into_iter().map(|t| (id, t)));
        self.decided.extend(out.decided.into_iter().map(|(h, _)| (id, h)));
        self.events.extend(out.events.into_iter().map(|e| (id, e)));
    }

    /// Delivers `msg` to each of `to`, returning what they sent in response.
    pub fn deliver(&mut self, msg: &Message, to: &[u32]) -> Vec<Message> {
        let before = self.sent.len();
        for &p in to {
            let out = self.players[p as usize - 1].handle_message(msg.clone(), 0);
            self.absorb(PlayerId(p), out);
        }
        self.sent[before..].to_vec()
    }

    /// Delivers every message sent so far that matches `pred`, in send order.
    pub fn deliver_where(&mut self, pred: impl Fn(&Message) -> bool, to: &[u32]) -> Vec<Message> {
        let before = self.sent.len();
        let batch: Vec<Message> = self.sent.iter().filter(|m| pred(m)).cloned().collect();
        for m in &batch {
            self.deliver(m, to);
        }
        self.sent[before..].to_vec()
    }

    /// Fires `who`'s pending timeout of `kind` for its current height and epoch.
    pub fn fire(&mut self, who: u32, kind: tenderstake::consensus::TimeoutKind) -> Vec<Message> {
        let id = PlayerId(who);
        let st = &self.players[who as usize - 1];
        let (h, e) = (st.height(), st.epoch());
        let pos = self
            .timers
            .iter()
            .position(|(p, t)| *p == id && t.kind == kind && t.height == h && t.epoch == e)
            .unwrap_or_else(|| panic!("{id} has no {kind:?} timeout at ({h},{e})"));
        let (_, t) = self.timers.remove(pos);
        let before = self.sent.len();
        let out =
            self.players[who as usize - 1].handle_timeout(t.kind, t.height, t.epoch, t.fire_round);
        self.absorb(id, out);
        self.sent[before..].to_vec()
    }

    pub fn last_from(&self, who: u32, tag: tenderstake::domain::Tag) -> Option<&Message> {
        self.sent.iter().rev().find(|m| m.sender == PlayerId(who) && m.tag == tag)
    }
}
