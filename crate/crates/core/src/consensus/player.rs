// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use sha2::{Digest as _, Sha256};

use super::votes::EpochVotes;
use super::{
    proposer, ConsensusError, Outbox, Rule, Step, TimeoutKind, TimeoutRequest, TimeoutSchedule,
    TraceEvent,
};
use crate::domain::{
    value_valid, Block, Blockchain, Body, Digest, Genesis, Keyring, Message, PlayerId, Proof,
    RestrictedSigner, SignedHeader, Tag, Value,
};
use crate::ledger::{settle_decision, Ledger, RewardRecord, Settlement};
use crate::proofs::{
    detect_deviation, verify_justification, DeviationForm, DeviationProof, Justification,
    MessageHistory, ProofKind, TransitionProof,
};
use crate::quorum::{ValueSelector, VoteContext};
use crate::view::ChainView;

/// Per-player knobs supplied by whoever runs the player.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PlayerConfig {
    pub timeouts: TimeoutSchedule,
    /// Seed for the payloads this player proposes.
    pub payload_seed: u64,
}

/// One player's protocol state.
#[derive(Clone, Debug)]
pub struct PlayerState {
    id: PlayerId,
    keys: Arc<Keyring>,
    signer: RestrictedSigner,
    config: PlayerConfig,
    chain: Blockchain,
    /// Ledger snapshots: genesis, then one per decided block.
    ledgers: Vec<Ledger>,
    epoch: u64,
    step: Step,
    lock_value: Option<Value>,
    lock_epoch: i64,
    valid_value: Option<Value>,
    valid_epoch: i64,
    /// Prevote quorum for `valid_value`, attached when re-proposing it.
    valid_quorum: Option<Justification>,
    /// Why this player is in the current epoch.
    entry_proof: Justification,
    /// Any-value prevote quorum for the current epoch; backs a nil precommit
    /// on prevote timeout.
    precommit_proof: Option<Justification>,
    /// Any-value precommit quorum for the current epoch; backs entry into
    /// the next epoch on precommit timeout.
    next_entry: Option<Justification>,
    dev_proofs: BTreeMap<PlayerId, DeviationProof>,
    /// Offenders this player already broadcast a slash for.
    announced: BTreeSet<PlayerId>,
    history: MessageHistory,
    votes: EpochVotes,
    fired: BTreeSet<(u64, u64, Rule)>,
    buffer: Vec<Message>,
    validity: BTreeMap<Digest, bool>,
}

/// Creates player `id` and runs the start of epoch 1 at round 0.
pub fn init_player(
    genesis: Arc<Genesis>,
    id: PlayerId,
    keys: Arc<Keyring>,
    config: PlayerConfig,
) -> Result<(PlayerState, Outbox), ConsensusError> {
    if genesis.share(id).is_none() || !keys.is_known(id) {
        return Err(ConsensusError::UnknownPlayer(id));
    }
    let ledger = Ledger::from_genesis(Arc::clone(&genesis));
    proposer(1, 1, &ledger)?;
    let mut st = PlayerState {
        id,
        signer: keys.restricted([id].into()),
        keys,
        config,
        chain: Blockchain::new(&genesis),
        ledgers: vec![ledger],
        epoch: 1,
        step: Step::Propose,
        lock_value: None,
        lock_epoch: -1,
        valid_value: None,
        valid_epoch: -1,
        valid_quorum: None,
        entry_proof: Justification::new(ProofKind::Genesis, vec![]),
        precommit_proof: None,
        next_entry: None,
        dev_proofs: BTreeMap::new(),
        announced: BTreeSet::new(),
        history: MessageHistory::new(),
        votes: EpochVotes::new(1),
        fired: BTreeSet::new(),
        buffer: Vec::new(),
        validity: BTreeMap::new(),
    };
    let mut out = Outbox::default();
    st.start_epoch(1, Justification::new(ProofKind::Genesis, vec![]), 0, &mut out);
    Ok((st, out))
}

impl PlayerState {
    pub fn id(&self) -> PlayerId {
        self.id
    }

    /// The height under consensus.
    pub fn height(&self) -> u64 {
        self.chain.height() + 1
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn step(&self) -> Step {
        self.step
    }

    pub fn lock_value(&self) -> Option<&Value> {
        self.lock_value.as_ref()
    }

    pub fn lock_epoch(&self) -> i64 {
        self.lock_epoch
    }

    pub fn valid_value(&self) -> Option<&Value> {
        self.valid_value.as_ref()
    }

    pub fn valid_epoch(&self) -> i64 {
        self.valid_epoch
    }

    pub fn chain(&self) -> &Blockchain {
        &self.chain
    }

    pub fn ledger(&self) -> &Ledger {
        self.ledgers.last().expect("genesis ledger is always present")
    }

    pub fn ledgers(&self) -> &[Ledger] {
        &self.ledgers
    }

    pub fn keys(&self) -> &Arc<Keyring> {
        &self.keys
    }

    pub fn config(&self) -> &PlayerConfig {
        &self.config
    }

    pub fn dev_proofs(&self) -> &BTreeMap<PlayerId, DeviationProof> {
        &self.dev_proofs
    }

    pub fn history(&self) -> &MessageHistory {
        &self.history
    }

    pub fn view(&self) -> ChainView<'_> {
        ChainView::new(&self.chain, &self.ledgers, &self.keys)
    }

    /// Processes one delivered message.
    pub fn handle_message(&mut self, msg: Message, round: u64) -> Outbox {
        let mut out = Outbox::default();
        self.receive(msg, round, &mut out);
        out
    }

    /// Processes a timeout scheduled earlier. Stale timeouts are ignored.
    pub fn handle_timeout(
        &mut self,
        kind: TimeoutKind,
        height: u64,
        epoch: u64,
        round: u64,
    ) -> Outbox {
        let mut out = Outbox::default();
        if height != self.height() || epoch != self.epoch {
            return out;
        }
        let fired = match kind {
            TimeoutKind::Propose if self.step == Step::Propose => {
                self.prevote(None, vec![self.entry_proof.clone()], &mut out);
                true
            }
            TimeoutKind::Prevote if self.step == Step::Prevote => {
                match self.precommit_proof.clone() {
                    Some(q) => {
                        self.precommit(None, q, &mut out);
                        true
                    }
                    None => false,
                }
            }
            TimeoutKind::Precommit => match self.next_entry.take() {
                Some(entry) => {
                    self.start_epoch(epoch + 1, entry, round, &mut out);
                    true
                }
                None => false,
            },
            _ => false,
        };
        if fired {
            out.events.insert(0, TraceEvent::Timeout { kind, height, epoch });
            self.settle(round, &mut out);
        }
        out
    }

    /// Enters `epoch` at the current height, justified by `entry`.
    pub fn start_epoch(&mut self, epoch: u64, entry: Justification, round: u64, out: &mut Outbox) {
        let height = self.height();
        self.epoch = epoch;
        self.step = Step::Propose;
        self.precommit_proof = None;
        self.next_entry = None;
        out.events.push(TraceEvent::EpochStarted { height, epoch, entry: entry.kind });
        self.entry_proof = entry;

        if proposer(height, epoch, self.ledger()).ok() == Some(self.id) {
            let (value, valid_epoch, parts) = match (&self.valid_value, &self.valid_quorum) {
                (Some(v), Some(q)) => {
                    (v.clone(), self.valid_epoch, vec![self.entry_proof.clone(), q.clone()])
                }
                _ => (self.fresh_value(epoch), -1, vec![self.entry_proof.clone()]),
            };
            let msg = Message::new(Tag::Proposal, height, epoch, self.id)
                .with_value_ref(Some(value.digest()))
                .with_valid_epoch(valid_epoch)
                .with_body(Body::Value(value))
                .with_proof(Proof::Transition(TransitionProof::new(parts)));
            self.send(msg, out);
        } else {
            self.schedule(TimeoutKind::Propose, round, out);
        }
    }

    /// Applies a decision: slashes new deviators, appends the block, pays
    /// rewards and resets per-height state. The caller starts epoch 1.
    pub fn apply_decision(
        &mut self,
        value: Value,
        quorum: Justification,
    ) -> Result<Vec<RewardRecord>, ConsensusError> {
        self.decide(value, quorum).map(|s| s.rewards)
    }

    fn decide(
        &mut self,
        value: Value,
        quorum: Justification,
    ) -> Result<Settlement, ConsensusError> {
        let height = self.height();
        {
            let view = self.view();
            if !value_valid(&value, &view) {
                return Err(ConsensusError::InvalidDecision("value is not valid"));
            }
            let matches = matches!(quorum.kind, ProofKind::PrecommitQuorum { .. })
                && quorum.value.as_ref() == Some(&value);
            if !matches || !verify_justification(&quorum, height, &view) {
                return Err(ConsensusError::InvalidDecision("no precommit quorum for value"));
            }
        }
        let settlement = settle_decision(self.ledger(), &self.chain.deviators(), &value)?;
        self.chain.append(Block { value, commit_quorum: quorum })?;
        self.ledgers.push(settlement.ledger.clone());

        let named = self.chain.deviators();
        self.dev_proofs.retain(|p, _| !named.contains(p));
        self.epoch = 1;
        self.step = Step::Propose;
        self.lock_value = None;
        self.lock_epoch = -1;
        self.valid_value = None;
        self.valid_epoch = -1;
        self.valid_quorum = None;
        self.precommit_proof = None;
        self.next_entry = None;
        self.votes = EpochVotes::new(self.height());
        self.validity.clear();
        Ok(settlement)
    }

    fn receive(&mut self, msg: Message, round: u64, out: &mut Outbox) {
        if !self.keys.verify_message(&msg) || self.ledger().is_slashed(msg.sender) {
            return;
        }
        if msg.height > self.height() {
            self.buffer.push(msg);
            return;
        }
        let header = msg.header();
        if self.history.contains(&header) {
            return;
        }
        let deviation = detect_deviation(&msg, &self.history, &self.view());
        self.history.append(header.clone());
        match deviation {
            Some(dp) => {
                // A message that only contradicts an earlier one may be valid
                // by itself; count it like any other vote.
                let usable = dp.form == DeviationForm::Contradiction
                    && msg.height == self.height()
                    && detect_deviation(&msg, &MessageHistory::new(), &self.view()).is_none();
                self.record_deviation(dp, out);
                if usable {
                    self.votes.insert(&msg, header);
                    self.settle(round, out);
                }
            }
            None if msg.tag == Tag::Slash => {
                if let Proof::Deviation(dp) = &msg.proof {
                    self.record_deviation((**dp).clone(), out);
                }
            }
            None if msg.height == self.height() => {
                self.votes.insert(&msg, header);
                self.settle(round, out);
            }
            None => {}
        }
    }

    /// Runs the upon-rules to a fixpoint, then replays buffered messages if
    /// the height moved.
    fn settle(&mut self, round: u64, out: &mut Outbox) {
        let start = self.height();
        while self.fire_one(round, out) {}
        if self.height() != start {
            for msg in std::mem::take(&mut self.buffer) {
                self.receive(msg, round, out);
            }
        }
    }

    fn record_deviation(&mut self, dp: DeviationProof, out: &mut Outbox) {
        let offender = dp.offender;
        if self.ledger().is_slashed(offender) || self.chain.deviators().contains(&offender) {
            return;
        }
        out.events.push(TraceEvent::Deviation { offender, form: dp.form, height: dp.height() });
        let dp = self.dev_proofs.entry(offender).or_insert(dp).clone();
        if self.announced.insert(offender) {
            let msg = Message::new(Tag::Slash, self.height(), self.epoch, self.id)
                .with_body(Body::Slash { offender })
                .with_proof(Proof::Deviation(Box::new(dp)));
            self.send(msg, out);
        }
    }

    /// Tries each rule in listing order and fires the first that applies.
    fn fire_one(&mut self, round: u64, out: &mut Outbox) -> bool {
        self.rule_a(out)
            || self.rule_b(out)
            || self.rule_c(round, out)
            || self.rule_d(out)
            || self.rule_e(out)
            || self.rule_f(round, out)
            || self.rule_g(round, out)
            || self.rule_h(round, out)
            || self.rule_i(round, out)
    }

    fn log_rule(&mut self, rule: Rule, out: &mut Outbox) {
        out.events.push(TraceEvent::Rule { rule, height: self.height(), epoch: self.epoch });
    }

    fn first_time(&mut self, rule: Rule) -> bool {
        !self.fired.contains(&(self.height(), self.epoch, rule))
    }

    fn mark(&mut self, rule: Rule) {
        self.fired.insert((self.height(), self.epoch, rule));
    }

    fn rule_a(&mut self, out: &mut Outbox) -> bool {
        if self.step != Step::Propose {
            return false;
        }
        let Some(p) = self.votes.proposal(self.epoch).filter(|p| p.valid_epoch == -1).cloned()
        else {
            return false;
        };
        let Some(v) = p.proposed_value().cloned() else { return false };
        self.log_rule(Rule::A, out);
        let unlocked = self.lock_epoch == -1 || self.lock_value.as_ref() == Some(&v);
        if self.is_valid(&v) && unlocked {
            let parts = vec![
                self.entry_proof.clone(),
                Justification::new(ProofKind::Proposal, vec![p.header()]),
            ];
            self.prevote(Some(v.digest()), parts, out);
        } else {
            self.prevote(None, vec![self.entry_proof.clone()], out);
        }
        true
    }

    fn rule_b(&mut self, out: &mut Outbox) -> bool {
        if self.step != Step::Propose {
            return false;
        }
        let e = self.epoch;
        let Some(p) = self.votes.proposal(e).cloned() else { return false };
        let ve = p.valid_epoch;
        if ve < 0 || ve as u64 >= e {
            return false;
        }
        let Some(v) = p.proposed_value().cloned() else { return false };
        // A proposal is stored only after its proof checked out, so the
        // quorum it carries stands in for votes this player never received.
        let carried = || {
            let part = p.transition_proof()?.parts.get(1)?;
            Some(part.evidence.clone())
        };
        let Some(q) = self.value_quorum(Tag::Prevote, ve as u64, &v).or_else(carried) else {
            return false;
        };
        self.log_rule(Rule::B, out);
        let fresher = self.lock_epoch < ve || self.lock_value.as_ref() == Some(&v);
        if self.is_valid(&v) && fresher {
            let parts = vec![
                self.entry_proof.clone(),
                Justification::new(ProofKind::Proposal, vec![p.header()]),
                Justification::new(ProofKind::PrevoteQuorum { epoch: ve as u64 }, q)
                    .with_value(v.clone()),
            ];
            self.prevote(Some(v.digest()), parts, out);
        } else {
            self.prevote(None, vec![self.entry_proof.clone()], out);
        }
        true
    }

    fn rule_c(&mut self, round: u64, out: &mut Outbox) -> bool {
        if self.step != Step::Prevote || !self.first_time(Rule::C) {
            return false;
        }
        let e = self.epoch;
        let Some(q) = self.any_quorum(Tag::Prevote, e, ValueSelector::Any) else { return false };
        self.mark(Rule::C);
        self.log_rule(Rule::C, out);
        self.precommit_proof =
            Some(Justification::new(ProofKind::PrevoteQuorumAny { epoch: e }, q));
        self.schedule(TimeoutKind::Prevote, round, out);
        true
    }

    fn rule_d(&mut self, out: &mut Outbox) -> bool {
        if self.step == Step::Propose || !self.first_time(Rule::D) {
            return false;
        }
        let e = self.epoch;
        let Some(v) = self.votes.proposal(e).and_then(|p| p.proposed_value()).cloned() else {
            return false;
        };
        let Some(q) = self.value_quorum(Tag::Prevote, e, &v) else { return false };
        if !self.is_valid(&v) {
            return false;
        }
        self.mark(Rule::D);
        self.log_rule(Rule::D, out);
        let quorum =
            Justification::new(ProofKind::PrevoteQuorum { epoch: e }, q).with_value(v.clone());
        if self.step == Step::Prevote {
            self.lock_value = Some(v.clone());
            self.lock_epoch = e as i64;
            self.precommit(Some(v.digest()), quorum.clone(), out);
        }
        self.valid_value = Some(v);
        self.valid_epoch = e as i64;
        self.valid_quorum = Some(quorum);
        true
    }

    fn rule_e(&mut self, out: &mut Outbox) -> bool {
        if self.step != Step::Prevote {
            return false;
        }
        let e = self.epoch;
        let Some(q) = self.any_quorum(Tag::Prevote, e, ValueSelector::Nil) else { return false };
        self.log_rule(Rule::E, out);
        self.precommit(None, Justification::new(ProofKind::NilPrevoteQuorum { epoch: e }, q), out);
        true
    }

    fn rule_f(&mut self, round: u64, out: &mut Outbox) -> bool {
        if !self.first_time(Rule::F) {
            return false;
        }
        let e = self.epoch;
        let Some(q) = self.any_quorum(Tag::Precommit, e, ValueSelector::Any) else { return false };
        self.mark(Rule::F);
        self.log_rule(Rule::F, out);
        self.next_entry = Some(Justification::new(ProofKind::PrecommitQuorumAny { epoch: e }, q));
        self.schedule(TimeoutKind::Precommit, round, out);
        true
    }

    fn rule_g(&mut self, round: u64, out: &mut Outbox) -> bool {
        if self.step != Step::Precommit {
            return false;
        }
        let e = self.epoch;
        let Some(q) = self.any_quorum(Tag::Precommit, e, ValueSelector::Nil) else { return false };
        self.log_rule(Rule::G, out);
        let entry = Justification::new(ProofKind::NilPrecommitQuorum { epoch: e }, q);
        self.start_epoch(e + 1, entry, round, out);
        true
    }

    fn rule_h(&mut self, round: u64, out: &mut Outbox) -> bool {
        for e in self.votes.proposal_epochs() {
            let Some(v) = self.votes.proposal(e).and_then(|p| p.proposed_value()).cloned() else {
                continue;
            };
            let Some(q) = self.value_quorum(Tag::Precommit, e, &v) else { continue };
            if !self.is_valid(&v) {
                continue;
            }
            self.log_rule(Rule::H, out);
            let height = self.height();
            let digest = v.digest();
            let quorum = Justification::new(ProofKind::PrecommitQuorum { epoch: e }, q)
                .with_value(v.clone());
            let settlement = self
                .decide(v, quorum)
                .expect("a valid value with a precommit quorum always applies");
            let block = self.chain.blocks().last().cloned().expect("just appended");
            out.events.push(TraceEvent::Decided { height, epoch: e, digest });
            out.decided.push((height, block));
            out.rewards.extend(settlement.rewards);
            out.slashes.extend(settlement.slash);
            self.start_epoch(
                1,
                Justification::new(ProofKind::Decision { height }, vec![]),
                round,
                out,
            );
            return true;
        }
        false
    }

    fn rule_i(&mut self, round: u64, out: &mut Outbox) -> bool {
        let ctx = VoteContext::new(self.ledger());
        let Some((target, evidence)) = self.votes.skip_target(self.epoch, &ctx) else {
            return false;
        };
        self.log_rule(Rule::I, out);
        let entry = Justification::new(ProofKind::Skip { epoch: target }, evidence);
        self.start_epoch(target, entry, round, out);
        true
    }

    fn value_quorum(&self, tag: Tag, epoch: u64, v: &Value) -> Option<Vec<SignedHeader>> {
        let ctx = VoteContext::new(self.ledger());
        self.votes.quorum(tag, epoch, ValueSelector::Value(v.digest()), Some(v), &ctx)
    }

    fn any_quorum(
        &self,
        tag: Tag,
        epoch: u64,
        selector: ValueSelector,
    ) -> Option<Vec<SignedHeader>> {
        let ctx = VoteContext::new(self.ledger());
        self.votes.quorum(tag, epoch, selector, None, &ctx)
    }

    fn is_valid(&mut self, v: &Value) -> bool {
        let digest = v.digest();
        if let Some(&known) = self.validity.get(&digest) {
            return known;
        }
        let ok = value_valid(v, &self.view());
        self.validity.insert(digest, ok);
        ok
    }

    fn fresh_value(&self, epoch: u64) -> Value {
        let height = self.height();
        let mut h = Sha256::new();
        h.update(b"tenderstake/payload/v1");
        h.update(self.config.payload_seed.to_be_bytes());
        h.update(self.id.0.to_be_bytes());
        h.update(height.to_be_bytes());
        h.update(epoch.to_be_bytes());
        let named = self.chain.deviators();
        Value {
            parent_hash: self.chain.head_hash(),
            payload: h.finalize().to_vec(),
            deviators: self
                .dev_proofs
                .iter()
                .filter(|(p, _)| !named.contains(p) && !self.ledger().is_slashed(**p))
                .map(|(_, dp)| dp.clone())
                .collect(),
            proposer: self.id,
            height,
        }
    }

    fn prevote(&mut self, value_ref: Option<Digest>, parts: Vec<Justification>, out: &mut Outbox) {
        let msg = Message::new(Tag::Prevote, self.height(), self.epoch, self.id)
            .with_value_ref(value_ref)
            .with_proof(Proof::Transition(TransitionProof::new(parts)));
        self.send(msg, out);
        self.step = Step::Prevote;
    }

    fn precommit(&mut self, value_ref: Option<Digest>, quorum: Justification, out: &mut Outbox) {
        let msg = Message::new(Tag::Precommit, self.height(), self.epoch, self.id)
            .with_value_ref(value_ref)
            .with_proof(Proof::Transition(TransitionProof::new(vec![quorum])));
        self.send(msg, out);
        self.step = Step::Precommit;
    }

    fn schedule(&self, kind: TimeoutKind, round: u64, out: &mut Outbox) {
        out.timeouts.push(TimeoutRequest {
            kind,
            height: self.height(),
            epoch: self.epoch,
            fire_round: round + self.config.timeouts.duration(self.epoch),
        });
    }

    fn send(&self, msg: Message, out: &mut Outbox) {
        let msg = msg.sign(&self.signer);
        out.events.push(TraceEvent::Sent { message: msg.record(), digest: msg.digest() });
        out.to_broadcast.push(msg);
    }
}
