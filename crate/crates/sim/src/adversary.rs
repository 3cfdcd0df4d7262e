// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Scripted Byzantine strategies.
//!
//! Corrupted players keep an ordinary [`PlayerState`] that receives every
//! delivery and runs the protocol. Its broadcasts are not sent directly:
//! they go to [`Adversary::adversary_act`], which decides what each
//! corrupted player actually emits. Emissions are signed with a
//! [`RestrictedSigner`] that only holds the corrupted players' keys.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tenderstake::consensus::PlayerState;
use tenderstake::domain::rational::{ratio, Rational};
use tenderstake::domain::{
    Body, Digest, Genesis, Keyring, Message, PlayerId, Proof, RestrictedSigner, SignedHeader, Tag,
};
use tenderstake::proofs::{DeviationEvidence, DeviationForm, DeviationProof};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    /// Follows the protocol exactly.
    HonestShadow,
    /// Sends nothing.
    Silent,
    /// Sends a conflicting second prevote and proposal for every slot.
    Equivocator,
    /// Proposes a value that fails validity whenever it leads an epoch.
    InvalidValueProposer,
    /// Sends a prevote no rule could produce.
    JunkSender,
    /// Accuses a correct player with fabricated evidence.
    ForgedSlasher,
    /// After precommitting a value, proposes a different fresh value.
    StaleLockBreaker,
    /// Sends only to some recipients.
    SelectiveSender,
}

impl StrategyName {
    pub const ALL: [StrategyName; 8] = [
        StrategyName::HonestShadow,
        StrategyName::Silent,
        StrategyName::Equivocator,
        StrategyName::InvalidValueProposer,
        StrategyName::JunkSender,
        StrategyName::ForgedSlasher,
        StrategyName::StaleLockBreaker,
        StrategyName::SelectiveSender,
    ];

    /// Strategies whose emissions include at least one invalid message.
    pub const SLASHABLE: [StrategyName; 5] = [
        StrategyName::Equivocator,
        StrategyName::InvalidValueProposer,
        StrategyName::JunkSender,
        StrategyName::ForgedSlasher,
        StrategyName::StaleLockBreaker,
    ];

    pub fn is_slashable(self) -> bool {
        Self::SLASHABLE.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::HonestShadow => "honest_shadow",
            StrategyName::Silent => "silent",
            StrategyName::Equivocator => "equivocator",
            StrategyName::InvalidValueProposer => "invalid_value_proposer",
            StrategyName::JunkSender => "junk_sender",
            StrategyName::ForgedSlasher => "forged_slasher",
            StrategyName::StaleLockBreaker => "stale_lock_breaker",
            StrategyName::SelectiveSender => "selective_sender",
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyName {
    type Err = AdversaryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| AdversaryError::UnknownStrategy(s.to_string()))
    }
}

/// A strategy plus numeric parameters.
///
/// Recognised parameters: `start_height` (all strategies that misbehave;
/// default 1), `target` (forged_slasher; default the lowest correct id) and
/// `reach` (selective_sender; recipients `P1..P<reach>`, default half).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub name: StrategyName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl StrategySpec {
    pub fn new(name: StrategyName) -> Self {
        Self { name, params: BTreeMap::new() }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn param(&self, key: &str) -> Option<u64> {
        self.params.get(key).map(|v| v.max(0.0) as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum AdversaryError {
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
    #[error("need 1 <= f < n - 2 corrupted players, got f = {f} with n = {n}")]
    Cardinality { f: usize, n: usize },
    #[error("corrupted share {0} is not below 1/3")]
    ShareTooLarge(String),
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
}

/// One emission. `recipients: None` means everyone.
#[derive(Clone, Debug)]
pub struct Emission {
    pub msg: Message,
    pub recipients: Option<Vec<PlayerId>>,
}

impl Emission {
    fn all(msg: Message) -> Self {
        Self { msg, recipients: None }
    }
}

/// What the adversary sees in one round.
pub struct Observation<'a> {
    pub round: u64,
    /// Messages correct players broadcast this round.
    pub honest: &'a [Message],
    /// What each corrupted player's protocol state wants to send.
    pub own: &'a BTreeMap<PlayerId, Vec<Message>>,
    /// Every player's state; the adversary reads only its own players'.
    pub states: &'a [PlayerState],
}

#[derive(Clone, Debug)]
pub struct Adversary {
    corrupted: BTreeSet<PlayerId>,
    spec: StrategySpec,
    signer: RestrictedSigner,
    initial_share: Rational,
    n: usize,
    /// Slots already acted on, to keep one-shot actions one-shot.
    done: BTreeSet<(PlayerId, u64, u64, u8)>,
    /// Correct players' headers, for fabricating evidence.
    seen: BTreeMap<(PlayerId, u64), Vec<SignedHeader>>,
}

/// Checks the threat-model bounds and fixes the corrupted set.
pub fn corrupt(
    genesis: &Genesis,
    keys: &Arc<Keyring>,
    ids: &BTreeSet<PlayerId>,
    spec: StrategySpec,
) -> Result<Adversary, AdversaryError> {
    let n = genesis.num_players();
    let f = ids.len();
    if f == 0 || f + 2 >= n {
        return Err(AdversaryError::Cardinality { f, n });
    }
    let mut share = ratio(0, 1);
    for &p in ids {
        share += genesis.share(p).ok_or(AdversaryError::UnknownPlayer(p))?;
    }
    if share >= ratio(1, 3) {
        return Err(AdversaryError::ShareTooLarge(share.to_string()));
    }
    Ok(Adversary {
        corrupted: ids.clone(),
        spec,
        signer: keys.restricted(ids.clone()),
        initial_share: share,
        n,
        done: BTreeSet::new(),
        seen: BTreeMap::new(),
    })
}

const PROPOSAL_SLOT: u8 = 0;
const PREVOTE_SLOT: u8 = 1;
const JUNK_SLOT: u8 = 2;
const FORGED_SLOT: u8 = 3;
const STALE_SLOT: u8 = 4;

impl Adversary {
    pub fn corrupted(&self) -> &BTreeSet<PlayerId> {
        &self.corrupted
    }

    pub fn spec(&self) -> &StrategySpec {
        &self.spec
    }

    /// Combined genesis share of the corrupted players.
    pub fn initial_share(&self) -> &Rational {
        &self.initial_share
    }

    pub fn adversary_act(&mut self, obs: &Observation<'_>) -> Vec<Emission> {
        let start = self.spec.param("start_height").unwrap_or(1);
        let mut out = Vec::new();
        for m in obs.honest {
            if !self.corrupted.contains(&m.sender) && m.tag != Tag::Slash {
                self.seen.entry((m.sender, m.height)).or_default().push(m.header());
            }
        }
        for (&p, msgs) in obs.own {
            for m in msgs {
                let active = m.height >= start;
                match self.spec.name {
                    StrategyName::HonestShadow => out.push(Emission::all(m.clone())),
                    StrategyName::Silent => {}
                    StrategyName::Equivocator => {
                        out.push(Emission::all(m.clone()));
                        if active {
                            out.extend(self.equivocate(m).map(Emission::all));
                        }
                    }
                    StrategyName::InvalidValueProposer => {
                        let fresh = m.tag == Tag::Proposal && m.valid_epoch == -1;
                        if active && fresh {
                            out.push(Emission::all(self.invalidate(m)));
                        } else {
                            out.push(Emission::all(m.clone()));
                        }
                    }
                    StrategyName::JunkSender => {
                        out.push(Emission::all(m.clone()));
                        if active && self.done.insert((p, m.height, 0, JUNK_SLOT)) {
                            out.push(Emission::all(self.junk(p, m.height, m.epoch)));
                        }
                    }
                    StrategyName::ForgedSlasher => out.push(Emission::all(m.clone())),
                    StrategyName::StaleLockBreaker => {
                        out.push(Emission::all(m.clone()));
                        let locked = m.tag == Tag::Precommit && m.value_ref.is_some();
                        if active && locked && self.done.insert((p, m.height, m.epoch, STALE_SLOT))
                        {
                            out.push(Emission::all(self.stale_proposal(m, obs.states)));
                        }
                    }
                    StrategyName::SelectiveSender => {
                        let reach = self.spec.param("reach").unwrap_or(self.n.div_ceil(2) as u64);
                        let to = (1..=reach.min(self.n as u64) as u32).map(PlayerId).collect();
                        out.push(Emission { msg: m.clone(), recipients: Some(to) });
                    }
                }
            }
        }
        if self.spec.name == StrategyName::ForgedSlasher {
            out.extend(self.forge(obs.states).map(Emission::all));
        }
        out
    }

    fn sign(&self, msg: Message) -> Message {
        msg.sign(&self.signer)
    }

    /// A second message for the same slot with different content.
    fn equivocate(&mut self, m: &Message) -> Option<Message> {
        match m.tag {
            Tag::Prevote => {
                if !self.done.insert((m.sender, m.height, m.epoch, PREVOTE_SLOT)) {
                    return None;
                }
                let flipped = match m.value_ref {
                    Some(_) => None,
                    None => Some(Digest::of(
                        format!("equivocation/{}/{}", m.height, m.epoch).as_bytes(),
                    )),
                };
                Some(self.sign(m.clone().with_value_ref(flipped)))
            }
            Tag::Proposal => {
                if !self.done.insert((m.sender, m.height, m.epoch, PROPOSAL_SLOT)) {
                    return None;
                }
                let mut v = m.proposed_value()?.clone();
                v.payload = Digest::of(&v.payload).0.to_vec();
                Some(
                    self.sign(m.clone().with_value_ref(Some(v.digest())).with_body(Body::Value(v))),
                )
            }
            _ => None,
        }
    }

    /// The same proposal with a value that points at no block.
    fn invalidate(&self, m: &Message) -> Message {
        let Some(mut v) = m.proposed_value().cloned() else { return m.clone() };
        v.parent_hash = Digest::of(b"tenderstake/nowhere");
        self.sign(m.clone().with_value_ref(Some(v.digest())).with_body(Body::Value(v)))
    }

    /// A prevote a million epochs ahead with an unformatted body and no proof.
    fn junk(&self, p: PlayerId, height: u64, epoch: u64) -> Message {
        self.sign(
            Message::new(Tag::Prevote, height, epoch + 1_000_000, p)
                .with_body(Body::Opaque(b"junk".to_vec())),
        )
    }

    /// A fresh proposal for a different value in the next epoch.
    fn stale_proposal(&self, precommit: &Message, states: &[PlayerState]) -> Message {
        let st = &states[precommit.sender.index()];
        let value = tenderstake::domain::Value {
            parent_hash: st.chain().head_hash(),
            payload: format!("stale/{}/{}", precommit.height, precommit.epoch).into_bytes(),
            deviators: vec![],
            proposer: precommit.sender,
            height: precommit.height,
        };
        self.sign(
            Message::new(Tag::Proposal, precommit.height, precommit.epoch + 1, precommit.sender)
                .with_value_ref(Some(value.digest()))
                .with_valid_epoch(-1)
                .with_body(Body::Value(value))
                .with_proof(precommit.proof.clone()),
        )
    }

    /// A slash against a correct player whose "contradiction" is two of its
    /// messages from different slots.
    fn forge(&mut self, states: &[PlayerState]) -> Option<Message> {
        let sender = *self.corrupted.iter().next()?;
        let st = &states[sender.index()];
        let start = self.spec.param("start_height").unwrap_or(1);
        let target = match self.spec.param("target") {
            Some(t) => PlayerId(t as u32),
            None => (1..=self.n as u32).map(PlayerId).find(|p| !self.corrupted.contains(p))?,
        };
        let height = st.height();
        if height < start || self.done.contains(&(sender, 0, 0, FORGED_SLOT)) {
            return None;
        }
        let (a, b) = self.seen.iter().find_map(|((p, h), hs)| {
            if *p != target || *h > height {
                return None;
            }
            let a = hs.first()?;
            let b = hs.iter().find(|b| b.tag != a.tag || b.epoch != a.epoch)?;
            Some((a.clone(), b.clone()))
        })?;
        self.done.insert((sender, 0, 0, FORGED_SLOT));
        let observed_head = st.view().at(a.height).map(|v| v.head_hash()).unwrap_or_default();
        let dp = DeviationProof {
            form: DeviationForm::Contradiction,
            offender: target,
            evidence: DeviationEvidence::Pair(a, b),
            observed_head,
        };
        Some(
            self.sign(
                Message::new(Tag::Slash, height, st.epoch(), sender)
                    .with_body(Body::Slash { offender: target })
                    .with_proof(Proof::Deviation(Box::new(dp))),
            ),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tenderstake::consensus::{init_player, PlayerConfig};
    use tenderstake::domain::rational::int;
    use tenderstake::domain::PayloadPredicate;
    use tenderstake::proofs::{detect_deviation, verify_deviation_proof, MessageHistory};

    fn quarters() -> Arc<Genesis> {
        Arc::new(Genesis::equal(4, int(100), int(12), PayloadPredicate::MaxLen(64)).unwrap())
    }

    fn ids(xs: &[u32]) -> BTreeSet<PlayerId> {
        xs.iter().map(|&x| PlayerId(x)).collect()
    }

    fn states(g: &Arc<Genesis>, keys: &Arc<Keyring>) -> (Vec<PlayerState>, Vec<Message>) {
        let mut sts = Vec::new();
        let mut sent = Vec::new();
        for p in g.players() {
            let (st, out) =
                init_player(Arc::clone(g), p, Arc::clone(keys), PlayerConfig::default()).unwrap();
            sts.push(st);
            sent.extend(out.to_broadcast);
        }
        (sts, sent)
    }

    #[test]
    fn corruption_bounds() {
        let g = quarters();
        let keys = Arc::new(Keyring::new(4, 1));
        let spec = StrategySpec::new(StrategyName::Silent);
        assert!(corrupt(&g, &keys, &ids(&[4]), spec.clone()).is_ok());
        assert!(matches!(
            corrupt(&g, &keys, &ids(&[3, 4]), spec.clone()),
            Err(AdversaryError::Cardinality { f: 2, n: 4 })
        ));
        assert!(corrupt(&g, &keys, &ids(&[2, 3, 4]), spec.clone()).is_err());
        assert!(corrupt(&g, &keys, &ids(&[]), spec.clone()).is_err());

        // Six players: two of them are allowed by count but hold exactly 1/3.
        let g6 = Genesis::equal(6, int(100), int(12), PayloadPredicate::MaxLen(64)).unwrap();
        let keys6 = Arc::new(Keyring::new(6, 1));
        assert!(matches!(
            corrupt(&g6, &keys6, &ids(&[5, 6]), spec),
            Err(AdversaryError::ShareTooLarge(_))
        ));
    }

    #[test]
    fn strategy_names_round_trip() {
        for n in StrategyName::ALL {
            assert_eq!(n.as_str().parse::<StrategyName>().unwrap(), n);
        }
        assert!("nope".parse::<StrategyName>().is_err());
        let spec: StrategySpec =
            serde_json::from_str(r#"{"name":"selective_sender","params":{"reach":2}}"#).unwrap();
        assert_eq!(spec.param("reach"), Some(2));
    }

    #[test]
    fn silent_emits_nothing() {
        let g = quarters();
        let keys = Arc::new(Keyring::new(4, 1));
        let (sts, sent) = states(&g, &keys);
        let mut adv =
            corrupt(&g, &keys, &ids(&[1]), StrategySpec::new(StrategyName::Silent)).unwrap();
        let own = [(PlayerId(1), sent)].into();
        let obs = Observation { round: 0, honest: &[], own: &own, states: &sts };
        assert!(adv.adversary_act(&obs).is_empty());
    }

    #[test]
    fn equivocating_leader_sends_two_proposals() {
        let g = quarters();
        let keys = Arc::new(Keyring::new(4, 1));
        let (sts, sent) = states(&g, &keys);
        let mut adv =
            corrupt(&g, &keys, &ids(&[1]), StrategySpec::new(StrategyName::Equivocator)).unwrap();
        let own = [(PlayerId(1), sent)].into();
        let obs = Observation { round: 0, honest: &[], own: &own, states: &sts };
        let em = adv.adversary_act(&obs);
        assert_eq!(em.len(), 2);
        let (a, b) = (&em[0].msg, &em[1].msg);
        assert_eq!((a.tag, a.height, a.epoch), (b.tag, b.height, b.epoch));
        assert_ne!(a.value_ref, b.value_ref);
        assert!(keys.verify_message(a) && keys.verify_message(b));

        // Every correct player that sees both can prove it.
        for st in &sts[1..] {
            let mut hist = MessageHistory::new();
            hist.append(a.header());
            let dp = detect_deviation(b, &hist, &st.view()).unwrap();
            assert_eq!((dp.form, dp.offender), (DeviationForm::Contradiction, PlayerId(1)));
            assert!(verify_deviation_proof(&dp, &st.view()));
        }
        // Replaying the same observation does not equivocate again.
        assert_eq!(adv.adversary_act(&obs).len(), 1);
    }

    #[test]
    fn invalid_value_and_junk_are_detected() {
        let g = quarters();
        let keys = Arc::new(Keyring::new(4, 1));
        let (sts, sent) = states(&g, &keys);
        let own = [(PlayerId(1), sent)].into();
        let obs = Observation { round: 0, honest: &[], own: &own, states: &sts };
        let empty = MessageHistory::new();

        let spec = StrategySpec::new(StrategyName::InvalidValueProposer);
        let em = corrupt(&g, &keys, &ids(&[1]), spec).unwrap().adversary_act(&obs);
        let dp = detect_deviation(&em[0].msg, &empty, &sts[1].view()).unwrap();
        assert_eq!(dp.form, DeviationForm::InvalidValue);

        let spec = StrategySpec::new(StrategyName::JunkSender);
        let em = corrupt(&g, &keys, &ids(&[1]), spec).unwrap().adversary_act(&obs);
        assert_eq!(em.len(), 2);
        let dp = detect_deviation(&em[1].msg, &empty, &sts[1].view()).unwrap();
        assert_eq!(dp.form, DeviationForm::InvalidTransition);
        assert!(verify_deviation_proof(&dp, &sts[2].view()));
    }

    #[test]
    fn forged_slash_fails_and_incriminates_its_sender() {
        let g = quarters();
        let keys = Arc::new(Keyring::new(4, 1));
        let (sts, sent) = states(&g, &keys);
        // P1's proposal and a nil precommit: two slots, no contradiction.
        let honest =
            vec![sent[0].clone(), Message::new(Tag::Precommit, 1, 1, PlayerId(1)).sign(&*keys)];

        let spec = StrategySpec::new(StrategyName::ForgedSlasher);
        let mut adv = corrupt(&g, &keys, &ids(&[4]), spec).unwrap();
        let own = BTreeMap::new();
        let obs = Observation { round: 2, honest: &honest, own: &own, states: &sts };
        let em = adv.adversary_act(&obs);
        assert_eq!(em.len(), 1);
        let slash = &em[0].msg;
        assert_eq!((slash.tag, slash.sender), (Tag::Slash, PlayerId(4)));
        let Proof::Deviation(forged) = &slash.proof else { panic!("slash carries a proof") };
        assert_eq!(forged.offender, PlayerId(1));
        for st in &sts[..3] {
            assert!(!verify_deviation_proof(forged, &st.view()));
            let dp = detect_deviation(slash, &MessageHistory::new(), &st.view()).unwrap();
            assert_eq!((dp.form, dp.offender), (DeviationForm::InvalidSlash, PlayerId(4)));
            assert!(verify_deviation_proof(&dp, &st.view()));
        }
        // One forged slash per run.
        assert!(adv.adversary_act(&obs).is_empty());
    }

    #[test]
    fn emissions_never_verify_for_correct_players() {
        let g = quarters();
        let keys = Arc::new(Keyring::new(4, 1));
        let (sts, sent) = states(&g, &keys);
        // P1's real proposal handed to an adversary that only controls P4.
        let own = [(PlayerId(1), sent)].into();
        let obs = Observation { round: 0, honest: &[], own: &own, states: &sts };
        for name in StrategyName::ALL {
            let mut adv = corrupt(&g, &keys, &ids(&[4]), StrategySpec::new(name)).unwrap();
            for e in adv.adversary_act(&obs) {
                let resigned = e.msg.clone();
                if resigned.sender == PlayerId(1) && resigned != own[&PlayerId(1)][0] {
                    assert!(!keys.verify_message(&resigned), "{name}");
                }
            }
        }
    }
}
