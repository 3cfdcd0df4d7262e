// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Proof-of-transition checking.
//!
//! A message is legal only if its attached proof matches one of the emission
//! patterns of the state machine:
//!
//! | message                  | parts                                                  |
//! |--------------------------|--------------------------------------------------------|
//! | `PROPOSAL(h,e,v,-1)`     | entry                                                  |
//! | `PROPOSAL(h,e,v,ve)`     | entry, `PrevoteQuorum{ve}` for `v`                     |
//! | `PREVOTE(h,e,nil)`       | entry                                                  |
//! | `PREVOTE(h,e,v)`         | entry, `Proposal`, and `PrevoteQuorum{ve}` if `ve >= 0`|
//! | `PRECOMMIT(h,e,v)`       | `PrevoteQuorum{e}` for `v`                             |
//! | `PRECOMMIT(h,e,nil)`     | `NilPrevoteQuorum{e}` or `PrevoteQuorumAny{e}`         |
//! | `SLASH`                  | a deviation proof that verifies                        |
//!
//! "entry" justifies being in epoch `e`: `Genesis` or `Decision{h-1}` for
//! `e = 1`, otherwise `NilPrecommitQuorum{e-1}`, `PrecommitQuorumAny{e-1}` or
//! `Skip{e}`.

use thiserror::Error;

use super::{verify_deviation_proof, Justification, ProofKind, TransitionProof};
use crate::consensus::proposer;
use crate::domain::{validity::value_valid, Body, Message, Proof, SignedHeader, Tag, Value};
use crate::quorum::{exceeds, Threshold, VoteContext};
use crate::view::ChainView;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProofError {
    #[error("evidence does not establish {0:?}")]
    Insufficient(ProofKind),
}

/// Builds a justification, failing unless it would verify against `view`.
pub fn make_justification(
    kind: ProofKind,
    evidence: Vec<SignedHeader>,
    value: Option<Value>,
    view: &ChainView<'_>,
) -> Result<Justification, ProofError> {
    let j = Justification { kind, evidence, value };
    if verify_justification(&j, view.height(), view) {
        Ok(j)
    } else {
        Err(ProofError::Insufficient(kind))
    }
}

/// Checks one justification for a message at `height`.
pub fn verify_justification(j: &Justification, height: u64, view: &ChainView<'_>) -> bool {
    if height != view.height() {
        return false;
    }
    let keys = view.keys();
    if !j.evidence.iter().all(|e| e.height == height && keys.verify_header(e)) {
        return false;
    }
    let ledger = view.ledger();
    let plain = || VoteContext::new(ledger);
    let all = |tag: Tag, epoch: u64, pred: &dyn Fn(&SignedHeader) -> bool| {
        j.evidence.iter().all(|e| e.tag == tag && e.epoch == epoch && pred(e))
    };
    let senders = || j.evidence.iter().map(|e| e.sender);

    match j.kind {
        ProofKind::Genesis => height == 1 && j.evidence.is_empty() && j.value.is_none(),
        ProofKind::Decision { height: decided } => {
            height > 1 && decided == height - 1 && j.evidence.is_empty() && j.value.is_none()
        }
        ProofKind::Skip { epoch } => {
            j.value.is_none()
                && j.evidence.iter().all(|e| e.epoch == epoch && e.tag != Tag::Slash)
                && exceeds(senders(), Threshold::OneThird, &plain())
        }
        ProofKind::Proposal => match j.evidence.as_slice() {
            [p] => {
                j.value.is_none()
                    && p.tag == Tag::Proposal
                    && p.value_ref.is_some()
                    && proposer(height, p.epoch, ledger).ok() == Some(p.sender)
            }
            _ => false,
        },
        ProofKind::PrevoteQuorum { epoch } | ProofKind::PrecommitQuorum { epoch } => {
            let tag = match j.kind {
                ProofKind::PrevoteQuorum { .. } => Tag::Prevote,
                _ => Tag::Precommit,
            };
            let Some(value) = &j.value else { return false };
            let digest = value.digest();
            let ctx = VoteContext::with_deviators(ledger, value.deviator_ids());
            all(tag, epoch, &|e| e.value_ref == Some(digest))
                && exceeds(senders(), Threshold::TwoThirds, &ctx)
        }
        ProofKind::PrevoteQuorumAny { epoch } | ProofKind::PrecommitQuorumAny { epoch } => {
            let tag = match j.kind {
                ProofKind::PrevoteQuorumAny { .. } => Tag::Prevote,
                _ => Tag::Precommit,
            };
            j.value.is_none()
                && all(tag, epoch, &|_| true)
                && exceeds(senders(), Threshold::TwoThirds, &plain())
        }
        ProofKind::NilPrevoteQuorum { epoch } | ProofKind::NilPrecommitQuorum { epoch } => {
            let tag = match j.kind {
                ProofKind::NilPrevoteQuorum { .. } => Tag::Prevote,
                _ => Tag::Precommit,
            };
            j.value.is_none()
                && all(tag, epoch, &|e| e.value_ref.is_none())
                && exceeds(senders(), Threshold::TwoThirds, &plain())
        }
    }
}

/// Whether `kind` may justify entering `epoch` at `height`.
pub fn entry_kind_allowed(kind: ProofKind, height: u64, epoch: u64) -> bool {
    match epoch {
        0 => false,
        1 if height == 1 => kind == ProofKind::Genesis,
        1 => kind == ProofKind::Decision { height: height - 1 },
        e => {
            matches!(
                kind,
                ProofKind::NilPrecommitQuorum { epoch: p } | ProofKind::PrecommitQuorumAny { epoch: p }
                    if p == e - 1
            ) || kind == ProofKind::Skip { epoch: e }
        }
    }
}

fn entry_ok(part: &Justification, msg: &Message, view: &ChainView<'_>) -> bool {
    entry_kind_allowed(part.kind, msg.height, msg.epoch)
        && verify_justification(part, msg.height, view)
}

fn value_quorum_ok(part: &Justification, epoch: u64, value_ref: crate::domain::Digest) -> bool {
    part.kind == ProofKind::PrevoteQuorum { epoch }
        && part.value.as_ref().is_some_and(|v| v.digest() == value_ref)
}

/// Whether `msg` matches a legal emission pattern. `view` must be the view at
/// `msg.height`; authentication of `msg` itself is checked by the caller.
pub fn verify_transition_proof(msg: &Message, view: &ChainView<'_>) -> bool {
    if msg.height != view.height() || msg.epoch == 0 {
        return false;
    }
    if msg.tag == Tag::Slash {
        return match (&msg.body, &msg.proof) {
            (Body::Slash { offender }, Proof::Deviation(dp)) => {
                dp.offender == *offender
                    && msg.value_ref.is_none()
                    && msg.valid_epoch == -1
                    && verify_deviation_proof(dp, view)
            }
            _ => false,
        };
    }
    let Proof::Transition(TransitionProof { parts }) = &msg.proof else {
        return false;
    };
    let (h, e) = (msg.height, msg.epoch);
    let vj = |p: &Justification| verify_justification(p, h, view);

    match msg.tag {
        Tag::Proposal => {
            let Body::Value(value) = &msg.body else { return false };
            let digest = value.digest();
            if msg.value_ref != Some(digest)
                || proposer(h, e, view.ledger()).ok() != Some(msg.sender)
                || msg.valid_epoch < -1
                || msg.valid_epoch >= e as i64
                || !value_valid(value, view)
            {
                return false;
            }
            match (msg.valid_epoch, parts.as_slice()) {
                (-1, [entry]) => entry_ok(entry, msg, view),
                (ve, [entry, quorum]) if ve >= 0 => {
                    entry_ok(entry, msg, view)
                        && value_quorum_ok(quorum, ve as u64, digest)
                        && vj(quorum)
                }
                _ => false,
            }
        }
        Tag::Prevote => {
            if msg.body != Body::Empty || msg.valid_epoch != -1 {
                return false;
            }
            match (msg.value_ref, parts.as_slice()) {
                (None, [entry]) => entry_ok(entry, msg, view),
                (Some(v), [entry, prop, rest @ ..]) => {
                    let [header] = prop.evidence.as_slice() else { return false };
                    let proposal_ok = prop.kind == ProofKind::Proposal
                        && header.epoch == e
                        && header.value_ref == Some(v)
                        && vj(prop);
                    let quorum_ok = match (header.valid_epoch, rest) {
                        (-1, []) => true,
                        (ve, [quorum]) if ve >= 0 && (ve as u64) < e => {
                            value_quorum_ok(quorum, ve as u64, v) && vj(quorum)
                        }
                        _ => false,
                    };
                    proposal_ok && quorum_ok && entry_ok(entry, msg, view)
                }
                _ => false,
            }
        }
        Tag::Precommit => {
            if msg.body != Body::Empty || msg.valid_epoch != -1 {
                return false;
            }
            match (msg.value_ref, parts.as_slice()) {
                (Some(v), [quorum]) => value_quorum_ok(quorum, e, v) && vj(quorum),
                (None, [quorum]) => {
                    matches!(
                        quorum.kind,
                        ProofKind::NilPrevoteQuorum { epoch } | ProofKind::PrevoteQuorumAny { epoch }
                            if epoch == e
                    ) && vj(quorum)
                }
                _ => false,
            }
        }
        Tag::Slash => unreachable!("handled above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::rational::ratio;
    use crate::domain::PlayerId;
    use crate::proofs::fixtures::World;

    #[test]
    fn precommit_needs_prevotes_for_the_same_value() {
        let w = World::quarters();
        let v = w.value(b"v", 1);
        let other = w.value(b"other", 1);
        let good = Justification::new(
            ProofKind::PrevoteQuorum { epoch: 1 },
            w.votes(Tag::Prevote, &[1, 2, 3], 1, Some(v.digest())),
        )
        .with_value(v.clone());
        assert!(verify_transition_proof(&w.precommit(2, Some(v.digest()), good), &w.view()));

        let wrong = Justification::new(
            ProofKind::PrevoteQuorum { epoch: 1 },
            w.votes(Tag::Prevote, &[1, 2, 3], 1, Some(other.digest())),
        )
        .with_value(other);
        assert!(!verify_transition_proof(&w.precommit(2, Some(v.digest()), wrong), &w.view()));
    }

    #[test]
    fn nil_precommit_paths() {
        let w = World::quarters();
        let v = w.value(b"v", 1);
        let nil = Justification::new(
            ProofKind::NilPrevoteQuorum { epoch: 1 },
            w.votes(Tag::Prevote, &[1, 2, 4], 1, None),
        );
        assert!(verify_transition_proof(&w.precommit(3, None, nil), &w.view()));
        let mut mixed = w.votes(Tag::Prevote, &[1, 2], 1, None);
        mixed.push(w.header(Tag::Prevote, 3, 1, Some(v.digest())));
        let any = Justification::new(ProofKind::PrevoteQuorumAny { epoch: 1 }, mixed.clone());
        assert!(verify_transition_proof(&w.precommit(3, None, any), &w.view()));
        // Mixed votes are not a nil quorum.
        let not_nil = Justification::new(ProofKind::NilPrevoteQuorum { epoch: 1 }, mixed);
        assert!(!verify_transition_proof(&w.precommit(3, None, not_nil), &w.view()));
    }

    #[test]
    fn junk_matches_no_pattern() {
        let w = World::quarters();
        let junk = w.signed(
            Message::new(Tag::Prevote, 1, 1, PlayerId(2))
                .with_body(Body::Opaque(b"\x00\xffjunk".to_vec())),
        );
        assert!(!verify_transition_proof(&junk, &w.view()));
        let no_proof = w.signed(Message::new(Tag::Precommit, 1, 1, PlayerId(2)));
        assert!(!verify_transition_proof(&no_proof, &w.view()));
    }

    #[test]
    fn proposals_and_prevotes() {
        let w = World::quarters();
        let v = w.value(b"v", 1);
        let p = w.proposal(&v);
        assert!(verify_transition_proof(&p, &w.view()));
        assert!(verify_transition_proof(&w.prevote_nil(3), &w.view()));

        let prevote = w.signed(
            Message::new(Tag::Prevote, 1, 1, PlayerId(3))
                .with_value_ref(Some(v.digest()))
                .with_proof(Proof::Transition(TransitionProof::new(vec![
                    World::genesis_entry(),
                    Justification::new(ProofKind::Proposal, vec![p.header()]),
                ]))),
        );
        assert!(verify_transition_proof(&prevote, &w.view()));

        // Only the epoch's proposer may propose.
        let usurper = w.signed(
            Message::new(Tag::Proposal, 1, 1, PlayerId(2))
                .with_value_ref(Some(v.digest()))
                .with_body(Body::Value(v.clone()))
                .with_proof(Proof::Transition(TransitionProof::new(vec![World::genesis_entry()]))),
        );
        assert!(!verify_transition_proof(&usurper, &w.view()));

        // Epoch 2 needs more than genesis to enter.
        let early = w.signed(
            Message::new(Tag::Prevote, 1, 2, PlayerId(3))
                .with_proof(Proof::Transition(TransitionProof::new(vec![World::genesis_entry()]))),
        );
        assert!(!verify_transition_proof(&early, &w.view()));
        let skip = Justification::new(
            ProofKind::Skip { epoch: 2 },
            w.votes(Tag::Prevote, &[1, 4], 2, None),
        );
        let skipped = w.signed(
            Message::new(Tag::Prevote, 1, 2, PlayerId(3))
                .with_proof(Proof::Transition(TransitionProof::new(vec![skip]))),
        );
        assert!(verify_transition_proof(&skipped, &w.view()));
    }

    #[test]
    fn make_justification_examples() {
        let w = World::quarters();
        let nil_precommits = w.votes(Tag::Precommit, &[1, 2, 3], 1, None);
        assert!(make_justification(
            ProofKind::NilPrecommitQuorum { epoch: 1 },
            nil_precommits,
            None,
            &w.view()
        )
        .is_ok());
        assert!(make_justification(ProofKind::Genesis, vec![], None, &w.view()).is_ok());

        let thirds = World::new(vec![ratio(1, 3); 3]);
        let v = thirds.value(b"v", 1);
        let exact = thirds.votes(Tag::Prevote, &[1, 2], 1, Some(v.digest()));
        assert_eq!(
            make_justification(
                ProofKind::PrevoteQuorum { epoch: 1 },
                exact,
                Some(v),
                &thirds.view()
            ),
            Err(ProofError::Insufficient(ProofKind::PrevoteQuorum { epoch: 1 }))
        );
    }

    #[test]
    fn entry_kinds() {
        assert!(entry_kind_allowed(ProofKind::Genesis, 1, 1));
        assert!(!entry_kind_allowed(ProofKind::Genesis, 2, 1));
        assert!(entry_kind_allowed(ProofKind::Decision { height: 4 }, 5, 1));
        assert!(entry_kind_allowed(ProofKind::NilPrecommitQuorum { epoch: 2 }, 5, 3));
        assert!(entry_kind_allowed(ProofKind::PrecommitQuorumAny { epoch: 2 }, 5, 3));
        assert!(entry_kind_allowed(ProofKind::Skip { epoch: 3 }, 5, 3));
        assert!(!entry_kind_allowed(ProofKind::Skip { epoch: 2 }, 5, 3));
        assert!(!entry_kind_allowed(ProofKind::PrevoteQuorumAny { epoch: 2 }, 5, 3));
    }
}
