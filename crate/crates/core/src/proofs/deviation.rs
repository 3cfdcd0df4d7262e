// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Detection and verification of the four deviation forms.

use super::{
    verify_transition_proof, DeviationEvidence, DeviationForm, DeviationProof, MessageHistory,
};
use crate::domain::{value_valid, Body, Message, Proof, SignedHeader, Tag};
use crate::view::ChainView;

/// Whether one player could not have sent both `a` and `b` while following
/// the protocol. Both must come from the same sender at the same height.
///
/// Two patterns are recognised: different content in one
/// `(height, epoch, tag)` slot (slashes excepted), and a fresh proposal
/// (`valid_epoch = -1`) after precommitting a different value in an earlier
/// epoch.
pub fn is_contradiction(a: &SignedHeader, b: &SignedHeader) -> bool {
    if a.sender != b.sender || a.height != b.height {
        return false;
    }
    if a.epoch == b.epoch && a.tag == b.tag {
        return a.tag != Tag::Slash && !a.same_content(b);
    }
    stale_fresh_proposal(a, b) || stale_fresh_proposal(b, a)
}

fn stale_fresh_proposal(precommit: &SignedHeader, proposal: &SignedHeader) -> bool {
    precommit.tag == Tag::Precommit
        && proposal.tag == Tag::Proposal
        && proposal.valid_epoch == -1
        && precommit.epoch < proposal.epoch
        && precommit.value_ref.is_some()
        && precommit.value_ref != proposal.value_ref
}

/// Returns a proof if `msg` is invalid. `msg` must already be authenticated
/// and must not be newer than `view`; `history` holds what was received
/// before it.
pub fn detect_deviation(
    msg: &Message,
    history: &MessageHistory,
    view: &ChainView<'_>,
) -> Option<DeviationProof> {
    let hv = view.at(msg.height.max(1))?;
    let header = msg.header();
    let proof = |form, evidence| DeviationProof {
        form,
        offender: msg.sender,
        evidence,
        observed_head: hv.head_hash(),
    };
    let single = || DeviationEvidence::Message(Box::new(msg.clone()));

    let earlier = history.from_sender_at(msg.sender, msg.height);
    if let Some(prior) = earlier.into_iter().find(|h| is_contradiction(h, &header)) {
        return Some(proof(
            DeviationForm::Contradiction,
            DeviationEvidence::Pair(prior.clone(), header),
        ));
    }

    match (&msg.tag, &msg.body, &msg.proof) {
        (Tag::Proposal, Body::Value(v), _) => {
            if v.deviators.iter().any(|dp| !verify_deviation_proof(dp, &hv)) {
                return Some(proof(DeviationForm::InvalidSlash, single()));
            }
            if !value_valid(v, &hv) {
                return Some(proof(DeviationForm::InvalidValue, single()));
            }
        }
        (Tag::Slash, _, Proof::Deviation(dp)) if !verify_deviation_proof(dp, &hv) => {
            return Some(proof(DeviationForm::InvalidSlash, single()));
        }
        _ => {}
    }

    if !verify_transition_proof(msg, &hv) {
        return Some(proof(DeviationForm::InvalidTransition, single()));
    }
    None
}

/// Checks that `dp` authenticates as its offender and that re-running the
/// form's check on the evidence reproduces the violation.
pub fn verify_deviation_proof(dp: &DeviationProof, view: &ChainView<'_>) -> bool {
    let Some(hv) = view.at(dp.height().max(1)) else {
        return false;
    };
    if dp.observed_head != hv.head_hash() {
        return false;
    }
    let keys = view.keys();
    match (&dp.form, &dp.evidence) {
        (DeviationForm::Contradiction, DeviationEvidence::Pair(a, b)) => {
            a.sender == dp.offender
                && keys.verify_header(a)
                && keys.verify_header(b)
                && is_contradiction(a, b)
        }
        (form, DeviationEvidence::Message(m)) => {
            if m.sender != dp.offender || !keys.verify_message(m) {
                return false;
            }
            match form {
                DeviationForm::InvalidValue => match (&m.tag, &m.body) {
                    (Tag::Proposal, Body::Value(v)) => !value_valid(v, &hv),
                    _ => false,
                },
                DeviationForm::InvalidSlash => match (&m.tag, &m.body, &m.proof) {
                    (Tag::Slash, _, Proof::Deviation(inner)) => !verify_deviation_proof(inner, &hv),
                    (Tag::Proposal, Body::Value(v), _) => {
                        v.deviators.iter().any(|inner| !verify_deviation_proof(inner, &hv))
                    }
                    _ => false,
                },
                DeviationForm::InvalidTransition => !verify_transition_proof(m, &hv),
                DeviationForm::Contradiction => false,
            }
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Digest, PlayerId};
    use crate::proofs::fixtures::World;
    use crate::proofs::ProofKind;

    #[test]
    fn equivocating_prevotes_are_a_contradiction() {
        let w = World::quarters();
        let v = w.value(b"v", 1);
        let p = w.proposal(&v);
        let mut hist = MessageHistory::new();
        hist.append(w.prevote_nil(3).header());
        let second = w.signed(
            crate::domain::Message::new(Tag::Prevote, 1, 1, PlayerId(3))
                .with_value_ref(Some(v.digest()))
                .with_proof(Proof::Transition(crate::proofs::TransitionProof::new(vec![
                    World::genesis_entry(),
                    crate::proofs::Justification::new(ProofKind::Proposal, vec![p.header()]),
                ]))),
        );
        let dp = detect_deviation(&second, &hist, &w.view()).expect("equivocation");
        assert_eq!(dp.form, DeviationForm::Contradiction);
        assert_eq!(dp.offender, PlayerId(3));
        assert!(verify_deviation_proof(&dp, &w.view()));
        // The same message again is not a deviation.
        let mut replay = MessageHistory::new();
        replay.append(second.header());
        assert_eq!(detect_deviation(&second, &replay, &w.view()), None);
    }

    #[test]
    fn identical_pair_and_wrong_signer_do_not_verify() {
        let w = World::quarters();
        let a = w.header(Tag::Prevote, 3, 1, None);
        let same = DeviationProof {
            form: DeviationForm::Contradiction,
            offender: PlayerId(3),
            evidence: DeviationEvidence::Pair(a.clone(), a.clone()),
            observed_head: w.view().head_hash(),
        };
        assert!(!verify_deviation_proof(&same, &w.view()));

        let mut b = w.header(Tag::Prevote, 3, 1, Some(Digest::of(b"x")));
        let genuine = DeviationProof {
            evidence: DeviationEvidence::Pair(a.clone(), b.clone()),
            ..same.clone()
        };
        assert!(verify_deviation_proof(&genuine, &w.view()));
        b.auth = w.header(Tag::Prevote, 2, 1, Some(Digest::of(b"x"))).auth;
        let stolen = DeviationProof { evidence: DeviationEvidence::Pair(a, b), ..same };
        assert!(!verify_deviation_proof(&stolen, &w.view()));
    }

    #[test]
    fn fresh_proposal_after_precommit() {
        let w = World::quarters();
        let v = Some(Digest::of(b"v"));
        let w2 = Some(Digest::of(b"w"));
        let precommit = w.header(Tag::Precommit, 2, 1, v);
        let mut fresh = w.header(Tag::Proposal, 2, 2, w2);
        fresh.valid_epoch = -1;
        assert!(is_contradiction(&precommit, &fresh));
        assert!(is_contradiction(&fresh, &precommit));
        let same_value = w.header(Tag::Proposal, 2, 2, v);
        assert!(!is_contradiction(&precommit, &same_value));
        let nil_precommit = w.header(Tag::Precommit, 2, 1, None);
        assert!(!is_contradiction(&nil_precommit, &fresh));
    }

    #[test]
    fn forged_slash_is_an_invalid_slash_by_its_sender() {
        let w = World::quarters();
        // Two messages from P1 in different slots: no contradiction.
        let a = w.header(Tag::Prevote, 1, 1, None);
        let b = w.header(Tag::Precommit, 1, 1, None);
        let forged = DeviationProof {
            form: DeviationForm::Contradiction,
            offender: PlayerId(1),
            evidence: DeviationEvidence::Pair(a, b),
            observed_head: w.view().head_hash(),
        };
        assert!(!verify_deviation_proof(&forged, &w.view()));
        let slash = w.signed(
            crate::domain::Message::new(Tag::Slash, 1, 1, PlayerId(2))
                .with_body(Body::Slash { offender: PlayerId(1) })
                .with_proof(Proof::Deviation(Box::new(forged))),
        );
        let dp =
            detect_deviation(&slash, &MessageHistory::new(), &w.view()).expect("invalid slash");
        assert_eq!(dp.form, DeviationForm::InvalidSlash);
        assert_eq!(dp.offender, PlayerId(2));
        assert!(verify_deviation_proof(&dp, &w.view()));
    }

    #[test]
    fn honest_messages_yield_nothing() {
        let w = World::quarters();
        let v = w.value(b"v", 1);
        let hist = MessageHistory::new();
        assert_eq!(detect_deviation(&w.proposal(&v), &hist, &w.view()), None);
        assert_eq!(detect_deviation(&w.prevote_nil(4), &hist, &w.view()), None);
    }

    #[test]
    fn oversized_payload_is_an_invalid_value() {
        let w = World::quarters();
        let v = w.value(&[7u8; 65], 1);
        let dp = detect_deviation(&w.proposal(&v), &MessageHistory::new(), &w.view()).unwrap();
        assert_eq!(dp.form, DeviationForm::InvalidValue);
        assert!(verify_deviation_proof(&dp, &w.view()));
        // The same proof does not verify against a different head.
        let moved = DeviationProof { observed_head: Digest::of(b"elsewhere"), ..dp };
        assert!(!verify_deviation_proof(&moved, &w.view()));
    }
}
