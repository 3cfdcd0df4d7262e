// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use crate::proofs::verify_deviation_proof;
use crate::view::ChainView;

use super::Value;

/// Whether `v` may be decided next on the chain seen by `view`.
///
/// The value must point at the current head, sit at the height under
/// consensus, carry a payload accepted by the genesis predicate, and name
/// only unslashed deviators, in strictly increasing id order, each backed by
/// a verifying proof.
pub fn value_valid(v: &Value, view: &ChainView<'_>) -> bool {
    let ledger = view.ledger();
    if v.parent_hash != view.head_hash()
        || v.height != view.height()
        || !ledger.genesis().payload_predicate().accepts(&v.payload)
    {
        return false;
    }
    let sorted = v.deviators.windows(2).all(|w| w[0].offender < w[1].offender);
    sorted
        && v.deviators.iter().all(|dp| {
            ledger.is_known(dp.offender)
                && !ledger.is_slashed(dp.offender)
                && verify_deviation_proof(dp, view)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Digest, PlayerId, Tag};
    use crate::proofs::fixtures::World;
    use crate::proofs::{DeviationEvidence, DeviationForm, DeviationProof};

    #[test]
    fn plain_value_is_valid() {
        let w = World::quarters();
        assert!(value_valid(&w.value(b"ok", 1), &w.view()));
    }

    #[test]
    fn broken_pointer_and_height() {
        let w = World::quarters();
        let mut v = w.value(b"ok", 1);
        v.parent_hash = Digest::of(b"not the head");
        assert!(!value_valid(&v, &w.view()));
        let mut v = w.value(b"ok", 1);
        v.height = 2;
        assert!(!value_valid(&v, &w.view()));
    }

    #[test]
    fn fabricated_proof_against_correct_player() {
        let w = World::quarters();
        // P2 sent a prevote and a precommit; that is what a correct player does.
        let fabricated = DeviationProof {
            form: DeviationForm::Contradiction,
            offender: PlayerId(2),
            evidence: DeviationEvidence::Pair(
                w.header(Tag::Prevote, 2, 1, None),
                w.header(Tag::Precommit, 2, 1, None),
            ),
            observed_head: w.view().head_hash(),
        };
        let mut v = w.value(b"ok", 1);
        v.deviators.push(fabricated);
        assert!(!value_valid(&v, &w.view()));
    }

    #[test]
    fn deviators_must_be_sorted_and_distinct() {
        let w = World::quarters();
        let proof = |p: u32| DeviationProof {
            form: DeviationForm::Contradiction,
            offender: PlayerId(p),
            evidence: DeviationEvidence::Pair(
                w.header(Tag::Prevote, p, 1, None),
                w.header(Tag::Prevote, p, 1, Some(Digest::of(b"x"))),
            ),
            observed_head: w.view().head_hash(),
        };
        let mut v = w.value(b"ok", 1);
        v.deviators = vec![proof(3)];
        assert!(value_valid(&v, &w.view()));
        v.deviators = vec![proof(4), proof(3)];
        assert!(!value_valid(&v, &w.view()));
        v.deviators = vec![proof(3), proof(3)];
        assert!(!value_valid(&v, &w.view()));
    }
}
