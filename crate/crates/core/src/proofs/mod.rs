// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Proofs of transition (why a player was allowed to send a message) and
//! proofs of deviation (evidence that a player sent an invalid one).

mod deviation;
mod history;
mod transition;

use serde::{Deserialize, Serialize};

use crate::domain::{Digest, Message, PlayerId, SignedHeader, Value};

pub use deviation::{detect_deviation, is_contradiction, verify_deviation_proof};
pub use history::MessageHistory;
pub use transition::{
    entry_kind_allowed, make_justification, verify_justification, verify_transition_proof,
    ProofError,
};

/// What a [`Justification`] claims.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProofKind {
    /// First epoch of the first height.
    Genesis,
    /// First epoch after deciding `height`.
    Decision {
        height: u64,
    },
    /// More than 1/3 of the stake sent messages at `epoch`.
    Skip {
        epoch: u64,
    },
    /// The proposal a prevote responds to; one header.
    Proposal,
    /// More than 2/3 prevotes for the attached value.
    PrevoteQuorum {
        epoch: u64,
    },
    PrevoteQuorumAny {
        epoch: u64,
    },
    NilPrevoteQuorum {
        epoch: u64,
    },
    /// More than 2/3 precommits for the attached value.
    PrecommitQuorum {
        epoch: u64,
    },
    PrecommitQuorumAny {
        epoch: u64,
    },
    NilPrecommitQuorum {
        epoch: u64,
    },
}

/// One claim plus the signed headers backing it. Value-specific quorums
/// carry the value so verifiers can exclude the deviators it names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Justification {
    pub kind: ProofKind,
    pub evidence: Vec<SignedHeader>,
    pub value: Option<Value>,
}

impl Justification {
    pub fn new(kind: ProofKind, evidence: Vec<SignedHeader>) -> Self {
        Self { kind, evidence, value: None }
    }

    pub fn with_value(mut self, value: Value) -> Self {
        self.value = Some(value);
        self
    }
}

/// Attached to every proposal, prevote and precommit.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TransitionProof {
    pub parts: Vec<Justification>,
}

impl TransitionProof {
    pub fn new(parts: Vec<Justification>) -> Self {
        Self { parts }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeviationForm {
    /// Two messages no correct player could both have sent.
    Contradiction,
    /// A proposal whose value fails validity.
    InvalidValue,
    /// A slash, or a proposed value, carrying a deviation proof that does not verify.
    InvalidSlash,
    /// A message no protocol rule could have produced.
    InvalidTransition,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum DeviationEvidence {
    Pair(SignedHeader, SignedHeader),
    Message(Box<Message>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviationProof {
    pub form: DeviationForm,
    pub offender: PlayerId,
    pub evidence: DeviationEvidence,
    /// Chain head at the offending message's height when it was observed.
    pub observed_head: Digest,
}

impl DeviationProof {
    /// Height of the offending message.
    pub fn height(&self) -> u64 {
        match &self.evidence {
            DeviationEvidence::Pair(a, _) => a.height,
            DeviationEvidence::Message(m) => m.height,
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use std::sync::Arc;

    use super::{Justification, ProofKind, TransitionProof};
    use crate::domain::rational::{int, ratio, Rational};
    use crate::domain::{
        Blockchain, Body, Digest, Genesis, Keyring, Message, PayloadPredicate, PlayerId, Proof,
        SignedHeader, Tag, Value,
    };
    use crate::ledger::Ledger;
    use crate::view::ChainView;

    /// A genesis-only chain and the keys of its players.
    pub struct World {
        pub chain: Blockchain,
        pub ledgers: Vec<Ledger>,
        pub keys: Keyring,
    }

    impl World {
        pub fn new(shares: Vec<Rational>) -> Self {
            let g = Genesis::new(shares, int(100), int(12), PayloadPredicate::MaxLen(64)).unwrap();
            let keys = Keyring::new(g.num_players(), 3);
            Self {
                chain: Blockchain::new(&g),
                ledgers: vec![Ledger::from_genesis(Arc::new(g))],
                keys,
            }
        }

        pub fn quarters() -> Self {
            Self::new(vec![ratio(1, 4); 4])
        }

        pub fn view(&self) -> ChainView<'_> {
            ChainView::new(&self.chain, &self.ledgers, &self.keys)
        }

        pub fn value(&self, payload: &[u8], proposer: u32) -> Value {
            Value {
                parent_hash: self.chain.head_hash(),
                payload: payload.to_vec(),
                deviators: vec![],
                proposer: PlayerId(proposer),
                height: 1,
            }
        }

        pub fn header(&self, tag: Tag, sender: u32, epoch: u64, v: Option<Digest>) -> SignedHeader {
            Message::new(tag, 1, epoch, PlayerId(sender))
                .with_value_ref(v)
                .sign(&self.keys)
                .header()
        }

        pub fn votes(
            &self,
            tag: Tag,
            senders: &[u32],
            epoch: u64,
            v: Option<Digest>,
        ) -> Vec<SignedHeader> {
            senders.iter().map(|&p| self.header(tag, p, epoch, v)).collect()
        }

        pub fn genesis_entry() -> Justification {
            Justification::new(ProofKind::Genesis, vec![])
        }

        pub fn signed(&self, msg: Message) -> Message {
            msg.sign(&self.keys)
        }

        /// Epoch-1 proposal by P1.
        pub fn proposal(&self, v: &Value) -> Message {
            self.signed(
                Message::new(Tag::Proposal, 1, 1, PlayerId(1))
                    .with_value_ref(Some(v.digest()))
                    .with_body(Body::Value(v.clone()))
                    .with_proof(Proof::Transition(TransitionProof::new(vec![
                        Self::genesis_entry(),
                    ]))),
            )
        }

        pub fn prevote_nil(&self, sender: u32) -> Message {
            self.signed(
                Message::new(Tag::Prevote, 1, 1, PlayerId(sender)).with_proof(Proof::Transition(
                    TransitionProof::new(vec![Self::genesis_entry()]),
                )),
            )
        }

        pub fn precommit(&self, sender: u32, v: Option<Digest>, quorum: Justification) -> Message {
            self.signed(
                Message::new(Tag::Precommit, 1, 1, PlayerId(sender))
                    .with_value_ref(v)
                    .with_proof(Proof::Transition(TransitionProof::new(vec![quorum]))),
            )
        }
    }
}
