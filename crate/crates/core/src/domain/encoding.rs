// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic binary encoding used for digests and signatures.
//!
//! Integers are big-endian (`u32`, `u64`, `i64`), byte strings and sequences
//! are prefixed with a `u32` length, `Option` is a `0`/`1` byte followed by
//! the value, and enums start with a one-byte variant tag. Rationals are
//! written as their reduced `a/b` text. Structs are the concatenation of
//! their fields in declaration order.
//!
//! Signing bytes for a header are the domain separator
//! `tenderstake/header/v1` followed by the header without its token.

use thiserror::Error;

use super::rational::{self, Rational};
use super::{
    AuthToken, Body, Digest, Genesis, Message, PayloadPredicate, PlayerId, Proof, SignedHeader,
    Tag, Value,
};
use crate::proofs::{
    DeviationEvidence, DeviationForm, DeviationProof, Justification, ProofKind, TransitionProof,
};

const HEADER_DOMAIN: &[u8] = b"tenderstake/header/v1";
const MAX_DEPTH: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("unknown variant {tag} for {ty}")]
    BadVariant { ty: &'static str, tag: u8 },
    #[error("invalid {0}")]
    Invalid(&'static str),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("nesting too deep")]
    TooDeep,
}

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }

    pub fn raw(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn put<T: Canonical>(&mut self, v: &T) {
        v.encode(self);
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
    depth: u32,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input, pos: 0, depth: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::Truncated);
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        Ok(i64::from_be_bytes(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    pub fn get<T: Canonical>(&mut self) -> Result<T, DecodeError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(DecodeError::TooDeep);
        }
        let out = T::decode(self);
        self.depth -= 1;
        out
    }
}

pub trait Canonical: Sized {
    fn encode(&self, enc: &mut Encoder);
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError>;

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let out = dec.get()?;
        match dec.remaining() {
            0 => Ok(out),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

pub fn canonical_encode(msg: &Message) -> Vec<u8> {
    msg.to_canonical_bytes()
}

pub fn canonical_decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    Message::from_canonical_bytes(bytes)
}

pub(crate) fn header_signing_bytes(h: &SignedHeader) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.raw(HEADER_DOMAIN);
    encode_header_fields(h, &mut enc);
    enc.finish()
}

fn encode_header_fields(h: &SignedHeader, enc: &mut Encoder) {
    enc.put(&h.tag);
    enc.u64(h.height);
    enc.u64(h.epoch);
    enc.put(&h.value_ref);
    enc.i64(h.valid_epoch);
    enc.put(&h.sender);
    enc.put(&h.body_digest);
    enc.put(&h.proof_digest);
}

impl Canonical for u64 {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        dec.u64()
    }
}

impl<T: Canonical> Canonical for Option<T> {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            None => enc.u8(0),
            Some(v) => {
                enc.u8(1);
                v.encode(enc);
            }
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(None),
            1 => Ok(Some(dec.get()?)),
            tag => Err(DecodeError::BadVariant { ty: "Option", tag }),
        }
    }
}

impl<T: Canonical> Canonical for Vec<T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.len() as u32);
        for v in self {
            v.encode(enc);
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let len = dec.u32()? as usize;
        // Every item takes at least one byte.
        if len > dec.remaining() {
            return Err(DecodeError::Truncated);
        }
        (0..len).map(|_| dec.get()).collect()
    }
}

impl<T: Canonical> Canonical for Box<T> {
    fn encode(&self, enc: &mut Encoder) {
        (**self).encode(enc);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Box::new(dec.get()?))
    }
}

impl Canonical for PlayerId {
    fn encode(&self, enc: &mut Encoder) {
        enc.u32(self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(PlayerId(dec.u32()?))
    }
}

impl Canonical for Digest {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(&self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Digest(dec.array()?))
    }
}

impl Canonical for AuthToken {
    fn encode(&self, enc: &mut Encoder) {
        enc.raw(&self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(AuthToken(dec.array()?))
    }
}

impl Canonical for Rational {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(rational::format(self).as_bytes());
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let text = String::from_utf8(dec.bytes()?).map_err(|_| DecodeError::Invalid("rational"))?;
        rational::parse(&text).map_err(|_| DecodeError::Invalid("rational"))
    }
}

impl Canonical for Tag {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            Tag::Proposal => 0,
            Tag::Prevote => 1,
            Tag::Precommit => 2,
            Tag::Slash => 3,
        });
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Tag::Proposal),
            1 => Ok(Tag::Prevote),
            2 => Ok(Tag::Precommit),
            3 => Ok(Tag::Slash),
            tag => Err(DecodeError::BadVariant { ty: "Tag", tag }),
        }
    }
}

impl Canonical for PayloadPredicate {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            PayloadPredicate::MaxLen(n) => {
                enc.u8(0);
                enc.u32(*n);
            }
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(PayloadPredicate::MaxLen(dec.u32()?)),
            tag => Err(DecodeError::BadVariant { ty: "PayloadPredicate", tag }),
        }
    }
}

impl Canonical for Genesis {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.shares);
        enc.put(&self.stake);
        enc.put(&self.reward);
        enc.put(&self.payload_predicate);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let shares = dec.get()?;
        let stake = dec.get()?;
        let reward = dec.get()?;
        let predicate = dec.get()?;
        Genesis::new(shares, stake, reward, predicate).map_err(|_| DecodeError::Invalid("genesis"))
    }
}

impl Canonical for Value {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.parent_hash);
        enc.bytes(&self.payload);
        enc.put(&self.deviators);
        enc.put(&self.proposer);
        enc.u64(self.height);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Value {
            parent_hash: dec.get()?,
            payload: dec.bytes()?,
            deviators: dec.get()?,
            proposer: dec.get()?,
            height: dec.u64()?,
        })
    }
}

impl Canonical for Body {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Body::Empty => enc.u8(0),
            Body::Value(v) => {
                enc.u8(1);
                enc.put(v);
            }
            Body::Slash { offender } => {
                enc.u8(2);
                enc.put(offender);
            }
            Body::Opaque(bytes) => {
                enc.u8(3);
                enc.bytes(bytes);
            }
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Body::Empty),
            1 => Ok(Body::Value(dec.get()?)),
            2 => Ok(Body::Slash { offender: dec.get()? }),
            3 => Ok(Body::Opaque(dec.bytes()?)),
            tag => Err(DecodeError::BadVariant { ty: "Body", tag }),
        }
    }
}

impl Canonical for Proof {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Proof::None => enc.u8(0),
            Proof::Transition(tp) => {
                enc.u8(1);
                enc.put(tp);
            }
            Proof::Deviation(dp) => {
                enc.u8(2);
                enc.put(dp);
            }
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Proof::None),
            1 => Ok(Proof::Transition(dec.get()?)),
            2 => Ok(Proof::Deviation(dec.get()?)),
            tag => Err(DecodeError::BadVariant { ty: "Proof", tag }),
        }
    }
}

impl Canonical for SignedHeader {
    fn encode(&self, enc: &mut Encoder) {
        encode_header_fields(self, enc);
        enc.put(&self.auth);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(SignedHeader {
            tag: dec.get()?,
            height: dec.u64()?,
            epoch: dec.u64()?,
            value_ref: dec.get()?,
            valid_epoch: dec.i64()?,
            sender: dec.get()?,
            body_digest: dec.get()?,
            proof_digest: dec.get()?,
            auth: dec.get()?,
        })
    }
}

impl Canonical for Message {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.tag);
        enc.u64(self.height);
        enc.u64(self.epoch);
        enc.put(&self.value_ref);
        enc.i64(self.valid_epoch);
        enc.put(&self.body);
        enc.put(&self.proof);
        enc.put(&self.sender);
        enc.put(&self.auth);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Message {
            tag: dec.get()?,
            height: dec.u64()?,
            epoch: dec.u64()?,
            value_ref: dec.get()?,
            valid_epoch: dec.i64()?,
            body: dec.get()?,
            proof: dec.get()?,
            sender: dec.get()?,
            auth: dec.get()?,
        })
    }
}

impl Canonical for ProofKind {
    fn encode(&self, enc: &mut Encoder) {
        let (tag, arg) = match *self {
            ProofKind::Genesis => (0, None),
            ProofKind::Decision { height } => (1, Some(height)),
            ProofKind::Skip { epoch } => (2, Some(epoch)),
            ProofKind::Proposal => (3, None),
            ProofKind::PrevoteQuorum { epoch } => (4, Some(epoch)),
            ProofKind::PrevoteQuorumAny { epoch } => (5, Some(epoch)),
            ProofKind::NilPrevoteQuorum { epoch } => (6, Some(epoch)),
            ProofKind::PrecommitQuorum { epoch } => (7, Some(epoch)),
            ProofKind::PrecommitQuorumAny { epoch } => (8, Some(epoch)),
            ProofKind::NilPrecommitQuorum { epoch } => (9, Some(epoch)),
        };
        enc.u8(tag);
        if let Some(arg) = arg {
            enc.u64(arg);
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(match dec.u8()? {
            0 => ProofKind::Genesis,
            1 => ProofKind::Decision { height: dec.u64()? },
            2 => ProofKind::Skip { epoch: dec.u64()? },
            3 => ProofKind::Proposal,
            4 => ProofKind::PrevoteQuorum { epoch: dec.u64()? },
            5 => ProofKind::PrevoteQuorumAny { epoch: dec.u64()? },
            6 => ProofKind::NilPrevoteQuorum { epoch: dec.u64()? },
            7 => ProofKind::PrecommitQuorum { epoch: dec.u64()? },
            8 => ProofKind::PrecommitQuorumAny { epoch: dec.u64()? },
            9 => ProofKind::NilPrecommitQuorum { epoch: dec.u64()? },
            tag => return Err(DecodeError::BadVariant { ty: "ProofKind", tag }),
        })
    }
}

impl Canonical for Justification {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.kind);
        enc.put(&self.evidence);
        enc.put(&self.value);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Justification { kind: dec.get()?, evidence: dec.get()?, value: dec.get()? })
    }
}

impl Canonical for TransitionProof {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.parts);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(TransitionProof { parts: dec.get()? })
    }
}

impl Canonical for DeviationForm {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(match self {
            DeviationForm::Contradiction => 0,
            DeviationForm::InvalidValue => 1,
            DeviationForm::InvalidSlash => 2,
            DeviationForm::InvalidTransition => 3,
        });
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(DeviationForm::Contradiction),
            1 => Ok(DeviationForm::InvalidValue),
            2 => Ok(DeviationForm::InvalidSlash),
            3 => Ok(DeviationForm::InvalidTransition),
            tag => Err(DecodeError::BadVariant { ty: "DeviationForm", tag }),
        }
    }
}

impl Canonical for DeviationEvidence {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            DeviationEvidence::Pair(a, b) => {
                enc.u8(0);
                enc.put(a);
                enc.put(b);
            }
            DeviationEvidence::Message(m) => {
                enc.u8(1);
                enc.put(m);
            }
        }
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(DeviationEvidence::Pair(dec.get()?, dec.get()?)),
            1 => Ok(DeviationEvidence::Message(dec.get()?)),
            tag => Err(DecodeError::BadVariant { ty: "DeviationEvidence", tag }),
        }
    }
}

impl Canonical for DeviationProof {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.form);
        enc.put(&self.offender);
        enc.put(&self.evidence);
        enc.put(&self.observed_head);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(DeviationProof {
            form: dec.get()?,
            offender: dec.get()?,
            evidence: dec.get()?,
            observed_head: dec.get()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::domain::Keyring;

    fn arb_digest() -> impl Strategy<Value = Digest> {
        any::<[u8; 32]>().prop_map(Digest)
    }

    fn arb_tag() -> impl Strategy<Value = Tag> {
        prop_oneof![Just(Tag::Proposal), Just(Tag::Prevote), Just(Tag::Precommit), Just(Tag::Slash)]
    }

    fn arb_header() -> impl Strategy<Value = SignedHeader> {
        (arb_tag(), 1..50u64, 1..50u64, proptest::option::of(arb_digest()), -1..5i64, 1..8u32)
            .prop_map(|(tag, h, e, v, ve, s)| {
                Message::new(tag, h, e, PlayerId(s))
                    .with_value_ref(v)
                    .with_valid_epoch(ve)
                    .sign(&Keyring::new(8, 1))
                    .header()
            })
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        (arb_digest(), proptest::collection::vec(any::<u8>(), 0..40), 1..8u32, 1..50u64).prop_map(
            |(parent_hash, payload, p, height)| Value {
                parent_hash,
                payload,
                deviators: vec![],
                proposer: PlayerId(p),
                height,
            },
        )
    }

    fn arb_kind() -> impl Strategy<Value = ProofKind> {
        (0..10u8, 0..20u64).prop_map(|(k, x)| match k {
            0 => ProofKind::Genesis,
            1 => ProofKind::Decision { height: x },
            2 => ProofKind::Skip { epoch: x },
            3 => ProofKind::Proposal,
            4 => ProofKind::PrevoteQuorum { epoch: x },
            5 => ProofKind::PrevoteQuorumAny { epoch: x },
            6 => ProofKind::NilPrevoteQuorum { epoch: x },
            7 => ProofKind::PrecommitQuorum { epoch: x },
            8 => ProofKind::PrecommitQuorumAny { epoch: x },
            _ => ProofKind::NilPrecommitQuorum { epoch: x },
        })
    }

    fn arb_justification() -> impl Strategy<Value = Justification> {
        (
            arb_kind(),
            proptest::collection::vec(arb_header(), 0..4),
            proptest::option::of(arb_value()),
        )
            .prop_map(|(kind, evidence, value)| Justification { kind, evidence, value })
    }

    fn arb_deviation() -> impl Strategy<Value = DeviationProof> {
        (arb_header(), arb_header(), 1..8u32, arb_digest()).prop_map(|(a, b, o, head)| {
            DeviationProof {
                form: DeviationForm::Contradiction,
                offender: PlayerId(o),
                evidence: DeviationEvidence::Pair(a, b),
                observed_head: head,
            }
        })
    }

    fn arb_body() -> impl Strategy<Value = Body> {
        prop_oneof![
            Just(Body::Empty),
            (arb_value(), proptest::collection::vec(arb_deviation(), 0..2)).prop_map(
                |(mut v, d)| {
                    v.deviators = d;
                    Body::Value(v)
                }
            ),
            (1..8u32).prop_map(|p| Body::Slash { offender: PlayerId(p) }),
            proptest::collection::vec(any::<u8>(), 0..16).prop_map(Body::Opaque),
        ]
    }

    fn arb_proof() -> impl Strategy<Value = Proof> {
        prop_oneof![
            Just(Proof::None),
            proptest::collection::vec(arb_justification(), 0..3)
                .prop_map(|parts| Proof::Transition(TransitionProof { parts })),
            arb_deviation().prop_map(|d| Proof::Deviation(Box::new(d))),
        ]
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        (arb_header(), arb_body(), arb_proof()).prop_map(|(h, body, proof)| {
            Message::new(h.tag, h.height, h.epoch, h.sender)
                .with_value_ref(h.value_ref)
                .with_valid_epoch(h.valid_epoch)
                .with_body(body)
                .with_proof(proof)
                .sign(&Keyring::new(8, 1))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

        #[test]
        fn message_round_trip(msg in arb_message()) {
            let bytes = canonical_encode(&msg);
            let back = canonical_decode(&bytes).unwrap();
            prop_assert_eq!(&back, &msg);
            prop_assert_eq!(canonical_encode(&back), bytes);
            prop_assert!(Keyring::new(8, 1).verify_message(&back));
        }

        #[test]
        fn truncation_is_rejected(msg in arb_message(), cut in 1usize..64) {
            let bytes = canonical_encode(&msg);
            let cut = cut.min(bytes.len());
            prop_assert!(canonical_decode(&bytes[..bytes.len() - cut]).is_err());
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let msg = Message::new(Tag::Prevote, 1, 1, PlayerId(1));
        let mut bytes = canonical_encode(&msg);
        bytes.push(0);
        assert_eq!(canonical_decode(&bytes), Err(DecodeError::Trailing(1)));
    }

    #[test]
    fn genesis_round_trip_validates() {
        let g = Genesis::equal(3, rational::int(10), rational::int(2), Default::default()).unwrap();
        let back = Genesis::from_canonical_bytes(&g.to_canonical_bytes()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn signing_bytes_exclude_token() {
        let keys = Keyring::new(2, 0);
        let a = Message::new(Tag::Precommit, 4, 2, PlayerId(2)).header();
        let b = Message::new(Tag::Precommit, 4, 2, PlayerId(2)).sign(&keys).header();
        assert_ne!(a.auth, b.auth);
        assert_eq!(header_signing_bytes(&a), header_signing_bytes(&b));
        assert!(header_signing_bytes(&a).starts_with(HEADER_DOMAIN));
    }
}
