// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Values, blocks, chains and protocol messages shared by every module.

mod auth;
pub mod encoding;
pub mod rational;
pub mod validity;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub use auth::{AuthToken, Keyring, RestrictedSigner, Signer};
pub use encoding::{canonical_decode, canonical_encode, Canonical, DecodeError};
pub use rational::Rational;
pub use validity::value_valid;

use crate::proofs::{DeviationProof, Justification, TransitionProof};

/// A player identifier. Players are numbered from 1, matching `P1..Pn`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u32);

impl PlayerId {
    /// Zero-based position in share vectors.
    pub fn index(self) -> usize {
        (self.0 as usize).wrapping_sub(1)
    }

    pub fn from_index(index: usize) -> Self {
        Self(index as u32 + 1)
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(&text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Digest(out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tag {
    Proposal,
    Prevote,
    Precommit,
    Slash,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Tag::Proposal => "PROPOSAL",
            Tag::Prevote => "PREVOTE",
            Tag::Precommit => "PRECOMMIT",
            Tag::Slash => "SLASH",
        };
        f.write_str(name)
    }
}

/// Application validity predicate for payloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayloadPredicate {
    /// Any byte string of at most this many bytes.
    MaxLen(u32),
}

impl PayloadPredicate {
    pub fn accepts(&self, payload: &[u8]) -> bool {
        match *self {
            PayloadPredicate::MaxLen(max) => payload.len() <= max as usize,
        }
    }
}

impl Default for PayloadPredicate {
    fn default() -> Self {
        PayloadPredicate::MaxLen(64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GenesisError {
    #[error("genesis needs at least one player")]
    NoPlayers,
    #[error("shares sum to {0}, expected exactly 1")]
    SharesDoNotSumToOne(String),
    #[error("share of {player} is {share}; every share must lie strictly between 0 and 1/2")]
    ShareOutOfRange { player: PlayerId, share: String },
    #[error("genesis stake must be positive")]
    NonPositiveStake,
    #[error("genesis reward must be positive")]
    NonPositiveReward,
}

/// Initial ledger parameters agreed by every player.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Genesis {
    shares: Vec<Rational>,
    stake: Rational,
    reward: Rational,
    payload_predicate: PayloadPredicate,
}

impl Genesis {
    pub fn new(
        shares: Vec<Rational>,
        stake: Rational,
        reward: Rational,
        payload_predicate: PayloadPredicate,
    ) -> Result<Self, GenesisError> {
        if shares.is_empty() {
            return Err(GenesisError::NoPlayers);
        }
        let half = rational::ratio(1, 2);
        for (i, share) in shares.iter().enumerate() {
            if !rational::is_positive(share) || *share >= half {
                return Err(GenesisError::ShareOutOfRange {
                    player: PlayerId::from_index(i),
                    share: rational::format(share),
                });
            }
        }
        let total: Rational = shares.iter().sum();
        if total != rational::one() {
            return Err(GenesisError::SharesDoNotSumToOne(rational::format(&total)));
        }
        if !rational::is_positive(&stake) {
            return Err(GenesisError::NonPositiveStake);
        }
        if !rational::is_positive(&reward) {
            return Err(GenesisError::NonPositiveReward);
        }
        Ok(Self { shares, stake, reward, payload_predicate })
    }

    /// `n` players with share `1/n` each.
    pub fn equal(
        n: usize,
        stake: Rational,
        reward: Rational,
        payload_predicate: PayloadPredicate,
    ) -> Result<Self, GenesisError> {
        let shares = vec![rational::ratio(1, n.max(1) as i64); n];
        Self::new(shares, stake, reward, payload_predicate)
    }

    pub fn shares(&self) -> &[Rational] {
        &self.shares
    }

    pub fn share(&self, player: PlayerId) -> Option<&Rational> {
        self.shares.get(player.index())
    }

    pub fn stake(&self) -> &Rational {
        &self.stake
    }

    pub fn reward(&self) -> &Rational {
        &self.reward
    }

    pub fn payload_predicate(&self) -> PayloadPredicate {
        self.payload_predicate
    }

    pub fn num_players(&self) -> usize {
        self.shares.len()
    }

    pub fn players(&self) -> impl Iterator<Item = PlayerId> {
        (0..self.shares.len()).map(PlayerId::from_index)
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_canonical_bytes())
    }
}

/// A proposed block body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Value {
    pub parent_hash: Digest,
    pub payload: Vec<u8>,
    /// Deviation proofs carried by this value, sorted by offender.
    pub deviators: Vec<DeviationProof>,
    pub proposer: PlayerId,
    pub height: u64,
}

impl Value {
    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_canonical_bytes())
    }

    pub fn deviator_ids(&self) -> BTreeSet<PlayerId> {
        self.deviators.iter().map(|dp| dp.offender).collect()
    }
}

/// A decided value together with the precommit quorum that decided it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub value: Value,
    pub commit_quorum: Justification,
}

impl Block {
    /// Blocks are identified by their value; commit quorums may differ between
    /// players that decided the same value.
    pub fn digest(&self) -> Digest {
        self.value.digest()
    }
}

/// The genesis block followed by decided blocks at heights `1..=height()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blockchain {
    genesis_hash: Digest,
    blocks: Vec<Block>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("block at height {got} does not extend chain of height {height}")]
    WrongHeight { height: u64, got: u64 },
    #[error("block parent {got:?} does not match head {head:?}")]
    WrongParent { head: Digest, got: Digest },
}

impl Blockchain {
    pub fn new(genesis: &Genesis) -> Self {
        Self { genesis_hash: genesis.digest(), blocks: Vec::new() }
    }

    pub fn genesis_hash(&self) -> Digest {
        self.genesis_hash
    }

    /// Number of decided blocks, not counting genesis.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head_hash(&self) -> Digest {
        head_of(self.genesis_hash, &self.blocks)
    }

    pub fn append(&mut self, block: Block) -> Result<(), ChainError> {
        if block.value.height != self.height() + 1 {
            return Err(ChainError::WrongHeight { height: self.height(), got: block.value.height });
        }
        if block.value.parent_hash != self.head_hash() {
            return Err(ChainError::WrongParent {
                head: self.head_hash(),
                got: block.value.parent_hash,
            });
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn deviators(&self) -> BTreeSet<PlayerId> {
        chain_deviators(&self.blocks)
    }
}

pub(crate) fn head_of(genesis_hash: Digest, blocks: &[Block]) -> Digest {
    blocks.last().map_or(genesis_hash, Block::digest)
}

/// Union of the deviators named by every block.
pub fn chain_deviators(blocks: &[Block]) -> BTreeSet<PlayerId> {
    blocks.iter().flat_map(|b| b.value.deviator_ids()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Body {
    Empty,
    Value(Value),
    Slash {
        offender: PlayerId,
    },
    /// Bytes that follow no protocol format.
    Opaque(Vec<u8>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Proof {
    None,
    Transition(TransitionProof),
    Deviation(Box<DeviationProof>),
}

/// An authenticated protocol message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub tag: Tag,
    pub height: u64,
    pub epoch: u64,
    pub value_ref: Option<Digest>,
    /// `-1` unless this is a proposal re-proposing a value seen in an earlier epoch.
    pub valid_epoch: i64,
    pub body: Body,
    pub proof: Proof,
    pub sender: PlayerId,
    pub auth: AuthToken,
}

impl Message {
    /// Unsigned message; call [`Message::sign`] before sending.
    pub fn new(tag: Tag, height: u64, epoch: u64, sender: PlayerId) -> Self {
        Self {
            tag,
            height,
            epoch,
            value_ref: None,
            valid_epoch: -1,
            body: Body::Empty,
            proof: Proof::None,
            sender,
            auth: AuthToken::default(),
        }
    }

    pub fn with_value_ref(mut self, value_ref: Option<Digest>) -> Self {
        self.value_ref = value_ref;
        self
    }

    pub fn with_valid_epoch(mut self, valid_epoch: i64) -> Self {
        self.valid_epoch = valid_epoch;
        self
    }

    pub fn with_body(mut self, body: Body) -> Self {
        self.body = body;
        self
    }

    pub fn with_proof(mut self, proof: Proof) -> Self {
        self.proof = proof;
        self
    }

    /// Signs as `self.sender`. A signer without that player's key leaves the
    /// token zeroed, which never verifies.
    pub fn sign(mut self, signer: &impl Signer) -> Self {
        let bytes = self.header().unsigned_bytes();
        self.auth = signer.sign(self.sender, &bytes).unwrap_or_default();
        self
    }

    pub fn header(&self) -> SignedHeader {
        SignedHeader {
            tag: self.tag,
            height: self.height,
            epoch: self.epoch,
            value_ref: self.value_ref,
            valid_epoch: self.valid_epoch,
            sender: self.sender,
            body_digest: Digest::of(&self.body.to_canonical_bytes()),
            proof_digest: Digest::of(&self.proof.to_canonical_bytes()),
            auth: self.auth,
        }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&canonical_encode(self))
    }

    pub fn proposed_value(&self) -> Option<&Value> {
        match &self.body {
            Body::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn transition_proof(&self) -> Option<&TransitionProof> {
        match &self.proof {
            Proof::Transition(tp) => Some(tp),
            _ => None,
        }
    }

    pub fn record(&self) -> MessageRecord {
        MessageRecord {
            tag: self.tag,
            height: self.height,
            epoch: self.epoch,
            value_ref: self.value_ref,
            valid_epoch: self.valid_epoch,
            sender: self.sender,
        }
    }
}

/// The signed part of a message: its header plus digests binding the body and
/// the attached proof. Proof evidence carries headers rather than whole
/// messages so that evidence does not nest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedHeader {
    pub tag: Tag,
    pub height: u64,
    pub epoch: u64,
    pub value_ref: Option<Digest>,
    pub valid_epoch: i64,
    pub sender: PlayerId,
    pub body_digest: Digest,
    pub proof_digest: Digest,
    pub auth: AuthToken,
}

impl SignedHeader {
    /// Bytes covered by the authentication token.
    pub fn unsigned_bytes(&self) -> Vec<u8> {
        encoding::header_signing_bytes(self)
    }

    /// Equal in everything but the token.
    pub fn same_content(&self, other: &SignedHeader) -> bool {
        self.unsigned_bytes() == other.unsigned_bytes()
    }
}

/// JSON-lines rendering of a message for trace files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub tag: Tag,
    pub height: u64,
    pub epoch: u64,
    pub value_ref: Option<Digest>,
    pub valid_epoch: i64,
    pub sender: PlayerId,
}
