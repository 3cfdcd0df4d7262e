// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Simulated signatures.
//!
//! Each player owns a secret registered in a [`Keyring`]; a token is
//! `SHA-256(secret || bytes)` and verification recomputes it. Only code that
//! holds a player's secret can produce a verifying token for that player.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use sha2::{Digest as _, Sha256};

use super::{Message, PlayerId, SignedHeader};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct AuthToken(pub [u8; 32]);

impl fmt::Debug for AuthToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AuthToken({})", hex::encode(&self.0[..6]))
    }
}

pub trait Signer {
    /// `None` when this signer holds no key for `player`.
    fn sign(&self, player: PlayerId, bytes: &[u8]) -> Option<AuthToken>;
}

/// Registry of every player's secret.
#[derive(Clone)]
pub struct Keyring {
    secrets: Vec<[u8; 32]>,
}

impl fmt::Debug for Keyring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keyring").field("players", &self.secrets.len()).finish()
    }
}

impl Keyring {
    pub fn new(num_players: usize, seed: u64) -> Self {
        let secrets = (0..num_players)
            .map(|i| {
                let mut h = Sha256::new();
                h.update(b"tenderstake/keyring/v1");
                h.update(seed.to_be_bytes());
                h.update((i as u64).to_be_bytes());
                h.finalize().into()
            })
            .collect();
        Self { secrets }
    }

    pub fn num_players(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_known(&self, player: PlayerId) -> bool {
        player.0 >= 1 && player.index() < self.secrets.len()
    }

    pub fn verify(&self, player: PlayerId, bytes: &[u8], token: &AuthToken) -> bool {
        match self.token(player, bytes) {
            Some(expected) => expected == *token,
            None => false,
        }
    }

    pub fn verify_header(&self, header: &SignedHeader) -> bool {
        self.verify(header.sender, &header.unsigned_bytes(), &header.auth)
    }

    pub fn verify_message(&self, msg: &Message) -> bool {
        self.verify_header(&msg.header())
    }

    /// A signer limited to `players`.
    pub fn restricted(self: &Arc<Self>, players: BTreeSet<PlayerId>) -> RestrictedSigner {
        RestrictedSigner { keys: Arc::clone(self), players }
    }

    fn token(&self, player: PlayerId, bytes: &[u8]) -> Option<AuthToken> {
        if !self.is_known(player) {
            return None;
        }
        let mut h = Sha256::new();
        h.update(self.secrets[player.index()]);
        h.update(bytes);
        Some(AuthToken(h.finalize().into()))
    }
}

impl Signer for Keyring {
    fn sign(&self, player: PlayerId, bytes: &[u8]) -> Option<AuthToken> {
        self.token(player, bytes)
    }
}

impl<T: Signer + ?Sized> Signer for Arc<T> {
    fn sign(&self, player: PlayerId, bytes: &[u8]) -> Option<AuthToken> {
        (**self).sign(player, bytes)
    }
}

/// Holds keys only for a fixed set of players (the corrupted ones).
#[derive(Clone, Debug)]
pub struct RestrictedSigner {
    keys: Arc<Keyring>,
    players: BTreeSet<PlayerId>,
}

impl RestrictedSigner {
    pub fn players(&self) -> &BTreeSet<PlayerId> {
        &self.players
    }
}

impl Signer for RestrictedSigner {
    fn sign(&self, player: PlayerId, bytes: &[u8]) -> Option<AuthToken> {
        if self.players.contains(&player) {
            self.keys.token(player, bytes)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Tag;

    #[test]
    fn tokens_bind_player_and_bytes() {
        let keys = Keyring::new(4, 9);
        let t = keys.sign(PlayerId(1), b"abc").unwrap();
        assert!(keys.verify(PlayerId(1), b"abc", &t));
        assert!(!keys.verify(PlayerId(2), b"abc", &t));
        assert!(!keys.verify(PlayerId(1), b"abd", &t));
        assert!(keys.sign(PlayerId(5), b"abc").is_none());
        assert!(keys.sign(PlayerId(0), b"abc").is_none());
    }

    #[test]
    fn restricted_signer_cannot_forge() {
        let keys = Arc::new(Keyring::new(4, 1));
        let adv = keys.restricted([PlayerId(4)].into());
        let own = Message::new(Tag::Prevote, 1, 1, PlayerId(4)).sign(&adv);
        assert!(keys.verify_message(&own));
        let forged = Message::new(Tag::Prevote, 1, 1, PlayerId(1)).sign(&adv);
        assert!(!keys.verify_message(&forged));
    }
}
