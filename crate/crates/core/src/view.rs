// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Read-only view of a player's chain and ledger at the height under
//! consensus.
//!
//! Verification is always done against the view at the height of the message
//! being checked, so every correct player with the same chain prefix reaches
//! the same verdict regardless of how far ahead it is.

use std::collections::BTreeSet;

use crate::domain::{chain_deviators, head_of, Block, Blockchain, Digest, Keyring, PlayerId};
use crate::ledger::Ledger;

#[derive(Clone, Copy, Debug)]
pub struct ChainView<'a> {
    genesis_hash: Digest,
    blocks: &'a [Block],
    /// `ledgers[k]` is the ledger after `k` decided blocks.
    ledgers: &'a [Ledger],
    keys: &'a Keyring,
}

impl<'a> ChainView<'a> {
    /// `ledgers` must hold one snapshot per decided block plus the genesis
    /// ledger.
    pub fn new(chain: &'a Blockchain, ledgers: &'a [Ledger], keys: &'a Keyring) -> Self {
        assert_eq!(
            ledgers.len() as u64,
            chain.height() + 1,
            "one ledger snapshot per decided height plus genesis"
        );
        Self { genesis_hash: chain.genesis_hash(), blocks: chain.blocks(), ledgers, keys }
    }

    /// The height currently being decided: one above the last block.
    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 + 1
    }

    /// The view a player had while deciding `height`, if this view has
    /// reached it.
    pub fn at(&self, height: u64) -> Option<ChainView<'a>> {
        if height == 0 || height > self.height() {
            return None;
        }
        let decided = (height - 1) as usize;
        Some(ChainView {
            genesis_hash: self.genesis_hash,
            blocks: &self.blocks[..decided],
            ledgers: &self.ledgers[..=decided],
            keys: self.keys,
        })
    }

    pub fn head_hash(&self) -> Digest {
        head_of(self.genesis_hash, self.blocks)
    }

    pub fn blocks(&self) -> &'a [Block] {
        self.blocks
    }

    pub fn ledger(&self) -> &'a Ledger {
        &self.ledgers[self.blocks.len()]
    }

    pub fn keys(&self) -> &'a Keyring {
        self.keys
    }

    pub fn deviators(&self) -> BTreeSet<PlayerId> {
        chain_deviators(self.blocks)
    }
}
