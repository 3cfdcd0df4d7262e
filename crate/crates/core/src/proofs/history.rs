// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::domain::{PlayerId, SignedHeader, Tag};

type Slot = (PlayerId, u64, u64, Tag);

/// Append-only log of every authenticated message a player received,
/// indexed by `(sender, height, epoch, tag)`.
#[derive(Clone, Debug, Default)]
pub struct MessageHistory {
    log: Vec<SignedHeader>,
    index: BTreeMap<Slot, Vec<usize>>,
}

impl MessageHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `header` unless an identical one is already present. Returns
    /// whether it was new.
    pub fn append(&mut self, header: SignedHeader) -> bool {
        let slot = (header.sender, header.height, header.epoch, header.tag);
        let entries = self.index.entry(slot).or_default();
        if entries.iter().any(|&i| self.log[i] == header) {
            return false;
        }
        entries.push(self.log.len());
        self.log.push(header);
        true
    }

    pub fn contains(&self, header: &SignedHeader) -> bool {
        self.slot(header.sender, header.height, header.epoch, header.tag).any(|h| h == header)
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn slot(
        &self,
        sender: PlayerId,
        height: u64,
        epoch: u64,
        tag: Tag,
    ) -> impl Iterator<Item = &SignedHeader> {
        self.index.get(&(sender, height, epoch, tag)).into_iter().flatten().map(|&i| &self.log[i])
    }

    /// Everything `sender` sent at `height`, in slot order.
    pub fn from_sender_at(
        &self,
        sender: PlayerId,
        height: u64,
    ) -> impl Iterator<Item = &SignedHeader> {
        let lo = (sender, height, 0, Tag::Proposal);
        let hi = (sender, height, u64::MAX, Tag::Slash);
        self.index.range(lo..=hi).flat_map(|(_, ids)| ids.iter().map(|&i| &self.log[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = &SignedHeader> {
        self.log.iter()
    }
}
