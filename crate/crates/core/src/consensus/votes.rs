// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::domain::{Message, PlayerId, SignedHeader, Tag, Value};
use crate::quorum::{tally_exceeds, Threshold, ValueSelector, VoteContext, VoteKey, VoteSet};

#[derive(Clone, Debug)]
struct EpochRecord {
    proposal: Option<Message>,
    /// Every distinct vote, so a sender's conflicting votes each count
    /// towards the quorum of their own value whatever the arrival order.
    prevotes: Vec<SignedHeader>,
    precommits: Vec<SignedHeader>,
    /// First non-slash message per sender, for the skip rule.
    any: BTreeMap<PlayerId, SignedHeader>,
}

impl EpochRecord {
    fn new() -> Self {
        Self { proposal: None, prevotes: Vec::new(), precommits: Vec::new(), any: BTreeMap::new() }
    }
}

/// Valid messages received for the height under consensus, by epoch.
#[derive(Clone, Debug)]
pub(crate) struct EpochVotes {
    height: u64,
    epochs: BTreeMap<u64, EpochRecord>,
}

impl EpochVotes {
    pub fn new(height: u64) -> Self {
        Self { height, epochs: BTreeMap::new() }
    }

    /// Records a message that passed validation. Proposals keep the first
    /// one seen.
    pub fn insert(&mut self, msg: &Message, header: SignedHeader) {
        if msg.height != self.height || msg.tag == Tag::Slash {
            return;
        }
        let rec = self.epochs.entry(msg.epoch).or_insert_with(EpochRecord::new);
        rec.any.entry(msg.sender).or_insert_with(|| header.clone());
        match msg.tag {
            Tag::Proposal => {
                rec.proposal.get_or_insert_with(|| msg.clone());
            }
            Tag::Prevote => push_distinct(&mut rec.prevotes, header),
            Tag::Precommit => push_distinct(&mut rec.precommits, header),
            Tag::Slash => {}
        }
    }

    pub fn proposal(&self, epoch: u64) -> Option<&Message> {
        self.epochs.get(&epoch)?.proposal.as_ref()
    }

    /// Epochs with a recorded proposal, ascending.
    pub fn proposal_epochs(&self) -> Vec<u64> {
        self.epochs.iter().filter(|(_, r)| r.proposal.is_some()).map(|(e, _)| *e).collect()
    }

    /// The matching votes if they exceed two thirds. `value` supplies the
    /// deviators to exclude for value-specific quorums.
    pub fn quorum(
        &self,
        tag: Tag,
        epoch: u64,
        selector: ValueSelector,
        value: Option<&Value>,
        ctx: &VoteContext<'_>,
    ) -> Option<Vec<SignedHeader>> {
        let rec = self.epochs.get(&epoch)?;
        let all = match tag {
            Tag::Prevote => &rec.prevotes,
            Tag::Precommit => &rec.precommits,
            _ => return None,
        };
        let key = VoteKey { tag, height: self.height, epoch, value: selector };
        let set = VoteSet::collect(key, all);
        let scoped;
        let ctx = match value {
            Some(v) => {
                scoped = VoteContext::with_deviators(ctx.ledger, v.deviator_ids());
                &scoped
            }
            None => ctx,
        };
        tally_exceeds(&set, Threshold::TwoThirds, ctx).then(|| set.into_votes())
    }

    /// The highest epoch above `above` in which more than a third of the
    /// stake sent messages, with those messages.
    pub fn skip_target(
        &self,
        above: u64,
        ctx: &VoteContext<'_>,
    ) -> Option<(u64, Vec<SignedHeader>)> {
        self.epochs.range(above + 1..).rev().find_map(|(e, rec)| {
            crate::quorum::exceeds(rec.any.keys().copied(), Threshold::OneThird, ctx)
                .then(|| (*e, rec.any.values().cloned().collect()))
        })
    }
}

fn push_distinct(votes: &mut Vec<SignedHeader>, header: SignedHeader) {
    if !votes.iter().any(|v| v.same_content(&header)) {
        votes.push(header);
    }
}
