// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use proptest::prelude::*;
use tenderstake::domain::rational::{int, ratio, Rational};
use tenderstake::domain::{Genesis, PayloadPredicate, PlayerId};
use tenderstake::ledger::Ledger;
use tenderstake::quorum::{exceeds, tally, Threshold, VoteContext};

/// Shares where players `0..a.len()` hold exactly 2/3 and the first player
/// after them holds the smallest share.
fn split_ledger(a: &[i64], b: &[i64]) -> Option<Ledger> {
    let sa: i64 = a.iter().sum();
    let sb: i64 = 1 + b.iter().sum::<i64>();
    let mut shares: Vec<Rational> = a.iter().map(|&x| ratio(2 * x, 3 * sa)).collect();
    shares.push(ratio(1, 3 * sb));
    shares.extend(b.iter().map(|&x| ratio(x, 3 * sb)));
    let g = Genesis::new(shares, int(100), int(12), PayloadPredicate::default()).ok()?;
    Some(Ledger::from_genesis(Arc::new(g)))
}

fn ids(range: std::ops::Range<usize>) -> Vec<PlayerId> {
    range.map(PlayerId::from_index).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn exactly_two_thirds_never_passes(
        a in prop::collection::vec(1i64..40, 2..7),
        b in prop::collection::vec(1i64..40, 0..5),
    ) {
        let Some(ledger) = split_ledger(&a, &b) else { return Ok(()) };
        let ctx = VoteContext::new(&ledger);
        let core = ids(0..a.len());
        prop_assert_eq!(tally(core.iter().copied(), &ctx), ratio(2, 3));
        prop_assert!(!exceeds(core.iter().copied(), Threshold::TwoThirds, &ctx));

        let mut plus = core.clone();
        plus.push(PlayerId::from_index(a.len()));
        prop_assert!(exceeds(plus.iter().copied(), Threshold::TwoThirds, &ctx));

        // Naming the extra player as a deviator takes the tally back down.
        let scoped = VoteContext::with_deviators(&ledger, [PlayerId::from_index(a.len())].into());
        prop_assert!(!exceeds(plus.iter().copied(), Threshold::TwoThirds, &scoped));
    }

    #[test]
    fn tally_is_monotone_and_ignores_duplicates(
        a in prop::collection::vec(1i64..40, 2..7),
        b in prop::collection::vec(1i64..40, 0..5),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..12),
    ) {
        let Some(ledger) = split_ledger(&a, &b) else { return Ok(()) };
        let ctx = VoteContext::new(&ledger);
        let n = ledger.num_players();
        let mut senders = Vec::new();
        let mut last = int(0);
        for p in picks {
            senders.push(PlayerId::from_index(p.index(n)));
            let t = tally(senders.iter().copied(), &ctx);
            prop_assert!(t >= last);
            last = t;
        }
        let doubled = senders.iter().chain(senders.iter()).copied();
        prop_assert_eq!(tally(doubled, &ctx), last);
    }
}
