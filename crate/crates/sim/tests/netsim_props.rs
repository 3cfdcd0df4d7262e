// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use proptest::prelude::*;
use tenderstake::consensus::{init_player, PlayerConfig, PlayerState};
use tenderstake::domain::rational::int;
use tenderstake::domain::{Genesis, Keyring, Message, PayloadPredicate, PlayerId, Tag};
use tenderstake_sim::netsim::{NetConfig, NetState, PreGsrPolicy};

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    /// Every scheduled delivery lands after the send round and no later
    /// than `max(send, gsr) + delta`.
    #[test]
    fn deliveries_respect_the_bound(
        gsr in 1u64..60,
        delta in 1u64..10,
        seed in any::<u64>(),
        drop in any::<bool>(),
        sends in proptest::collection::vec((0u64..80, 1u32..=5), 1..30),
    ) {
        let keys = Arc::new(Keyring::new(5, seed));
        let policy = if drop { PreGsrPolicy::DropUntilGsrResend } else { PreGsrPolicy::ArbitraryDelay };
        let cfg = NetConfig { gsr, delta, seed, pre_gsr_policy: policy };
        let mut sorted = sends.clone();
        sorted.sort();
        let g = Arc::new(Genesis::equal(5, int(100), int(10), PayloadPredicate::MaxLen(8)).unwrap());
        let mut players: Vec<PlayerState> = g
            .players()
            .map(|p| init_player(Arc::clone(&g), p, Arc::clone(&keys), PlayerConfig::default()).unwrap().0)
            .collect();
        let mut st = NetState::new(Arc::clone(&keys), &cfg);
        let mut tracked = std::collections::BTreeSet::new();
        let mut count = 0;
        let mut delivered = Vec::new();
        for (round, sender) in sorted {
            while st.round() < round {
                delivered.extend(st.advance_round(&mut players, None, &cfg).deliveries.into_iter().map(|d| (st.round(), d)));
            }
            let m = Message::new(Tag::Prevote, 1, 1_000 + round, PlayerId(sender)).sign(&*keys);
            tracked.insert(m.digest());
            count += 1;
            st.schedule_broadcast(m, &cfg).unwrap();
        }
        for _ in 0..gsr + delta + 1 {
            delivered.extend(st.advance_round(&mut players, None, &cfg).deliveries.into_iter().map(|d| (st.round(), d)));
        }
        let mine: Vec<_> = delivered.iter().filter(|(_, d)| tracked.contains(&d.digest)).collect();
        prop_assert_eq!(mine.len(), 5 * count);
        for (at, d) in mine {
            prop_assert!(*at > d.sent);
            prop_assert!(*at <= cfg.bound(d.sent));
            if drop && d.sent < gsr {
                prop_assert!(*at > gsr);
            }
        }
    }
}
