// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use tenderstake::domain::rational::{self, Rational};
use tenderstake::domain::{Digest, Genesis, PlayerId};
use tenderstake::ledger::{cumulative_slash_income, RewardRecord, SlashEvent};
use tenderstake::proofs::DeviationForm;

use super::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub observer: PlayerId,
    pub offender: PlayerId,
    pub form: DeviationForm,
    pub height: u64,
    pub round: u64,
}

/// Observables of one run. Ledger-derived fields come from the reference
/// player: the correct player with the longest chain, lowest id on ties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub n: usize,
    pub corrupted: BTreeSet<PlayerId>,
    pub reference: PlayerId,
    /// Decided value digests, per correct player and height.
    pub decisions: BTreeMap<PlayerId, BTreeMap<u64, Digest>>,
    /// First round in which a correct player decided each height.
    pub rounds_to_decide: BTreeMap<u64, u64>,
    /// Combined share of the corrupted players: index 0 at genesis, index
    /// `h` after deciding height `h`.
    #[serde(with = "rational::serde_vec")]
    pub adversarial_share: Vec<Rational>,
    pub reward_records: Vec<RewardRecord>,
    pub slash_events: Vec<SlashEvent>,
    /// Deviations detected by correct players.
    pub deviations: Vec<DeviationRecord>,
    /// Deviation proofs naming a correct player that verify against the
    /// reference chain, from slashes on the wire, detections and blocks.
    pub honest_accusations: usize,
    /// Each player's absolute stake after the target height (or the last
    /// decided height if the run fell short).
    #[serde(with = "stake_map")]
    pub final_stakes: BTreeMap<PlayerId, Rational>,
    #[serde(with = "stake_map")]
    pub final_shares: BTreeMap<PlayerId, Rational>,
    pub slashed: BTreeSet<PlayerId>,
    pub rejected_emissions: usize,
    pub rounds: u64,
    pub violations: Vec<String>,
}

mod stake_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use tenderstake::domain::rational::{self, Rational};
    use tenderstake::domain::PlayerId;

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<PlayerId, Rational>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let text: BTreeMap<u32, String> =
            m.iter().map(|(p, r)| (p.0, rational::format(r))).collect();
        text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<PlayerId, Rational>, D::Error> {
        let text = BTreeMap::<u32, String>::deserialize(d)?;
        text.into_iter()
            .map(|(p, r)| {
                rational::parse(&r).map(|r| (PlayerId(p), r)).map_err(serde::de::Error::custom)
            })
            .collect()
    }
}

impl RunMetrics {
    pub fn correct(&self) -> impl Iterator<Item = PlayerId> + '_ {
        (1..=self.n as u32).map(PlayerId).filter(|p| !self.corrupted.contains(p))
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// All correct players agree on every height either of them decided.
pub fn check_safety(m: &RunMetrics) -> bool {
    let mut agreed: BTreeMap<u64, Digest> = BTreeMap::new();
    m.decisions.values().flatten().all(|(h, d)| *agreed.entry(*h).or_insert(*d) == *d)
}

/// Every correct player decided every target height.
pub fn check_liveness(m: &RunMetrics, cfg: &ExperimentConfig) -> bool {
    m.correct().all(|p| {
        let decided = m.decisions.get(&p);
        (1..=cfg.heights).all(|h| decided.is_some_and(|d| d.contains_key(&h)))
    })
}

/// The corrupted share never exceeds its genesis value and drops at every
/// height where a corrupted player is slashed.
pub fn check_fairness(m: &RunMetrics) -> bool {
    let Some(initial) = m.adversarial_share.first() else { return true };
    if m.adversarial_share.iter().any(|s| s > initial) {
        return false;
    }
    m.slash_events.iter().filter(|e| !e.new_deviators.is_disjoint(&m.corrupted)).all(|e| {
        let h = e.height as usize;
        match (m.adversarial_share.get(h - 1), m.adversarial_share.get(h)) {
            (Some(before), Some(after)) => after < before,
            _ => false,
        }
    })
}

/// Never-slashed players earn `genesis share * genesis reward` per height,
/// and nobody's cumulative slash bonus reaches that amount.
pub fn check_rewards(m: &RunMetrics, g: &Genesis) -> bool {
    let per_height = |p: PlayerId| g.share(p).map(|s| s * g.reward());
    let base_ok = m
        .reward_records
        .iter()
        .filter(|r| !m.slashed.contains(&r.player))
        .all(|r| per_height(r.player).as_ref() == Some(&r.base_reward));
    let bonus_ok = g.players().all(|p| {
        let cap = per_height(p).expect("genesis player");
        cumulative_slash_income(&m.reward_records, p) < cap
    });
    base_ok && bonus_ok
}

/// No correct player was accused with a verifying proof or slashed.
pub fn check_no_honest_slashing(m: &RunMetrics) -> bool {
    m.honest_accusations == 0
        && m.correct().all(|p| !m.slashed.contains(&p))
        && m.deviations.iter().all(|d| m.corrupted.contains(&d.offender))
}

/// Names of the checks `m` fails.
pub fn violations(m: &RunMetrics, cfg: &ExperimentConfig, g: &Genesis) -> Vec<String> {
    let checks: [(&str, bool); 5] = [
        ("safety", check_safety(m)),
        ("liveness", check_liveness(m, cfg)),
        ("fairness", check_fairness(m)),
        ("rewards", check_rewards(m, g)),
        ("honest_slashing", check_no_honest_slashing(m)),
    ];
    checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| name.to_string()).collect()
}
