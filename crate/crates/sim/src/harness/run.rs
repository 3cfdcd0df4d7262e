// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use tenderstake::consensus::{init_player, PlayerConfig, PlayerState, TraceEvent};
use tenderstake::domain::{Keyring, Message, PlayerId, Proof, Tag};
use tenderstake::ledger::{RewardRecord, SlashEvent};
use tenderstake::proofs::verify_deviation_proof;

use super::checks::{violations, DeviationRecord, RunMetrics};
use super::trace::{NoTrace, TraceEntry, TraceRecord, TraceSink};
use super::{ExperimentConfig, HarnessError};
use crate::adversary::{corrupt, Adversary};
use crate::netsim::{NetState, RoundEvents};

/// Runs `cfg` to its target height or round budget.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunMetrics, HarnessError> {
    run_traced(cfg, &mut NoTrace)
}

/// Like [`run_experiment`], streaming the trace into `sink`.
pub fn run_traced(
    cfg: &ExperimentConfig,
    sink: &mut impl TraceSink,
) -> Result<RunMetrics, HarnessError> {
    cfg.validate()?;
    let genesis = Arc::new(cfg.genesis()?);
    let keys = Arc::new(Keyring::new(cfg.n, cfg.seed));
    let mut adversary: Option<Adversary> = match &cfg.adversary {
        Some(a) => Some(corrupt(&genesis, &keys, &a.id_set(), a.strategy.clone())?),
        None => None,
    };
    let corrupted: BTreeSet<PlayerId> =
        adversary.as_ref().map(|a| a.corrupted().clone()).unwrap_or_default();

    sink.record(TraceRecord { round: 0, entry: TraceEntry::Config { config: cfg.clone() } })?;

    let mut players = Vec::with_capacity(cfg.n);
    let mut outputs = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let id = PlayerId::from_index(i);
        let config = PlayerConfig { timeouts: cfg.timeouts_for(id), payload_seed: cfg.seed };
        let (st, out) = init_player(Arc::clone(&genesis), id, Arc::clone(&keys), config)?;
        players.push(st);
        outputs.push((id, out));
    }

    let mut net = NetState::new(Arc::clone(&keys), &cfg.net);
    let mut obs = Observed::new(corrupted.clone());
    let mut events = RoundEvents::default();
    net.dispatch(outputs, &players, adversary.as_mut(), &cfg.net, &mut events);
    obs.absorb(events, sink)?;

    let budget = cfg.round_budget();
    let done = |players: &[PlayerState]| {
        players
            .iter()
            .filter(|p| !corrupted.contains(&p.id()))
            .all(|p| p.chain().height() >= cfg.heights)
    };
    while !done(&players) && net.round() < budget {
        let events = net.advance_round(&mut players, adversary.as_mut(), &cfg.net);
        obs.absorb(events, sink)?;
    }

    let mut m = obs.finish(&players, cfg.heights, net.round());
    m.violations = violations(&m, cfg, &genesis);
    Ok(m)
}

/// Accumulates what correct players report as the run goes.
struct Observed {
    corrupted: BTreeSet<PlayerId>,
    decisions: BTreeMap<PlayerId, BTreeMap<u64, tenderstake::domain::Digest>>,
    rounds_to_decide: BTreeMap<u64, u64>,
    rewards: BTreeMap<PlayerId, Vec<RewardRecord>>,
    slashes: BTreeMap<PlayerId, Vec<SlashEvent>>,
    deviations: Vec<DeviationRecord>,
    slash_messages: Vec<Message>,
    rejected: usize,
}

impl Observed {
    fn new(corrupted: BTreeSet<PlayerId>) -> Self {
        Self {
            corrupted,
            decisions: BTreeMap::new(),
            rounds_to_decide: BTreeMap::new(),
            rewards: BTreeMap::new(),
            slashes: BTreeMap::new(),
            deviations: Vec::new(),
            slash_messages: Vec::new(),
            rejected: 0,
        }
    }

    fn absorb(&mut self, ev: RoundEvents, sink: &mut impl TraceSink) -> Result<(), HarnessError> {
        let round = ev.round;
        let mut emit = |entry| sink.record(TraceRecord { round, entry });
        for d in ev.deliveries {
            emit(TraceEntry::Deliver(d))?;
        }
        for (player, out) in ev.outputs {
            let correct = !self.corrupted.contains(&player);
            for detail in out.events {
                if correct {
                    match &detail {
                        TraceEvent::Decided { height, digest, .. } => {
                            self.decisions.entry(player).or_default().insert(*height, *digest);
                            self.rounds_to_decide.entry(*height).or_insert(round);
                        }
                        TraceEvent::Deviation { offender, form, height } => {
                            self.deviations.push(DeviationRecord {
                                observer: player,
                                offender: *offender,
                                form: *form,
                                height: *height,
                                round,
                            });
                        }
                        _ => {}
                    }
                }
                emit(TraceEntry::Event { player, detail })?;
            }
            for record in out.rewards {
                self.rewards.entry(player).or_default().push(record.clone());
                emit(TraceEntry::Reward { observer: player, record })?;
            }
            for slash in out.slashes {
                self.slashes.entry(player).or_default().push(slash.clone());
                emit(TraceEntry::Slash { observer: player, slash })?;
            }
        }
        for (sender, e) in ev.rejected {
            self.rejected += 1;
            emit(TraceEntry::Rejected { sender, reason: e.to_string() })?;
        }
        self.slash_messages.extend(ev.sent.into_iter().filter(|m| m.tag == Tag::Slash));
        Ok(())
    }

    fn finish(mut self, players: &[PlayerState], heights: u64, rounds: u64) -> RunMetrics {
        let reference = players
            .iter()
            .filter(|p| !self.corrupted.contains(&p.id()))
            .max_by_key(|p| (p.chain().height(), std::cmp::Reverse(p.id())))
            .expect("at least one correct player");
        let id = reference.id();
        let view = reference.view();
        let is_correct = |p: &PlayerId| !self.corrupted.contains(p);

        let adversarial_share =
            reference.ledgers().iter().map(|l| l.combined_share(&self.corrupted)).collect();
        let last = heights.min(reference.chain().height()) as usize;
        let ledger = &reference.ledgers()[last];
        let all = (0..players.len()).map(PlayerId::from_index);
        let final_stakes = all.clone().map(|p| (p, ledger.absolute_stake(p))).collect();
        let final_shares = all.map(|p| (p, ledger.share(p).cloned().unwrap_or_default())).collect();

        let wire = self
            .slash_messages
            .iter()
            .filter_map(|m| match &m.proof {
                Proof::Deviation(dp) if is_correct(&dp.offender) => Some(dp),
                _ => None,
            })
            .filter(|dp| verify_deviation_proof(dp, &view))
            .count();
        let detected = self.deviations.iter().filter(|d| is_correct(&d.offender)).count();
        let in_blocks = reference
            .chain()
            .blocks()
            .iter()
            .flat_map(|b| b.value.deviator_ids())
            .filter(is_correct)
            .count();

        RunMetrics {
            n: players.len(),
            reference: id,
            decisions: std::mem::take(&mut self.decisions),
            rounds_to_decide: std::mem::take(&mut self.rounds_to_decide),
            adversarial_share,
            reward_records: self.rewards.remove(&id).unwrap_or_default(),
            slash_events: self.slashes.remove(&id).unwrap_or_default(),
            honest_accusations: wire + detected + in_blocks,
            deviations: std::mem::take(&mut self.deviations),
            final_stakes,
            final_shares,
            slashed: ledger.slashed().clone(),
            rejected_emissions: self.rejected,
            rounds,
            violations: Vec::new(),
            corrupted: self.corrupted,
        }
    }
}
