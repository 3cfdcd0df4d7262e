// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tenderstake::consensus::TimeoutSchedule;
use tenderstake::domain::rational::{self, ratio, Rational};
use tenderstake::domain::{Genesis, PayloadPredicate, PlayerId};

use super::HarnessError;
use crate::adversary::{StrategyName, StrategySpec};
use crate::netsim::{NetConfig, PreGsrPolicy};

/// Genesis parameters. Rationals are written as `"a/b"` or integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisConfig {
    /// One share per player; equal shares when absent.
    #[serde(default)]
    pub shares: Option<Vec<String>>,
    #[serde(default = "default_stake")]
    pub stake: String,
    #[serde(default = "default_reward")]
    pub reward: String,
    /// Longest payload the validity predicate accepts.
    #[serde(default = "default_max_payload")]
    pub max_payload: u32,
}

fn default_stake() -> String {
    "100".into()
}

fn default_reward() -> String {
    "12".into()
}

fn default_max_payload() -> u32 {
    64
}

impl Default for GenesisConfig {
    fn default() -> Self {
        Self {
            shares: None,
            stake: default_stake(),
            reward: default_reward(),
            max_payload: default_max_payload(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub ids: Vec<u32>,
    pub strategy: StrategySpec,
}

impl AdversaryConfig {
    pub fn id_set(&self) -> BTreeSet<PlayerId> {
        self.ids.iter().map(|&p| PlayerId(p)).collect()
    }
}

/// A timeout schedule for one player, replacing the default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerTimeouts {
    pub player: u32,
    #[serde(flatten)]
    pub schedule: TimeoutSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Heights every correct player must decide.
    pub heights: u64,
    /// Round cap; derived from the other settings when absent.
    #[serde(default)]
    pub max_rounds: Option<u64>,
    #[serde(default)]
    pub genesis: GenesisConfig,
    pub net: NetConfig,
    #[serde(default)]
    pub timeouts: TimeoutSchedule,
    #[serde(default)]
    pub player_timeouts: Vec<PlayerTimeouts>,
    #[serde(default)]
    pub adversary: Option<AdversaryConfig>,
}

impl ExperimentConfig {
    /// `n` equal players, no adversary.
    pub fn honest(n: usize, heights: u64, net: NetConfig, seed: u64) -> Self {
        Self {
            n,
            seed,
            heights,
            max_rounds: None,
            genesis: GenesisConfig::default(),
            net,
            timeouts: TimeoutSchedule::default(),
            player_timeouts: Vec::new(),
            adversary: None,
        }
    }

    pub fn with_adversary(mut self, ids: &[u32], strategy: StrategySpec) -> Self {
        self.adversary = Some(AdversaryConfig { ids: ids.to_vec(), strategy });
        self
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Sets the experiment seed and the network seed together.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.net.seed = seed;
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.net.validate()?;
        self.genesis()?;
        self.timeouts.clone().validated()?;
        for pt in &self.player_timeouts {
            if pt.player == 0 || pt.player as usize > self.n {
                return Err(HarnessError::Config(format!("no player {}", pt.player)));
            }
            pt.schedule.clone().validated()?;
        }
        Ok(())
    }

    pub fn genesis(&self) -> Result<Genesis, HarnessError> {
        let g = &self.genesis;
        let parse =
            |s: &str| rational::parse(s).map_err(|e| HarnessError::Config(format!("{s:?}: {e}")));
        let shares = match &g.shares {
            Some(list) if list.len() != self.n => {
                return Err(HarnessError::Config(format!(
                    "{} shares for {} players",
                    list.len(),
                    self.n
                )))
            }
            Some(list) => list.iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?,
            None => vec![ratio(1, self.n.max(1) as i64); self.n],
        };
        Ok(Genesis::new(
            shares,
            parse(&g.stake)?,
            parse(&g.reward)?,
            PayloadPredicate::MaxLen(g.max_payload),
        )?)
    }

    pub fn timeouts_for(&self, player: PlayerId) -> TimeoutSchedule {
        self.player_timeouts
            .iter()
            .find(|pt| pt.player == player.0)
            .map_or_else(|| self.timeouts.clone(), |pt| pt.schedule.clone())
    }

    /// The round cap: `gsr + heights * 20 * (delta + timeout(5))` unless set.
    pub fn round_budget(&self) -> u64 {
        self.max_rounds.unwrap_or_else(|| {
            let slowest = (1..=self.n)
                .map(|i| self.timeouts_for(PlayerId::from_index(i - 1)).duration(5))
                .max()
                .unwrap_or(0);
            self.net.gsr + self.heights.max(1) * 20 * (self.net.delta + slowest)
        })
    }

    pub fn strategy(&self) -> Option<StrategyName> {
        self.adversary.as_ref().map(|a| a.strategy.name)
    }
}

/// Shares giving the last `f` of `n` players a combined `1/3 - 1/100`, split
/// evenly, and the rest an even split of what remains.
pub fn near_third_shares(n: usize, f: usize) -> Vec<Rational> {
    let adv_total = ratio(1, 3) - ratio(1, 100);
    let honest_total = rational::one() - &adv_total;
    let mut shares = vec![&honest_total / rational::int((n - f) as i64); n - f];
    shares.extend(vec![&adv_total / rational::int(f as i64); f]);
    shares
}

/// The randomised sweep: `n` in 4..=10, GSR in 1..=40, delta in 1..=8, ten
/// heights. Run `i` uses no adversary when `i % 9 == 0` and otherwise the
/// strategy `ALL[i % 9 - 1]`, controlling as many of the highest ids as the
/// threat model allows with a combined share just under 1/3.
pub fn sweep_configs(seed: u64, runs: usize) -> Vec<ExperimentConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs)
        .map(|i| {
            let n: usize = rng.random_range(4..=10);
            let gsr = rng.random_range(1..=40);
            let delta = rng.random_range(1..=8);
            let run_seed: u64 = rng.random();
            let policy = if i % 2 == 0 {
                PreGsrPolicy::ArbitraryDelay
            } else {
                PreGsrPolicy::DropUntilGsrResend
            };
            let net = NetConfig { gsr, delta, seed: run_seed, pre_gsr_policy: policy };
            let mut cfg = ExperimentConfig::honest(n, 10, net, run_seed);
            if i % 9 != 0 {
                let name = StrategyName::ALL[i % 9 - 1];
                let f = (n - 1) / 3;
                let ids: Vec<u32> = ((n - f + 1) as u32..=n as u32).collect();
                cfg.genesis.shares =
                    Some(near_third_shares(n, f).iter().map(rational::format).collect());
                cfg = cfg.with_adversary(&ids, StrategySpec::new(name));
            }
            cfg
        })
        .collect()
}
