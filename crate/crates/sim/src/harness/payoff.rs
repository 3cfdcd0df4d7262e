// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use serde::Serialize;
use tenderstake::domain::rational::{self, Rational};
use tenderstake::domain::PlayerId;

use super::{run_experiment, ExperimentConfig, HarnessError, RunMetrics};
use crate::adversary::{StrategyName, StrategySpec};

/// One counterfactual pair: the same run with the adversary following
/// `spec`, and following the protocol.
#[derive(Clone, Debug, Serialize)]
pub struct Payoff {
    /// The lowest corrupted id, whose stake is compared.
    pub player: PlayerId,
    #[serde(with = "rational::serde_str")]
    pub deviating_stake: Rational,
    #[serde(with = "rational::serde_str")]
    pub baseline_stake: Rational,
    #[serde(with = "rational::serde_str")]
    pub deviating_share: Rational,
    #[serde(skip)]
    pub deviating: RunMetrics,
    #[serde(skip)]
    pub baseline: RunMetrics,
}

impl Payoff {
    /// Deviating strictly lost stake and ended with no share.
    pub fn deviation_lost(&self) -> bool {
        self.deviating_stake < self.baseline_stake && self.deviating_share == rational::zero()
    }
}

/// Runs `cfg` twice with the same seed, once with its corrupted players
/// following `spec` and once as `honest_shadow`.
pub fn deviation_payoff(
    cfg: &ExperimentConfig,
    spec: &StrategySpec,
) -> Result<Payoff, HarnessError> {
    let adv = cfg
        .adversary
        .as_ref()
        .ok_or_else(|| HarnessError::Config("payoff needs an adversary".into()))?;
    let player = *adv.id_set().first().ok_or_else(|| HarnessError::Config("no ids".into()))?;

    let with = |s: StrategySpec| {
        let mut c = cfg.clone();
        if let Some(a) = c.adversary.as_mut() {
            a.strategy = s;
        }
        run_experiment(&c)
    };
    let deviating = with(spec.clone())?;
    let baseline = with(StrategySpec::new(StrategyName::HonestShadow))?;
    let stake = |m: &RunMetrics| m.final_stakes.get(&player).cloned().unwrap_or_default();
    Ok(Payoff {
        player,
        deviating_stake: stake(&deviating),
        baseline_stake: stake(&baseline),
        deviating_share: deviating.final_shares.get(&player).cloned().unwrap_or_default(),
        deviating,
        baseline,
    })
}
