// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use tenderstake::domain::rational;

use super::{run_experiment, ExperimentConfig, HarnessError, RunMetrics};

/// One CSV line per run.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub run: usize,
    pub seed: u64,
    pub n: usize,
    pub gsr: u64,
    pub delta: u64,
    pub strategy: String,
    pub decided: u64,
    pub rounds: u64,
    pub slash_events: usize,
    pub rejected: usize,
    pub initial_adv_share: String,
    pub final_adv_share: String,
    pub violations: String,
}

impl SweepRow {
    pub fn new(run: usize, cfg: &ExperimentConfig, m: &RunMetrics) -> Self {
        let share = |s: Option<&rational::Rational>| s.map(rational::format).unwrap_or_default();
        Self {
            run,
            seed: cfg.seed,
            n: cfg.n,
            gsr: cfg.net.gsr,
            delta: cfg.net.delta,
            strategy: cfg.strategy().map_or_else(|| "none".into(), |s| s.to_string()),
            decided: m.decisions.get(&m.reference).map_or(0, |d| d.len() as u64),
            rounds: m.rounds,
            slash_events: m.slash_events.len(),
            rejected: m.rejected_emissions,
            initial_adv_share: share(m.adversarial_share.first()),
            final_adv_share: share(m.adversarial_share.last()),
            violations: m.violations.join(";"),
        }
    }
}

/// Runs every config, in parallel, keeping input order.
pub fn run_sweep(configs: &[ExperimentConfig]) -> Vec<Result<RunMetrics, HarnessError>> {
    configs.par_iter().map(run_experiment).collect()
}

pub fn write_summary_csv(out: impl Write, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reward records of the reference player, one line per player and height.
pub fn write_rewards_csv(
    out: impl Write,
    runs: &[(usize, &RunMetrics)],
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "height", "player", "base_reward", "slash_bonus", "share"])?;
    for (run, m) in runs {
        for r in &m.reward_records {
            w.write_record([
                run.to_string(),
                r.height.to_string(),
                r.player.to_string(),
                rational::format(&r.base_reward),
                rational::format(&r.slash_bonus),
                rational::format(&r.share),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
