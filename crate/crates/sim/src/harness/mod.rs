// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration, runner, property checks and traces.

mod checks;
mod config;
mod payoff;
mod run;
mod sweep;
pub mod trace;

use tenderstake::consensus::ConsensusError;
use tenderstake::domain::GenesisError;
use thiserror::Error;

use crate::adversary::AdversaryError;
use crate::netsim::NetError;

pub use checks::{
    check_fairness, check_liveness, check_no_honest_slashing, check_rewards, check_safety,
    violations, DeviationRecord, RunMetrics,
};
pub use config::{
    near_third_shares, sweep_configs, AdversaryConfig, ExperimentConfig, GenesisConfig,
    PlayerTimeouts,
};
pub use payoff::{deviation_payoff, Payoff};
pub use run::{run_experiment, run_traced};
pub use sweep::{run_sweep, write_rewards_csv, write_summary_csv, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Genesis(#[from] GenesisError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
