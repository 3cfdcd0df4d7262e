// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Tenderstake: a Tendermint-style BFT state machine in which every message
//! carries a proof of transition, invalid messages are provable deviations,
//! and deviators are slashed with exact rational stake accounting.

pub mod consensus;
pub mod domain;
pub mod ledger;
pub mod proofs;
pub mod quorum;
pub mod view;
