// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! Simulation of Tenderstake players over a partially synchronous network,
//! with scripted Byzantine strategies and checks for the protocol's safety,
//! liveness, fairness and reward properties.

pub mod adversary;
pub mod harness;
pub mod netsim;
