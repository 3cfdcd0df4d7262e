// Copyright (c) The Tenderstake Contributors
// SPDX-License-Identifier: Apache-2.0

//! JSON-lines trace: one record per line, the first holding the config.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use tenderstake::consensus::TraceEvent;
use tenderstake::domain::{Digest, PlayerId};
use tenderstake::ledger::{RewardRecord, SlashEvent};

use super::{ExperimentConfig, HarnessError};
use crate::netsim::DeliveryEvent;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u64,
    #[serde(flatten)]
    pub entry: TraceEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEntry {
    Config { config: ExperimentConfig },
    Deliver(DeliveryEvent),
    Event { player: PlayerId, detail: TraceEvent },
    Reward { observer: PlayerId, record: RewardRecord },
    Slash { observer: PlayerId, slash: SlashEvent },
    Rejected { sender: PlayerId, reason: String },
}

/// Receives trace records as the run produces them.
pub trait TraceSink {
    fn record(&mut self, rec: TraceRecord) -> Result<(), HarnessError>;
}

/// Discards everything.
pub struct NoTrace;

impl TraceSink for NoTrace {
    fn record(&mut self, _: TraceRecord) -> Result<(), HarnessError> {
        Ok(())
    }
}

/// Writes one JSON object per line.
pub struct JsonLines<W: Write>(pub W);

impl<W: Write> TraceSink for JsonLines<W> {
    fn record(&mut self, rec: TraceRecord) -> Result<(), HarnessError> {
        serde_json::to_writer(&mut self.0, &rec)?;
        self.0.write_all(b"\n")?;
        Ok(())
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, rec: TraceRecord) -> Result<(), HarnessError> {
        self.push(rec);
        Ok(())
    }
}

pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceRecord>, HarnessError> {
    input
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect()
}

/// The config a trace was produced from.
pub fn trace_config(records: &[TraceRecord]) -> Result<&ExperimentConfig, HarnessError> {
    match records.first().map(|r| &r.entry) {
        Some(TraceEntry::Config { config }) => Ok(config),
        _ => Err(HarnessError::Config("trace does not start with a config record".into())),
    }
}

/// Decided digests per player, read back from `decided` events.
pub fn trace_decisions(records: &[TraceRecord]) -> BTreeMap<PlayerId, BTreeMap<u64, Digest>> {
    let mut out: BTreeMap<PlayerId, BTreeMap<u64, Digest>> = BTreeMap::new();
    for r in records {
        if let TraceEntry::Event { player, detail: TraceEvent::Decided { height, digest, .. } } =
            &r.entry
        {
            out.entry(*player).or_default().insert(*height, *digest);
        }
    }
    out
}
