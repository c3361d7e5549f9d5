// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Trace events and their line-delimited JSON encoding.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::handler::{ConflictKind, TransactionId};
use crate::record::CommitRecord;
use crate::time::{AgentId, ChannelId, HandlerId, Key, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub time: u64,
    pub agent: AgentId,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadSource {
    Shadow,
    Published,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteEntry {
    pub key: Key,
    pub channel: ChannelId,
    pub value: Value,
}

/// A chain read by a transaction and the version it saw at its anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadEntry {
    pub key: Key,
    pub channel: ChannelId,
    pub base_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishedRecord {
    pub key: Key,
    pub channel: ChannelId,
    pub version: u64,
    pub value: Value,
    pub handler: HandlerId,
    #[serde(rename = "t_A")]
    pub t_handler: u64,
    #[serde(rename = "t_P")]
    pub t_parent: u64,
}

impl PublishedRecord {
    pub fn matches(&self, r: &CommitRecord) -> bool {
        self.key == r.key
            && self.channel == r.channel
            && self.version == r.version
            && self.value == r.value
            && self.handler == r.handler
            && self.t_handler == r.t_handler
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventBody {
    /// Always the first event of a trace.
    Config {
        groups: Vec<u32>,
        queue_limit: usize,
        batch_cap: usize,
        seed: u64,
    },
    Begin {
        txn: TransactionId,
        anchor: u64,
    },
    Write {
        txn: TransactionId,
        key: Key,
        channel: ChannelId,
        value: Value,
    },
    Read {
        txn: TransactionId,
        key: Key,
        channel: ChannelId,
        source: ReadSource,
        version: Option<u64>,
        value: Option<Value>,
        #[serde(rename = "t_R")]
        t_root: Option<u64>,
    },
    CommitRequest {
        txn: TransactionId,
    },
    Accept {
        txn: TransactionId,
        writes: Vec<WriteEntry>,
        reads: Vec<ReadEntry>,
    },
    Reject {
        txn: TransactionId,
        with: TransactionId,
        key: Key,
        channel: ChannelId,
        conflict: ConflictKind,
    },
    /// Back-pressure refusal of a commit request.
    Refused {
        txn: TransactionId,
        queue_len: usize,
    },
    Abort {
        txn: TransactionId,
    },
    Enqueue {
        txn: TransactionId,
        record: CommitRecord,
        queue_len: usize,
    },
    /// A successful pull by `agent` from `child`; `stamp` is set when the
    /// pull was non-empty and ticked the puller.
    Drain {
        child: AgentId,
        stamp: Option<u64>,
        entries: usize,
        records: usize,
        backlog: usize,
    },
    Skip {
        child: AgentId,
    },
    Publish {
        #[serde(rename = "t_R")]
        t_root: u64,
        records: Vec<PublishedRecord>,
    },
    /// Final observation of the namespace.
    Query {
        as_of: u64,
        heads: usize,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Config { .. } => "Config",
            EventBody::Begin { .. } => "Begin",
            EventBody::Write { .. } => "Write",
            EventBody::Read { .. } => "Read",
            EventBody::CommitRequest { .. } => "CommitRequest",
            EventBody::Accept { .. } => "Accept",
            EventBody::Reject { .. } => "Reject",
            EventBody::Refused { .. } => "Refused",
            EventBody::Abort { .. } => "Abort",
            EventBody::Enqueue { .. } => "Enqueue",
            EventBody::Drain { .. } => "Drain",
            EventBody::Skip { .. } => "Skip",
            EventBody::Publish { .. } => "Publish",
            EventBody::Query { .. } => "Query",
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("trace io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace at seq {seq}: {detail}")]
    Malformed { seq: u64, detail: String },
}

impl TraceError {
    pub fn malformed(seq: u64, detail: impl Into<String>) -> Self {
        TraceError::Malformed { seq, detail: detail.into() }
    }
}

pub fn write_trace<W: Write>(events: &[TraceEvent], mut out: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?;
        events.push(event);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_round_trip_as_single_lines() {
        let txn = TransactionId { handler: HandlerId(1), seq: 2 };
        let events = vec![
            TraceEvent {
                seq: 0,
                time: 0,
                agent: AgentId::Root,
                body: EventBody::Config { groups: vec![2], queue_limit: 8, batch_cap: 8, seed: 1 },
            },
            TraceEvent {
                seq: 1,
                time: 3,
                agent: AgentId::Handler(HandlerId(1)),
                body: EventBody::Read {
                    txn,
                    key: Key::new("k", HandlerId(0)),
                    channel: ChannelId::latest(),
                    source: ReadSource::Published,
                    version: Some(1),
                    value: Some(-4),
                    t_root: Some(2),
                },
            },
            TraceEvent {
                seq: 2,
                time: 3,
                agent: AgentId::Aggregator { level: 1, index: 0 },
                body: EventBody::Drain { child: AgentId::Handler(HandlerId(1)), stamp: None, entries: 0, records: 0, backlog: 0 },
            },
        ];
        let mut buf = Vec::new();
        write_trace(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("{\"seq\":0,\"time\":0,\"agent\":\"R\",\"kind\":\"Config\""));
        assert_eq!(read_trace(&buf[..]).unwrap(), events);
    }

    #[test]
    fn bad_lines_are_reported_with_position() {
        let err = read_trace("{\"seq\":0}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 1, .. }));
    }
}
