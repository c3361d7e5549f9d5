// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Identifiers, hierarchical timestamps and the ordering algebra over them.
//!
//! Every committed version is coordinated by a [`TimeTuple`]: the root tick
//! that published it, the tick of the parent that first stamped the batch it
//! travelled in, and the tick of the handler that accepted the write. Ticks
//! are plain counters. They only advance when something changes, and carry no
//! wall-clock meaning.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Committed values are plain integers so that relative updates
/// (read, increment, write) can be expressed by workloads.
pub type Value = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HandlerId(pub u32);

impl fmt::Display for HandlerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClientId(pub u32);

impl fmt::Display for ClientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.0)
    }
}

/// Any participant of a run. Aggregators below the root are addressed by
/// their level (1 = parents of handlers) and their index within that level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentId {
    Client(ClientId),
    Handler(HandlerId),
    Aggregator { level: u8, index: u32 },
    Root,
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Client(c) => c.fmt(f),
            AgentId::Handler(h) => h.fmt(f),
            AgentId::Aggregator { level, index } => write!(f, "P{level}.{index}"),
            AgentId::Root => f.write_str("R"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed agent id {0:?}")]
pub struct ParseAgentError(pub String);

impl FromStr for AgentId {
    type Err = ParseAgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseAgentError(s.to_owned());
        if s == "R" {
            return Ok(AgentId::Root);
        }
        let (prefix, rest) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |(i, _)| i));
        match prefix {
            "C" => rest.parse().map(|n| AgentId::Client(ClientId(n))).map_err(|_| bad()),
            "A" => rest.parse().map(|n| AgentId::Handler(HandlerId(n))).map_err(|_| bad()),
            "P" => {
                let (level, index) = rest.split_once('.').ok_or_else(bad)?;
                let level: u8 = level.parse().map_err(|_| bad())?;
                if level == 0 {
                    return Err(bad());
                }
                let index = index.parse().map_err(|_| bad())?;
                Ok(AgentId::Aggregator { level, index })
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A primary key. Its owning handler is fixed for the lifetime of a run.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Key {
    pub name: String,
    pub owner: HandlerId,
}

impl Key {
    pub fn new(name: impl Into<String>, owner: HandlerId) -> Self {
        Key { name: name.into(), owner }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name, self.owner)
    }
}

/// A named, independently versioned stream of values for a key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub String);

impl ChannelId {
    pub const LATEST: &'static str = "latest";

    /// The default channel, present in every run.
    pub fn latest() -> Self {
        ChannelId(Self::LATEST.to_owned())
    }

    pub fn new(name: impl Into<String>) -> Self {
        ChannelId(name.into())
    }

    pub fn is_latest(&self) -> bool {
        self.0 == Self::LATEST
    }
}

impl Default for ChannelId {
    fn default() -> Self {
        Self::latest()
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fingerprint of the group topology a tuple was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TopologyId(pub u64);

/// Hierarchical timestamp `(t_R, t_P, t_A)` of one committed version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeTuple {
    pub root: u64,
    pub parent: u64,
    pub handler_tick: u64,
    pub handler: HandlerId,
    pub topology: TopologyId,
}

/// Outcome of comparing two tuples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TupleOrder {
    Before,
    After,
    Equal,
    Concurrent,
}

impl TupleOrder {
    pub fn reverse(self) -> Self {
        match self {
            TupleOrder::Before => TupleOrder::After,
            TupleOrder::After => TupleOrder::Before,
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("tuples come from different topologies ({0:?} vs {1:?})")]
    TopologyMismatch(TopologyId, TopologyId),
}

impl TimeTuple {
    pub fn new(root: u64, parent: u64, handler_tick: u64, handler: HandlerId, topology: TopologyId) -> Self {
        TimeTuple { root, parent, handler_tick, handler, topology }
    }

    /// Lexicographic on `(t_R, t_P)`. Within one `(t_R, t_P)` interval,
    /// one handler's records are ordered by its own tick; records of
    /// different handlers are `Concurrent`, since handler ticks are private
    /// counters and do not compare across handlers.
    pub fn compare(&self, other: &TimeTuple) -> Result<TupleOrder, TimeError> {
        if self.topology != other.topology {
            return Err(TimeError::TopologyMismatch(self.topology, other.topology));
        }
        let ord = (self.root, self.parent).cmp(&(other.root, other.parent));
        let ord = match ord {
            Ordering::Equal if self.handler == other.handler => self.handler_tick.cmp(&other.handler_tick),
            Ordering::Equal => return Ok(TupleOrder::Concurrent),
            ord => ord,
        };
        Ok(match ord {
            Ordering::Less => TupleOrder::Before,
            Ordering::Greater => TupleOrder::After,
            Ordering::Equal => TupleOrder::Equal,
        })
    }

    pub fn component(&self, level: Level) -> u64 {
        match level {
            Level::Handler => self.handler_tick,
            Level::Parent => self.parent,
            Level::Root => self.root,
        }
    }
}

/// Free-function form of [`TimeTuple::compare`].
pub fn compare_time_tuples(a: &TimeTuple, b: &TimeTuple) -> Result<TupleOrder, TimeError> {
    a.compare(b)
}

/// Timestamp carried by an interior operation (read or write).
pub type OpStamp = TimeTuple;

/// Scale at which simultaneity is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Handler,
    Parent,
    Root,
}

/// Two operations are simultaneous at a scale when the counter for that
/// scale is equal.
pub fn simultaneous_ops(a: &OpStamp, b: &OpStamp, level: Level) -> bool {
    a.component(level) == b.component(level)
}
