// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! The global versioned namespace.
//!
//! The index consumes root publications in order and keeps, per
//! `(key, channel)`, the chain of committed versions with their full
//! hierarchical timestamps. Queries are answered against a root tick
//! `as_of`, inclusive: a version published at `t_R = as_of` is part of the
//! past cone at `as_of`.
//!
//! Alongside the chains, the index keeps the association graph between
//! root entries, stamped batches and versions (`Contains`), and between
//! successive versions of a chain (`Follows`).

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{BatchItems, RootEntry, StampedBatch};
use crate::time::{AgentId, ChannelId, HandlerId, Key, TimeTuple, TopologyId, Value};

pub type ChainKey = (Key, ChannelId);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("protocol violation: root entry t_R={got} does not follow published t_R={published}")]
    OutOfOrder { got: u64, published: u64 },
    #[error("protocol violation: duplicate version {version} for {key} in channel {channel}")]
    DuplicateVersion { key: Key, channel: ChannelId, version: u64 },
    #[error("protocol violation: version {version} for {key} in channel {channel} skips ahead of {expected}")]
    VersionGap { key: Key, channel: ChannelId, version: u64, expected: u64 },
    #[error("protocol violation: record for {key} emitted by {handler}, which does not own it")]
    WrongOwner { key: Key, handler: HandlerId },
    #[error("t_R={as_of} has not been published yet (latest is {published})")]
    NotYetPublished { as_of: u64, published: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionEntry {
    pub version: u64,
    pub value: Value,
    pub time: TimeTuple,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionChain {
    pub key: Key,
    pub channel: ChannelId,
    pub entries: Vec<VersionEntry>,
}

impl VersionChain {
    /// Head of the chain among versions published at or before `as_of`.
    pub fn latest(&self, as_of: u64) -> Option<&VersionEntry> {
        let n = self.entries.partition_point(|e| e.time.root <= as_of);
        n.checked_sub(1).map(|i| &self.entries[i])
    }
}

/// The heads of every chain as of one root tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub as_of: u64,
    pub heads: BTreeMap<ChainKey, (u64, Value)>,
}

/// True iff both snapshots expose identical key-value heads.
pub fn snapshot_equal(a: &Snapshot, b: &Snapshot) -> bool {
    a.heads == b.heads
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Follows,
    Contains,
    /// Replica proximity. Part of the schema; no replicas are modelled.
    Near,
    /// Scalar expression of a value. Part of the schema; not populated.
    Expresses,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    RootEntry(u64),
    Batch { stamped_by: AgentId, stamp: u64 },
    Version { key: Key, channel: ChannelId, version: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Edge {
    pub from: Node,
    pub relation: Relation,
    pub to: Node,
}

/// One line of the index dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpRecord {
    pub key: String,
    pub channel: String,
    pub version: u64,
    #[serde(rename = "t_R")]
    pub t_root: u64,
    #[serde(rename = "t_P")]
    pub t_parent: u64,
    #[serde(rename = "t_A")]
    pub t_handler: u64,
    pub handler: u32,
}

#[derive(Debug, Clone)]
pub struct Index {
    topology: TopologyId,
    published: u64,
    chains: BTreeMap<ChainKey, VersionChain>,
    log: Vec<DumpRecord>,
    edges: Vec<Edge>,
}

impl Index {
    pub fn new(topology: TopologyId) -> Self {
        Index { topology, published: 0, chains: BTreeMap::new(), log: Vec::new(), edges: Vec::new() }
    }

    /// Highest root tick registered so far (0 before any publication).
    pub fn published_through(&self) -> u64 {
        self.published
    }

    pub fn register_batch(&mut self, entry: &RootEntry) -> Result<(), IndexError> {
        let flat = entry.flatten();
        if flat.is_empty() {
            return Ok(());
        }
        if entry.stamp <= self.published {
            return Err(IndexError::OutOfOrder { got: entry.stamp, published: self.published });
        }

        // Validate before touching any chain so a bad entry leaves no trace.
        let mut pending: BTreeMap<(&Key, &ChannelId), u64> = BTreeMap::new();
        for (r, _) in &flat {
            if r.key.owner != r.handler {
                return Err(IndexError::WrongOwner { key: r.key.clone(), handler: r.handler });
            }
            let next = pending
                .entry((&r.key, &r.channel))
                .or_insert_with(|| self.chains.get(&(r.key.clone(), r.channel.clone())).map_or(0, |c| c.entries.len() as u64));
            let expected = *next + 1;
            if r.version < expected {
                return Err(IndexError::DuplicateVersion { key: r.key.clone(), channel: r.channel.clone(), version: r.version });
            }
            if r.version > expected {
                return Err(IndexError::VersionGap { key: r.key.clone(), channel: r.channel.clone(), version: r.version, expected });
            }
            *next = expected;
        }

        let t_root = entry.stamp;
        let topology = self.topology;
        let chains = &mut self.chains;
        let log = &mut self.log;
        let edges = &mut self.edges;
        let mut contained: Vec<(Node, Node)> = Vec::new();
        entry.walk(&mut |stack: &[&StampedBatch], r| {
            let t_parent = stack.last().map_or(t_root, |s| s.stamp);
            let node = Node::Version { key: r.key.clone(), channel: r.channel.clone(), version: r.version };
            let holder = stack.last().copied().filter(|_| stack.len() > 1);
            let holder_node = match holder {
                Some(s) => Node::Batch { stamped_by: s.stamped_by, stamp: s.stamp },
                None => Node::RootEntry(t_root),
            };
            contained.push((holder_node, node.clone()));
            let chain = chains.entry((r.key.clone(), r.channel.clone())).or_insert_with(|| VersionChain {
                key: r.key.clone(),
                channel: r.channel.clone(),
                entries: Vec::new(),
            });
            if r.version > 1 {
                edges.push(Edge {
                    from: node,
                    relation: Relation::Follows,
                    to: Node::Version { key: r.key.clone(), channel: r.channel.clone(), version: r.version - 1 },
                });
            }
            chain.entries.push(VersionEntry {
                version: r.version,
                value: r.value,
                time: TimeTuple::new(t_root, t_parent, r.t_handler, r.handler, topology),
            });
            log.push(DumpRecord {
                key: r.key.name.clone(),
                channel: r.channel.0.clone(),
                version: r.version,
                t_root,
                t_parent,
                t_handler: r.t_handler,
                handler: r.handler.0,
            });
        });

        // Root entry ⊃ intermediate batches ⊃ versions.
        let mut batch_edges = Vec::new();
        nested_containment(entry, Node::RootEntry(t_root), &mut batch_edges);
        for (from, to) in batch_edges.into_iter().chain(contained) {
            self.edges.push(Edge { from, relation: Relation::Contains, to });
        }
        self.published = t_root;
        Ok(())
    }

    pub fn latest(&self, key: &Key, channel: &ChannelId, as_of: u64) -> Option<(u64, Value)> {
        self.latest_entry(key, channel, as_of).map(|e| (e.version, e.value))
    }

    pub fn latest_entry(&self, key: &Key, channel: &ChannelId, as_of: u64) -> Option<&VersionEntry> {
        self.chains.get(&(key.clone(), channel.clone()))?.latest(as_of)
    }

    pub fn past_cone(&self, as_of: u64) -> Result<Snapshot, IndexError> {
        if as_of > self.published {
            return Err(IndexError::NotYetPublished { as_of, published: self.published });
        }
        let heads = self.chains.iter().filter_map(|(k, chain)| chain.latest(as_of).map(|e| (k.clone(), (e.version, e.value)))).collect();
        Ok(Snapshot { as_of, heads })
    }

    /// Whole chain in version order; empty for unknown keys.
    pub fn history(&self, key: &Key, channel: &ChannelId) -> Vec<(u64, Value, TimeTuple)> {
        self.chains
            .get(&(key.clone(), channel.clone()))
            .map(|c| c.entries.iter().map(|e| (e.version, e.value, e.time)).collect())
            .unwrap_or_default()
    }

    pub fn chains(&self) -> impl Iterator<Item = &VersionChain> {
        self.chains.values()
    }

    pub fn edges(&self, relation: Relation) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.relation == relation)
    }

    /// Records in root-log order.
    pub fn log(&self) -> &[DumpRecord] {
        &self.log
    }

    /// Line-delimited JSON, one record per line, in root-log order.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.log {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn nested_containment(batch: &StampedBatch, node: Node, out: &mut Vec<(Node, Node)>) {
    if let BatchItems::Nested(children) = &batch.batch.items {
        for c in children {
            let child = Node::Batch { stamped_by: c.stamped_by, stamp: c.stamp };
            out.push((node.clone(), child.clone()));
            nested_containment(c, child, out);
        }
    }
}
