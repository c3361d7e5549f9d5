// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Commit association records and the batches that carry them upward.

use serde::{Deserialize, Serialize};

use crate::time::{AgentId, ChannelId, HandlerId, Key, Value};

/// One committed write, as queued by its handler: `(k, t(A), c, i)` plus the
/// version number it claims in its chain and the value it resolves to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitRecord {
    pub key: Key,
    pub channel: ChannelId,
    pub t_handler: u64,
    pub handler: HandlerId,
    pub version: u64,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchItems {
    Records(Vec<CommitRecord>),
    Nested(Vec<StampedBatch>),
}

/// A drained queue segment, in the child's emission order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub source: AgentId,
    pub items: BatchItems,
}

/// A batch associated with the tick of the aggregator that received it.
/// At the root this is a published entry of the global timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StampedBatch {
    pub stamp: u64,
    pub stamped_by: AgentId,
    pub batch: Batch,
}

pub type RootEntry = StampedBatch;

impl Batch {
    pub fn empty(source: AgentId) -> Self {
        Batch { source, items: BatchItems::Records(Vec::new()) }
    }

    pub fn records(source: AgentId, records: Vec<CommitRecord>) -> Self {
        Batch { source, items: BatchItems::Records(records) }
    }

    pub fn nested(source: AgentId, batches: Vec<StampedBatch>) -> Self {
        Batch { source, items: BatchItems::Nested(batches) }
    }

    /// Number of direct entries (records or nested batches).
    pub fn len(&self) -> usize {
        match &self.items {
            BatchItems::Records(r) => r.len(),
            BatchItems::Nested(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.record_count() == 0
    }

    pub fn record_count(&self) -> usize {
        match &self.items {
            BatchItems::Records(r) => r.len(),
            BatchItems::Nested(b) => b.iter().map(|s| s.batch.record_count()).sum(),
        }
    }
}

impl StampedBatch {
    /// Visits every record in order, together with the chain of stamped
    /// batches that contain it (outermost first).
    pub fn walk<'a, F>(&'a self, f: &mut F)
    where
        F: FnMut(&[&'a StampedBatch], &'a CommitRecord),
    {
        let mut stack = Vec::new();
        self.walk_inner(&mut stack, f);
    }

    fn walk_inner<'a, F>(&'a self, stack: &mut Vec<&'a StampedBatch>, f: &mut F)
    where
        F: FnMut(&[&'a StampedBatch], &'a CommitRecord),
    {
        stack.push(self);
        match &self.batch.items {
            BatchItems::Records(records) => {
                for r in records {
                    f(stack, r);
                }
            }
            BatchItems::Nested(children) => {
                for c in children {
                    c.walk_inner(stack, f);
                }
            }
        }
        stack.pop();
    }

    /// Records in order with the stamp of the parent that first received
    /// them (`t_P`).
    pub fn flatten(&self) -> Vec<(&CommitRecord, u64)> {
        let mut out = Vec::with_capacity(self.batch.record_count());
        self.walk(&mut |stack, r| out.push((r, stack.last().map_or(0, |s| s.stamp))));
        out
    }
}
