// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Parents and the root.
//!
//! An aggregator passes a token around the ring of its children in a fixed
//! orientation, pulling whatever the token holder has queued. Each
//! non-empty pull is associated with the aggregator's own tick and either
//! queued for the next level up or, at the root, appended to the published
//! timeline. A child that does not answer is skipped and retried on the
//! next turn of the ring; its queue is untouched in the meantime.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::record::{Batch, RootEntry, StampedBatch};
use crate::time::{AgentId, HandlerId};

/// Anything a parent can pull batches from.
pub trait BatchSource {
    fn source_id(&self) -> AgentId;

    /// Drain up to `max_entries` queued entries, or `None` if unavailable.
    fn pull(&mut self, max_entries: usize) -> Option<Batch>;

    /// Entries currently waiting.
    fn backlog(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregatorError {
    #[error("a ring needs at least one child")]
    EmptyRing,
    #[error("{0} is not the root")]
    NotRoot(AgentId),
    #[error("root entry t_R={got} does not follow t_R={last}")]
    NonMonotone { got: u64, last: u64 },
    #[error("token is at {expected}, not {got}")]
    WrongChild { expected: AgentId, got: AgentId },
}

/// Round-robin token over an ordered set of children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ring {
    children: Vec<AgentId>,
    position: usize,
}

impl Ring {
    pub fn new(children: Vec<AgentId>) -> Result<Self, AggregatorError> {
        if children.is_empty() {
            return Err(AggregatorError::EmptyRing);
        }
        Ok(Ring { children, position: 0 })
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn children(&self) -> &[AgentId] {
        &self.children
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn holder(&self) -> AgentId {
        self.children[self.position]
    }

    /// `j := (i + 1) mod N(G)`
    pub fn next_index(&self) -> usize {
        (self.position + 1) % self.children.len()
    }

    /// Visit the token holder and pass the token on.
    pub fn step(&mut self) -> AgentId {
        let visited = self.holder();
        self.position = self.next_index();
        visited
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Visit {
    Stamped(StampedBatch),
    Empty(AgentId),
    Skipped(AgentId),
}

#[derive(Debug, Clone)]
pub struct Aggregator {
    id: AgentId,
    ring: Ring,
    tick: u64,
    batch_cap: usize,
    output: VecDeque<StampedBatch>,
    published: Vec<RootEntry>,
    skip_list: BTreeSet<AgentId>,
    drainable: bool,
}

impl Aggregator {
    pub fn new(id: AgentId, children: Vec<AgentId>, batch_cap: usize) -> Result<Self, AggregatorError> {
        Ok(Aggregator {
            id,
            ring: Ring::new(children)?,
            tick: 0,
            batch_cap,
            output: VecDeque::new(),
            published: Vec::new(),
            skip_list: BTreeSet::new(),
            drainable: true,
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn is_root(&self) -> bool {
        self.id == AgentId::Root
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn ring(&self) -> &Ring {
        &self.ring
    }

    pub fn skip_list(&self) -> &BTreeSet<AgentId> {
        &self.skip_list
    }

    pub fn output_len(&self) -> usize {
        self.output.len()
    }

    pub fn published_log(&self) -> &[RootEntry] {
        &self.published
    }

    pub fn set_drainable(&mut self, drainable: bool) {
        self.drainable = drainable;
    }

    /// The child the token currently points at.
    pub fn next_child(&self) -> AgentId {
        self.ring.holder()
    }

    /// Pull from the token holder, stamp a non-empty result with a fresh
    /// tick, and pass the token on. The root publishes what it stamps.
    pub fn pull_and_stamp(&mut self, child: &mut dyn BatchSource) -> Result<Visit, AggregatorError> {
        let expected = self.ring.holder();
        if child.source_id() != expected {
            return Err(AggregatorError::WrongChild { expected, got: child.source_id() });
        }
        self.ring.step();
        let Some(batch) = child.pull(self.batch_cap) else {
            self.skip_list.insert(expected);
            return Ok(Visit::Skipped(expected));
        };
        self.skip_list.remove(&expected);
        if batch.is_empty() {
            return Ok(Visit::Empty(expected));
        }
        self.tick += 1;
        let stamped = StampedBatch { stamp: self.tick, stamped_by: self.id, batch };
        if self.is_root() {
            self.publish_root(stamped.clone())?;
        } else {
            self.output.push_back(stamped.clone());
        }
        Ok(Visit::Stamped(stamped))
    }

    /// Append `σ_R = (t_R, Σ_P)` to the global timeline.
    pub fn publish_root(&mut self, entry: RootEntry) -> Result<&RootEntry, AggregatorError> {
        if !self.is_root() {
            return Err(AggregatorError::NotRoot(self.id));
        }
        let last = self.published.last().map_or(0, |e| e.stamp);
        if entry.stamp <= last {
            return Err(AggregatorError::NonMonotone { got: entry.stamp, last });
        }
        self.published.push(entry);
        Ok(self.published.last().unwrap())
    }
}

impl BatchSource for Aggregator {
    fn source_id(&self) -> AgentId {
        self.id
    }

    fn pull(&mut self, max_entries: usize) -> Option<Batch> {
        if !self.drainable {
            return None;
        }
        let n = max_entries.min(self.output.len());
        Some(Batch::nested(self.id, self.output.drain(..n).collect()))
    }

    fn backlog(&self) -> usize {
        self.output.len()
    }
}

/// Measured root-slot thickness in handler ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thickness {
    pub mean: f64,
    pub max: u64,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no root ticks to measure")]
pub struct NotMeasurable;

/// For every root slot and every handler with records in it, the number of
/// that handler's ticks covered by the slot: its newest published tick minus
/// its newest tick in the previous slot it appeared in. Slots must be given
/// in publication order, each as the `(handler, t_A)` pairs it contains.
pub fn measure_thickness<S, R>(slots: S) -> Result<Thickness, NotMeasurable>
where
    S: IntoIterator<Item = R>,
    R: IntoIterator<Item = (HandlerId, u64)>,
{
    let mut seen: BTreeMap<HandlerId, u64> = BTreeMap::new();
    let (mut sum, mut max, mut samples) = (0u64, 0u64, 0u64);
    for slot in slots {
        let mut newest: BTreeMap<HandlerId, u64> = BTreeMap::new();
        for (h, t) in slot {
            let e = newest.entry(h).or_insert(t);
            *e = (*e).max(t);
        }
        for (h, t) in newest {
            let prev = seen.insert(h, t).unwrap_or(0);
            let span = t.saturating_sub(prev);
            sum += span;
            max = max.max(span);
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(NotMeasurable);
    }
    Ok(Thickness { mean: sum as f64 / samples as f64, max, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{BatchItems, CommitRecord};
    use crate::time::{ChannelId, Key};

    struct Fake {
        id: AgentId,
        queue: VecDeque<CommitRecord>,
        up: bool,
    }

    impl Fake {
        fn new(h: u32, n: u64) -> Self {
            let id = HandlerId(h);
            let queue = (1..=n)
                .map(|t| CommitRecord {
                    key: Key::new(format!("k{t}"), id),
                    channel: ChannelId::latest(),
                    t_handler: t,
                    handler: id,
                    version: 1,
                    value: 0,
                })
                .collect();
            Fake { id: AgentId::Handler(id), queue, up: true }
        }
    }

    impl BatchSource for Fake {
        fn source_id(&self) -> AgentId {
            self.id
        }
        fn pull(&mut self, max: usize) -> Option<Batch> {
            if !self.up {
                return None;
            }
            let n = max.min(self.queue.len());
            Some(Batch::records(self.id, self.queue.drain(..n).collect()))
        }
        fn backlog(&self) -> usize {
            self.queue.len()
        }
    }

    fn h(i: u32) -> AgentId {
        AgentId::Handler(HandlerId(i))
    }

    #[test]
    fn ring_wraps_around() {
        let mut r = Ring::new(vec![h(0), h(1), h(2)]).unwrap();
        r.step();
        r.step();
        assert_eq!(r.position(), 2);
        assert_eq!(r.next_index(), 0);
        let mut single = Ring::new(vec![h(0)]).unwrap();
        for _ in 0..4 {
            assert_eq!(single.step(), h(0));
        }
        assert_eq!(Ring::new(vec![]), Err(AggregatorError::EmptyRing));
    }

    #[test]
    fn ring_visits_each_child_once_per_turn() {
        let n = 5;
        let mut r = Ring::new((0..n).map(h).collect()).unwrap();
        let visits: Vec<_> = (0..3 * n).map(|_| r.step()).collect();
        for c in 0..n {
            assert_eq!(visits.iter().filter(|&&v| v == h(c)).count(), 3);
        }
        for (i, v) in visits.iter().enumerate() {
            assert_eq!(*v, h(i as u32 % n));
        }
    }

    #[test]
    fn empty_pull_does_not_tick() {
        let mut p = Aggregator::new(AgentId::Aggregator { level: 1, index: 0 }, vec![h(0)], 8).unwrap();
        let mut c = Fake::new(0, 0);
        assert_eq!(p.pull_and_stamp(&mut c).unwrap(), Visit::Empty(h(0)));
        assert_eq!(p.tick(), 0);
        assert_eq!(p.output_len(), 0);
    }

    #[test]
    fn skipped_child_keeps_order_after_recovery() {
        let mut p = Aggregator::new(AgentId::Aggregator { level: 1, index: 0 }, vec![h(0)], 8).unwrap();
        let mut c = Fake::new(0, 3);
        c.up = false;
        assert_eq!(p.pull_and_stamp(&mut c).unwrap(), Visit::Skipped(h(0)));
        assert!(p.skip_list().contains(&h(0)));
        c.up = true;
        let Visit::Stamped(s) = p.pull_and_stamp(&mut c).unwrap() else { panic!() };
        assert!(p.skip_list().is_empty());
        assert_eq!(s.stamp, 1);
        let BatchItems::Records(r) = &s.batch.items else { panic!() };
        assert_eq!(r.iter().map(|r| r.t_handler).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn wrong_child_is_refused() {
        let mut p = Aggregator::new(AgentId::Root, vec![h(0), h(1)], 8).unwrap();
        let mut c = Fake::new(1, 1);
        assert!(matches!(p.pull_and_stamp(&mut c), Err(AggregatorError::WrongChild { .. })));
    }

    #[test]
    fn root_publishes_monotonically() {
        let mut r = Aggregator::new(AgentId::Root, vec![h(0), h(1)], 8).unwrap();
        let mut a = Fake::new(0, 2);
        let mut b = Fake::new(1, 1);
        r.pull_and_stamp(&mut a).unwrap();
        r.pull_and_stamp(&mut b).unwrap();
        let stamps: Vec<_> = r.published_log().iter().map(|e| e.stamp).collect();
        assert_eq!(stamps, vec![1, 2]);
        assert_eq!(r.published_log()[0].batch.record_count(), 2);
        let stale = r.published_log()[0].clone();
        assert!(matches!(r.publish_root(stale), Err(AggregatorError::NonMonotone { .. })));
        let mut p = Aggregator::new(AgentId::Aggregator { level: 1, index: 0 }, vec![h(0)], 8).unwrap();
        let entry = r.published_log()[0].clone();
        assert!(matches!(p.publish_root(entry), Err(AggregatorError::NotRoot(_))));
    }

    #[test]
    fn parent_output_is_pulled_as_nested_batches() {
        let mut p = Aggregator::new(AgentId::Aggregator { level: 1, index: 0 }, vec![h(0), h(1)], 8).unwrap();
        let mut a = Fake::new(0, 2);
        let mut b = Fake::new(1, 1);
        p.pull_and_stamp(&mut a).unwrap();
        p.pull_and_stamp(&mut b).unwrap();
        assert_eq!(p.backlog(), 2);
        let batch = p.pull(1).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch.record_count(), 2);
        p.set_drainable(false);
        assert!(p.pull(8).is_none());
        assert_eq!(p.backlog(), 1);
    }

    #[test]
    fn thickness_of_degenerate_and_regular_logs() {
        let a = HandlerId(0);
        let single: Vec<Vec<(HandlerId, u64)>> = (1..=10).map(|t| vec![(a, t)]).collect();
        let t = measure_thickness(single).unwrap();
        assert_eq!((t.mean, t.max, t.samples), (1.0, 1, 10));

        let b = HandlerId(1);
        let chunky = vec![vec![(a, 1), (a, 2), (a, 3), (b, 1)], vec![(b, 2), (b, 3)], vec![(a, 6)]];
        let t = measure_thickness(chunky).unwrap();
        assert_eq!(t.samples, 4);
        assert_eq!(t.max, 3);
        assert_eq!(t.mean, (3.0 + 1.0 + 2.0 + 3.0) / 4.0);

        assert_eq!(measure_thickness(Vec::<Vec<(HandlerId, u64)>>::new()), Err(NotMeasurable));
    }
}
