// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! The event loop.
//!
//! Time advances in ticks. Within a tick, client steps run first, in
//! `(client, insertion)` order, then aggregator visits, bottom level first.
//! A bottom-level parent visits one child every `drain_period` ticks; an
//! aggregator one level up visits once per full turn of the rings below
//! it, so each of its visits sees one batch from every child of the child
//! it pulls.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aggregator::{Aggregator, AggregatorError, BatchSource, Visit};
use crate::handler::{CommitOutcome, Handler, HandlerError, ReadOutcome, TransactionId};
use crate::index::{Index, IndexError};
use crate::metrics::{Metrics, Resolution};
use crate::record::RootEntry;
use crate::time::{AgentId, ChannelId, ClientId, HandlerId, Key, Value};

use super::scenario::{ConfigError, Scenario, Validated};
use super::trace::{EventBody, PublishedRecord, ReadEntry, ReadSource, TraceEvent, WriteEntry};

pub const AUDIT_CHANNEL: &str = "audit";

/// Ticks past the end of the workload and of every fault after which a run
/// that has not drained is abandoned.
const DRAIN_HORIZON: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("handler: {0}")]
    Handler(#[from] HandlerError),
    #[error("aggregator: {0}")]
    Aggregator(#[from] AggregatorError),
    #[error("index: {0}")]
    Index(#[from] IndexError),
    #[error("queues still hold entries at tick {0}")]
    NoQuiescence(u64),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    pub metrics: Metrics,
    pub index: Index,
    pub published_log: Vec<RootEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpKind {
    Read,
    Write(Value),
    /// Read the chain, then write what was read plus one.
    ReadModifyWrite,
}

#[derive(Debug, Clone)]
struct Op {
    key: Key,
    channel: ChannelId,
    kind: OpKind,
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Start,
    Op(usize),
    Commit { attempt: u32 },
}

struct Client {
    id: ClientId,
    remaining: u32,
    txn: Option<TransactionId>,
    ops: Vec<Op>,
}

struct Engine {
    cfg: Validated,
    rng: ChaCha8Rng,
    now: u64,
    trace: Vec<TraceEvent>,
    handlers: Vec<Handler>,
    aggregators: BTreeMap<AgentId, Aggregator>,
    index: Index,
    clients: Vec<Client>,
    pending: BinaryHeap<Reverse<(u64, u32, u64)>>,
    steps: BTreeMap<u64, Step>,
    next_step: u64,
    sequential: Vec<u32>,
}

/// Runs a scenario to quiescence: every client has finished, every fault
/// has healed and every queue is empty.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let cfg = scenario.validate()?;
    let mut engine = Engine::new(cfg)?;
    engine.run()?;
    let metrics = Metrics::from_trace(&engine.trace).expect("engine traces are well formed");
    let published_log = engine.aggregators[&AgentId::Root].published_log().to_vec();
    Ok(RunOutput { trace: engine.trace, metrics, index: engine.index, published_log })
}

/// Runs a saturation workload over `groups` and reports the measured
/// root-slot thickness.
pub fn resolution(groups: &[u32], duration: u64) -> Result<Option<Resolution>, SimError> {
    Ok(run(&Scenario::saturation(groups, duration))?.metrics.resolution)
}

/// Ticks between successive visits of each aggregator level, bottom first.
pub fn visit_periods(groups: &[u32], drain_period: u64) -> Vec<u64> {
    let mut periods = vec![drain_period];
    for &g in &groups[..groups.len() - 1] {
        periods.push(periods.last().unwrap() * g as u64);
    }
    periods
}

impl Engine {
    fn new(cfg: Validated) -> Result<Self, SimError> {
        let topo = &cfg.topology;
        let handlers = topo.handlers().map(|h| Handler::new(h, cfg.queue_limit)).collect();
        let mut aggregators = BTreeMap::new();
        for agent in topo.aggregators() {
            let children = topo.children_of(agent).expect("aggregators have children");
            aggregators.insert(agent, Aggregator::new(agent, children, cfg.batch_cap)?);
        }
        let clients = (0..cfg.workload.clients)
            .map(|c| Client { id: ClientId(c), remaining: cfg.workload.txns_per_client, txn: None, ops: Vec::new() })
            .collect();
        Ok(Engine {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            now: 0,
            trace: Vec::new(),
            handlers,
            aggregators,
            index: Index::new(topo.id()),
            clients,
            pending: BinaryHeap::new(),
            steps: BTreeMap::new(),
            next_step: 0,
            sequential: vec![0; topo.handler_count() as usize],
            cfg,
        })
    }

    fn emit(&mut self, agent: AgentId, body: EventBody) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceEvent { seq, time: self.now, agent, body });
    }

    fn schedule(&mut self, client: u32, at: u64, step: Step) {
        let id = self.next_step;
        self.next_step += 1;
        self.steps.insert(id, step);
        self.pending.push(Reverse((at, client, id)));
    }

    fn run(&mut self) -> Result<(), SimError> {
        self.emit(
            AgentId::Root,
            EventBody::Config {
                groups: self.cfg.topology.groups().to_vec(),
                queue_limit: self.cfg.queue_limit,
                batch_cap: self.cfg.batch_cap,
                seed: self.cfg.seed,
            },
        );
        for c in 0..self.clients.len() as u32 {
            self.schedule(c, 0, Step::Start);
        }
        let periods = visit_periods(self.cfg.topology.groups(), self.cfg.drain_period);
        let healed = self.cfg.faults.iter().map(|f| f.until).max().unwrap_or(0);
        let horizon = self.cfg.duration.max(healed) + DRAIN_HORIZON;
        loop {
            while let Some(&Reverse((at, client, id))) = self.pending.peek() {
                if at > self.now {
                    break;
                }
                self.pending.pop();
                let step = self.steps.remove(&id).expect("scheduled steps are recorded");
                self.client_step(client, step)?;
            }
            for (level, &period) in periods.iter().enumerate() {
                if self.now.is_multiple_of(period) {
                    self.visit_level(level as u8 + 1)?;
                }
            }
            if self.pending.is_empty() && self.now >= healed && self.drained() {
                break;
            }
            if self.now >= horizon {
                return Err(SimError::NoQuiescence(self.now));
            }
            self.now += 1;
        }
        let as_of = self.index.published_through();
        let heads = self.index.past_cone(as_of)?.heads.len();
        self.emit(AgentId::Root, EventBody::Query { as_of, heads });
        Ok(())
    }

    fn drained(&self) -> bool {
        self.handlers.iter().all(|h| h.backlog() == 0) && self.aggregators.values().all(|a| a.backlog() == 0)
    }

    fn down(&self, agent: AgentId) -> bool {
        self.cfg.faults.iter().any(|f| f.covers(agent, self.now))
    }

    fn visit_level(&mut self, level: u8) -> Result<(), SimError> {
        let topo = &self.cfg.topology;
        let agents: Vec<AgentId> = (0..topo.count_at(level)).map(|i| topo.agent_at(level, i)).collect();
        for agent in agents {
            self.visit(agent)?;
        }
        Ok(())
    }

    fn visit(&mut self, agent: AgentId) -> Result<(), SimError> {
        let mut parent = self.aggregators.remove(&agent).expect("known aggregator");
        let child_id = parent.next_child();
        let down = self.down(child_id);
        let (visit, backlog) = match child_id {
            AgentId::Handler(h) => {
                let child = &mut self.handlers[h.0 as usize];
                child.set_drainable(!down);
                let v = parent.pull_and_stamp(child)?;
                (v, child.backlog())
            }
            _ => {
                let mut child = self.aggregators.remove(&child_id).expect("known aggregator");
                child.set_drainable(!down);
                let v = parent.pull_and_stamp(&mut child);
                let backlog = child.backlog();
                self.aggregators.insert(child_id, child);
                (v?, backlog)
            }
        };
        self.aggregators.insert(agent, parent);
        match visit {
            Visit::Skipped(child) => self.emit(agent, EventBody::Skip { child }),
            Visit::Empty(child) => self.emit(agent, EventBody::Drain { child, stamp: None, entries: 0, records: 0, backlog }),
            Visit::Stamped(stamped) => {
                self.emit(
                    agent,
                    EventBody::Drain {
                        child: child_id,
                        stamp: Some(stamped.stamp),
                        entries: stamped.batch.len(),
                        records: stamped.batch.record_count(),
                        backlog,
                    },
                );
                if agent == AgentId::Root {
                    self.index.register_batch(&stamped)?;
                    let records = stamped
                        .flatten()
                        .into_iter()
                        .map(|(r, t_parent)| PublishedRecord {
                            key: r.key.clone(),
                            channel: r.channel.clone(),
                            version: r.version,
                            value: r.value,
                            handler: r.handler,
                            t_handler: r.t_handler,
                            t_parent,
                        })
                        .collect();
                    self.emit(AgentId::Root, EventBody::Publish { t_root: stamped.stamp, records });
                }
            }
        }
        Ok(())
    }

    fn plan(&mut self, handler: HandlerId) -> Vec<Op> {
        let w = &self.cfg.workload;
        let n = self.rng.gen_range(w.ops_min..=w.ops_max);
        let mut ops = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let w = &self.cfg.workload;
            let is_write = self.rng.gen_bool(w.write_fraction);
            let audit = self.rng.gen_bool(w.channel_mix);
            let hot = self.rng.gen_bool(w.hot_key_fraction);
            let local = if hot {
                0
            } else if w.sequential_keys {
                let slot = &mut self.sequential[handler.0 as usize];
                let k = *slot % w.keys_per_handler;
                *slot += 1;
                k
            } else {
                self.rng.gen_range(0..w.keys_per_handler)
            };
            let kind = if !is_write {
                OpKind::Read
            } else if self.rng.gen_bool(w.rmw_fraction) {
                OpKind::ReadModifyWrite
            } else {
                OpKind::Write(self.rng.gen_range(1..=1000))
            };
            let global = handler.0 * w.keys_per_handler + local;
            let channel = if audit { ChannelId::new(AUDIT_CHANNEL) } else { ChannelId::latest() };
            ops.push(Op { key: Key::new(format!("k{global}"), handler), channel, kind });
        }
        ops
    }

    fn client_step(&mut self, c: u32, step: Step) -> Result<(), SimError> {
        let latency = self.cfg.latency;
        match step {
            Step::Start => {
                let client = &mut self.clients[c as usize];
                if client.remaining == 0 || self.now >= self.cfg.duration {
                    return Ok(());
                }
                client.remaining -= 1;
                let handlers = self.cfg.topology.handler_count();
                let h = if self.cfg.workload.pinned { c % handlers } else { self.rng.gen_range(0..handlers) };
                let handler = HandlerId(h);
                let ops = self.plan(handler);
                let anchor = self.index.published_through();
                let client_id = self.clients[c as usize].id;
                let txn = self.handlers[h as usize].begin_transaction(client_id, anchor)?;
                let client = &mut self.clients[c as usize];
                client.txn = Some(txn);
                client.ops = ops;
                self.emit(AgentId::Handler(handler), EventBody::Begin { txn, anchor });
                self.schedule(c, self.now + latency, Step::Op(0));
            }
            Step::Op(i) => {
                let client = &self.clients[c as usize];
                let txn = client.txn.expect("ops run inside a transaction");
                let op = client.ops[i].clone();
                match op.kind {
                    OpKind::Read => {
                        self.read(txn, &op)?;
                    }
                    OpKind::Write(value) => self.write(txn, &op, value)?,
                    OpKind::ReadModifyWrite => {
                        let seen = self.read(txn, &op)?.unwrap_or(0);
                        self.write(txn, &op, seen + 1)?;
                    }
                }
                let next = if i + 1 < self.clients[c as usize].ops.len() { Step::Op(i + 1) } else { Step::Commit { attempt: 0 } };
                self.schedule(c, self.now + latency, next);
            }
            Step::Commit { attempt } => {
                let txn = self.clients[c as usize].txn.expect("commits close a transaction");
                let agent = AgentId::Handler(txn.handler);
                let handler = &mut self.handlers[txn.handler.0 as usize];
                let t = handler.transaction(txn).expect("open transaction");
                let writes: Vec<WriteEntry> = t
                    .private_writes
                    .iter()
                    .map(|((key, channel), value)| WriteEntry { key: key.clone(), channel: channel.clone(), value: *value })
                    .collect();
                let reads: Vec<ReadEntry> = t
                    .read_set
                    .iter()
                    .map(|((key, channel), &base)| ReadEntry { key: key.clone(), channel: channel.clone(), base_version: base })
                    .collect();
                let outcome = handler.request_commit(txn)?;
                let queue_len = handler.queue().len();
                self.emit(agent, EventBody::CommitRequest { txn });
                let think = self.cfg.workload.think_time;
                match outcome {
                    CommitOutcome::Accepted(records) => {
                        self.emit(agent, EventBody::Accept { txn, writes, reads });
                        let first = queue_len + 1 - records.len();
                        for (len, record) in (first..).zip(records) {
                            self.emit(agent, EventBody::Enqueue { txn, record, queue_len: len });
                        }
                        self.schedule(c, self.now + think, Step::Start);
                    }
                    CommitOutcome::Rejected(conflict) => {
                        self.emit(
                            agent,
                            EventBody::Reject {
                                txn,
                                with: conflict.with,
                                key: conflict.key,
                                channel: conflict.channel,
                                conflict: conflict.kind,
                            },
                        );
                        self.schedule(c, self.now + think, Step::Start);
                    }
                    CommitOutcome::Refused => {
                        self.emit(agent, EventBody::Refused { txn, queue_len });
                        if attempt < self.cfg.workload.commit_retries {
                            let delay = self.cfg.workload.retry_delay;
                            self.schedule(c, self.now + delay, Step::Commit { attempt: attempt + 1 });
                        } else {
                            self.handlers[txn.handler.0 as usize].abort(txn)?;
                            self.emit(agent, EventBody::Abort { txn });
                            self.schedule(c, self.now + think, Step::Start);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn read(&mut self, txn: TransactionId, op: &Op) -> Result<Option<Value>, SimError> {
        let handler = &mut self.handlers[txn.handler.0 as usize];
        let outcome = handler.read(txn, &op.key, &op.channel, &self.index)?;
        let (source, version, value, t_root) = match outcome {
            ReadOutcome::Shadow(v) => (ReadSource::Shadow, None, Some(v), None),
            ReadOutcome::Published { version, value, t_root } => (ReadSource::Published, Some(version), Some(value), Some(t_root)),
            ReadOutcome::NotFound => (ReadSource::NotFound, None, None, None),
        };
        self.emit(
            AgentId::Handler(txn.handler),
            EventBody::Read { txn, key: op.key.clone(), channel: op.channel.clone(), source, version, value, t_root },
        );
        Ok(value)
    }

    fn write(&mut self, txn: TransactionId, op: &Op, value: Value) -> Result<(), SimError> {
        self.handlers[txn.handler.0 as usize].private_write(txn, op.key.clone(), op.channel.clone(), value)?;
        self.emit(AgentId::Handler(txn.handler), EventBody::Write { txn, key: op.key.clone(), channel: op.channel.clone(), value });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::corpus_scenario;

    fn kinds(trace: &[TraceEvent], kind: &str) -> usize {
        trace.iter().filter(|e| e.body.kind() == kind).count()
    }

    #[test]
    fn periods_follow_the_rings_below() {
        assert_eq!(visit_periods(&[10, 3], 1), vec![1, 10]);
        assert_eq!(visit_periods(&[3, 3, 3], 1), vec![1, 3, 9]);
        assert_eq!(visit_periods(&[4], 2), vec![2]);
    }

    #[test]
    fn saturated_thickness_tracks_group_product() {
        for groups in [&[2][..], &[4, 2], &[10, 3], &[3, 3, 3]] {
            let r = resolution(groups, 600).unwrap().unwrap();
            let predicted: u64 = groups.iter().map(|&g| g as u64).product();
            assert_eq!(r.predicted, predicted);
            assert!(r.mean >= predicted as f64 / 2.0 && r.mean <= predicted as f64 * 2.0, "{groups:?}: {r:?}");
        }
    }

    #[test]
    fn single_write_publishes_once() {
        let mut s = Scenario::with_topology(&[1], 0);
        s.workload.clients = 1;
        s.workload.txns_per_client = 1;
        s.workload.ops_max = 1;
        s.workload.write_fraction = 1.0;
        s.workload.rmw_fraction = 0.0;
        let out = run(&s).unwrap();
        let publishes: Vec<_> = out
            .trace
            .iter()
            .filter_map(|e| match &e.body {
                EventBody::Publish { records, .. } => Some(records.len()),
                _ => None,
            })
            .collect();
        assert_eq!(publishes, vec![1]);
        assert_eq!(out.trace.first().unwrap().body.kind(), "Config");
        assert_eq!(out.trace.last().unwrap().body.kind(), "Query");
    }

    #[test]
    fn sequence_numbers_are_dense() {
        let out = run(&corpus_scenario(3)).unwrap();
        for (i, e) in out.trace.iter().enumerate() {
            assert_eq!(e.seq, i as u64);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let s = corpus_scenario(7);
        assert_eq!(run(&s).unwrap().trace, run(&s).unwrap().trace);
    }

    #[test]
    fn hot_key_pair_accepts_exactly_one() {
        let out = run(&Scenario::hot_key_pair()).unwrap();
        assert_eq!(kinds(&out.trace, "Accept"), 1);
        assert_eq!(kinds(&out.trace, "Reject"), 1);
    }

    #[test]
    fn stalled_parent_refuses_beyond_the_queue_limit() {
        let out = run(&Scenario::burst(100, 8, 50)).unwrap();
        assert_eq!(kinds(&out.trace, "CommitRequest"), 100);
        assert_eq!(kinds(&out.trace, "Refused"), 92);
        assert_eq!(out.metrics.max_queue[&AgentId::Handler(HandlerId(0)).to_string()], 8);
    }

    #[test]
    fn empty_fault_window_changes_nothing() {
        let s = corpus_scenario(2);
        let faulted = s.clone().inject_fault(AgentId::Handler(HandlerId(0)), 5, 5).unwrap();
        assert_eq!(run(&s).unwrap().trace, run(&faulted).unwrap().trace);
    }

    #[test]
    fn root_log_holds_every_accepted_record() {
        let out = run(&corpus_scenario(11)).unwrap();
        let enqueued = kinds(&out.trace, "Enqueue");
        let published: usize = out.published_log.iter().map(|e| e.batch.record_count()).sum();
        assert_eq!(enqueued, published);
        assert_eq!(out.index.log().len(), published);
    }
}
