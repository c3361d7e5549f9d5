// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Trace audits.
//!
//! [`verify_trace`] replays a trace and checks, in order: linear extension,
//! conservation, monotone publication, read isolation, FCFS exclusivity,
//! queue bounds, snapshot determinism and oracle equivalence. It stops at
//! the first violation and reports the sequence numbers involved.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::handler::TransactionId;
use crate::index::{ChainKey, Index};
use crate::metrics::Metrics;
use crate::record::{Batch, CommitRecord, RootEntry, StampedBatch};
use crate::sim::oracle::serial_oracle;
use crate::sim::trace::{EventBody, PublishedRecord, ReadSource, TraceError, TraceEvent};
use crate::time::{AgentId, HandlerId, Value};
use crate::topology::GroupTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    LinearExtension,
    Conservation,
    MonotonePublication,
    ReadIsolation,
    FcfsExclusivity,
    QueueBound,
    SnapshotDeterminism,
    OracleEquivalence,
    Metrics,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Check::LinearExtension => "linear extension",
            Check::Conservation => "conservation",
            Check::MonotonePublication => "monotone publication",
            Check::ReadIsolation => "read isolation",
            Check::FcfsExclusivity => "FCFS exclusivity",
            Check::QueueBound => "queue bound",
            Check::SnapshotDeterminism => "snapshot determinism",
            Check::OracleEquivalence => "oracle equivalence",
            Check::Metrics => "metrics",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub check: Check,
    pub seqs: Vec<u64>,
    pub detail: String,
}

impl Violation {
    fn new(check: Check, seqs: impl Into<Vec<u64>>, detail: impl Into<String>) -> Self {
        Violation { check, seqs: seqs.into(), detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let seqs: Vec<String> = self.seqs.iter().map(u64::to_string).collect();
        write!(f, "{} violated at seq {}: {}", self.check, seqs.join(","), self.detail)
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Malformed(#[from] TraceError),
    #[error("{0}")]
    Violation(Violation),
}

impl From<Violation> for VerifyError {
    fn from(v: Violation) -> Self {
        VerifyError::Violation(v)
    }
}

/// What a passing trace contained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Report {
    pub events: usize,
    pub publishes: usize,
    pub records: usize,
    pub final_root_tick: u64,
}

/// Static facts about a trace, established before any check runs.
pub struct Header {
    pub topology: GroupTopology,
    pub queue_limit: usize,
    pub batch_cap: usize,
}

pub fn header(trace: &[TraceEvent]) -> Result<Header, TraceError> {
    let Some(first) = trace.first() else {
        return Err(TraceError::malformed(0, "empty trace"));
    };
    let EventBody::Config { groups, queue_limit, batch_cap, .. } = &first.body else {
        return Err(TraceError::malformed(first.seq, "trace does not start with Config"));
    };
    let topology = GroupTopology::new(groups.clone()).map_err(|e| TraceError::malformed(first.seq, e.to_string()))?;
    let mut begun = BTreeSet::new();
    for (i, e) in trace.iter().enumerate() {
        if e.seq != i as u64 {
            return Err(TraceError::malformed(e.seq, format!("expected seq {i}")));
        }
        if i > 0 && matches!(e.body, EventBody::Config { .. }) {
            return Err(TraceError::malformed(e.seq, "Config after the first event"));
        }
        if let Some(agent) = agent_of(&e.body) {
            if !topology.contains(agent) {
                return Err(TraceError::malformed(e.seq, format!("{agent} is not part of the topology")));
            }
        }
        match &e.body {
            EventBody::Begin { txn, .. } => {
                if !begun.insert(*txn) {
                    return Err(TraceError::malformed(e.seq, format!("{txn} begun twice")));
                }
            }
            body => {
                if let Some(txn) = txn_of(body) {
                    if !begun.contains(&txn) {
                        return Err(TraceError::malformed(e.seq, format!("{txn} used before Begin")));
                    }
                }
            }
        }
    }
    Ok(Header { topology, queue_limit: *queue_limit, batch_cap: *batch_cap })
}

fn agent_of(body: &EventBody) -> Option<AgentId> {
    match body {
        EventBody::Drain { child, .. } | EventBody::Skip { child } => Some(*child),
        _ => txn_of(body).map(|t| AgentId::Handler(t.handler)),
    }
}

fn txn_of(body: &EventBody) -> Option<TransactionId> {
    match body {
        EventBody::Begin { txn, .. }
        | EventBody::Write { txn, .. }
        | EventBody::Read { txn, .. }
        | EventBody::CommitRequest { txn }
        | EventBody::Accept { txn, .. }
        | EventBody::Reject { txn, .. }
        | EventBody::Refused { txn, .. }
        | EventBody::Abort { txn }
        | EventBody::Enqueue { txn, .. } => Some(*txn),
        _ => None,
    }
}

fn publishes(trace: &[TraceEvent]) -> impl Iterator<Item = (u64, u64, &[PublishedRecord])> {
    trace.iter().filter_map(|e| match &e.body {
        EventBody::Publish { t_root, records } => Some((e.seq, *t_root, records.as_slice())),
        _ => None,
    })
}

/// Each handler's records reach the root log in the order it emitted them.
pub fn check_linear_extension(trace: &[TraceEvent]) -> Result<(), Violation> {
    let mut emitted: BTreeMap<HandlerId, Vec<(u64, u64)>> = BTreeMap::new();
    for e in trace {
        if let EventBody::Enqueue { record, .. } = &e.body {
            let list = emitted.entry(record.handler).or_default();
            if let Some(&(prev_seq, prev)) = list.last() {
                if record.t_handler <= prev {
                    return Err(Violation::new(
                        Check::LinearExtension,
                        [prev_seq, e.seq],
                        format!("{} emitted t_A={} after t_A={}", record.handler, record.t_handler, prev),
                    ));
                }
            }
            list.push((e.seq, record.t_handler));
        }
    }
    let mut cursor: BTreeMap<HandlerId, usize> = BTreeMap::new();
    for (seq, _, records) in publishes(trace) {
        for r in records {
            let i = cursor.entry(r.handler).or_insert(0);
            let expected = emitted.get(&r.handler).and_then(|l| l.get(*i));
            match expected {
                Some(&(_, t)) if t == r.t_handler => *i += 1,
                Some(&(eseq, t)) => {
                    return Err(Violation::new(
                        Check::LinearExtension,
                        [eseq, seq],
                        format!("{} published t_A={} where t_A={} was next in emission order", r.handler, r.t_handler, t),
                    ))
                }
                None => {
                    return Err(Violation::new(
                        Check::LinearExtension,
                        [seq],
                        format!("{} published t_A={} beyond its emissions", r.handler, r.t_handler),
                    ))
                }
            }
        }
    }
    Ok(())
}

/// Accepted writes are enqueued as written and published exactly once;
/// versions of a chain are published consecutively.
pub fn check_conservation(trace: &[TraceEvent]) -> Result<(), Violation> {
    let mut accepted: BTreeMap<TransactionId, (u64, Vec<(ChainKey, Value)>)> = BTreeMap::new();
    let mut enqueued: BTreeMap<TransactionId, Vec<(u64, &CommitRecord)>> = BTreeMap::new();
    let mut records: BTreeMap<(HandlerId, u64), (u64, &CommitRecord)> = BTreeMap::new();
    for e in trace {
        match &e.body {
            EventBody::Accept { txn, writes, .. } => {
                let writes = writes.iter().map(|w| ((w.key.clone(), w.channel.clone()), w.value)).collect();
                accepted.insert(*txn, (e.seq, writes));
            }
            EventBody::Enqueue { txn, record, .. } => {
                if !accepted.contains_key(txn) {
                    return Err(Violation::new(Check::Conservation, [e.seq], format!("{txn} enqueued without acceptance")));
                }
                if record.handler != txn.handler || record.key.owner != txn.handler {
                    return Err(Violation::new(
                        Check::Conservation,
                        [e.seq],
                        format!("{txn} enqueued {} for handler {}", record.key, record.handler),
                    ));
                }
                enqueued.entry(*txn).or_default().push((e.seq, record));
                if records.insert((record.handler, record.t_handler), (e.seq, record)).is_some() {
                    return Err(Violation::new(
                        Check::Conservation,
                        [e.seq],
                        format!("{} reused t_A={}", record.handler, record.t_handler),
                    ));
                }
            }
            _ => {}
        }
    }
    for (txn, (seq, writes)) in &accepted {
        let got: Vec<(ChainKey, Value)> =
            enqueued.get(txn).map(|l| l.iter().map(|(_, r)| ((r.key.clone(), r.channel.clone()), r.value)).collect()).unwrap_or_default();
        if &got != writes {
            return Err(Violation::new(Check::Conservation, [*seq], format!("records enqueued for {txn} differ from its writes")));
        }
    }
    let mut published: BTreeMap<(HandlerId, u64), u64> = BTreeMap::new();
    let mut versions: BTreeMap<ChainKey, u64> = BTreeMap::new();
    for (seq, _, recs) in publishes(trace) {
        for r in recs {
            let id = (r.handler, r.t_handler);
            let Some(&(eseq, original)) = records.get(&id) else {
                return Err(Violation::new(
                    Check::Conservation,
                    [seq],
                    format!("{} t_A={} published but never enqueued", r.handler, r.t_handler),
                ));
            };
            if let Some(first) = published.insert(id, seq) {
                return Err(Violation::new(
                    Check::Conservation,
                    [first, seq],
                    format!("{} t_A={} published twice", r.handler, r.t_handler),
                ));
            }
            if !r.matches(original) {
                return Err(Violation::new(
                    Check::Conservation,
                    [eseq, seq],
                    format!("{} t_A={} altered in publication", r.handler, r.t_handler),
                ));
            }
            let v = versions.entry((r.key.clone(), r.channel.clone())).or_insert(0);
            if r.version != *v + 1 {
                return Err(Violation::new(
                    Check::Conservation,
                    [seq],
                    format!("{} in channel {} published version {} after {}", r.key, r.channel, r.version, v),
                ));
            }
            *v = r.version;
        }
    }
    if let Some((_, &(seq, r))) = records.iter().find(|(id, _)| !published.contains_key(id)) {
        return Err(Violation::new(Check::Conservation, [seq], format!("{} t_A={} never published", r.handler, r.t_handler)));
    }
    Ok(())
}

pub fn check_monotone_publication(trace: &[TraceEvent]) -> Result<(), Violation> {
    let mut last: Option<(u64, u64)> = None;
    for (seq, t_root, _) in publishes(trace) {
        if let Some((lseq, lt)) = last {
            if t_root <= lt {
                return Err(Violation::new(Check::MonotonePublication, [lseq, seq], format!("t_R={t_root} after t_R={lt}")));
            }
        } else if t_root == 0 {
            return Err(Violation::new(Check::MonotonePublication, [seq], "t_R=0 is reserved for the empty past"));
        }
        last = Some((seq, t_root));
    }
    Ok(())
}

/// Rebuilds the root entry a Publish event describes.
pub fn root_entry(topology: &GroupTopology, t_root: u64, records: &[PublishedRecord]) -> RootEntry {
    let commit = |r: &PublishedRecord| CommitRecord {
        key: r.key.clone(),
        channel: r.channel.clone(),
        t_handler: r.t_handler,
        handler: r.handler,
        version: r.version,
        value: r.value,
    };
    if topology.depth() == 1 {
        let source = records.first().map_or(AgentId::Root, |r| AgentId::Handler(r.handler));
        return StampedBatch {
            stamp: t_root,
            stamped_by: AgentId::Root,
            batch: Batch::records(source, records.iter().map(commit).collect()),
        };
    }
    let mut groups: Vec<StampedBatch> = Vec::new();
    for r in records {
        let parent = topology.parent_of(AgentId::Handler(r.handler)).unwrap_or(AgentId::Root);
        let source = AgentId::Handler(r.handler);
        match groups.last_mut() {
            Some(g) if g.stamp == r.t_parent && g.stamped_by == parent && g.batch.source == source => {
                if let crate::record::BatchItems::Records(list) = &mut g.batch.items {
                    list.push(commit(r));
                }
            }
            _ => groups.push(StampedBatch { stamp: r.t_parent, stamped_by: parent, batch: Batch::records(source, vec![commit(r)]) }),
        }
    }
    StampedBatch { stamp: t_root, stamped_by: AgentId::Root, batch: Batch::nested(AgentId::Root, groups) }
}

fn rebuild(topology: &GroupTopology, trace: &[TraceEvent]) -> Result<Index, Violation> {
    let mut index = Index::new(topology.id());
    for (seq, t_root, records) in publishes(trace) {
        index
            .register_batch(&root_entry(topology, t_root, records))
            .map_err(|e| Violation::new(Check::SnapshotDeterminism, [seq], e.to_string()))?;
    }
    Ok(index)
}

/// Transactions see exactly the past cone at their anchor, which is the
/// last root tick published before they began, plus their own writes.
pub fn check_read_isolation(topology: &GroupTopology, trace: &[TraceEvent]) -> Result<(), Violation> {
    let mut index = Index::new(topology.id());
    let mut last_publish: (u64, u64) = (0, 0);
    let mut anchors: BTreeMap<TransactionId, (u64, u64)> = BTreeMap::new();
    let mut shadows: BTreeMap<TransactionId, BTreeMap<ChainKey, Value>> = BTreeMap::new();
    for e in trace {
        match &e.body {
            EventBody::Publish { t_root, records } => {
                index
                    .register_batch(&root_entry(topology, *t_root, records))
                    .map_err(|err| Violation::new(Check::ReadIsolation, [e.seq], err.to_string()))?;
                last_publish = (e.seq, *t_root);
            }
            EventBody::Begin { txn, anchor } => {
                if *anchor != last_publish.1 {
                    return Err(Violation::new(
                        Check::ReadIsolation,
                        [last_publish.0, e.seq],
                        format!("{txn} anchored at t_R={anchor}, last publication was t_R={}", last_publish.1),
                    ));
                }
                anchors.insert(*txn, (e.seq, *anchor));
            }
            EventBody::Write { txn, key, channel, value } => {
                shadows.entry(*txn).or_default().insert((key.clone(), channel.clone()), *value);
            }
            EventBody::Read { txn, key, channel, source, version, value, t_root } => {
                let (bseq, anchor) = anchors[txn];
                let chain = (key.clone(), channel.clone());
                let shadow = shadows.get(txn).and_then(|s| s.get(&chain)).copied();
                let fail = |detail: String| Err(Violation::new(Check::ReadIsolation, [bseq, e.seq], detail));
                match (source, shadow) {
                    (ReadSource::Shadow, Some(v)) if *value == Some(v) => {}
                    (ReadSource::Shadow, _) => return fail(format!("{txn} read {key} from a shadow it does not hold")),
                    (_, Some(_)) => return fail(format!("{txn} bypassed its own write to {key}")),
                    (ReadSource::Published, None) => {
                        let Some(t) = *t_root else { return fail(format!("{txn} read {key} without a root tick")) };
                        if t > anchor {
                            return fail(format!("{txn} read {key} published at t_R={t}, after its anchor t_R={anchor}"));
                        }
                        let expected = index.latest_entry(key, channel, anchor).map(|v| (v.version, v.value, v.time.root));
                        if expected != version.zip(*value).map(|(v, x)| (v, x, t)) {
                            return fail(format!("{txn} read {key} as {version:?}={value:?}, past cone holds {expected:?}"));
                        }
                    }
                    (ReadSource::NotFound, None) => {
                        if let Some(v) = index.latest_entry(key, channel, anchor) {
                            return fail(format!("{txn} missed {key} version {} in its past cone", v.version));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(())
}

/// No two accepted commits claim one chain between two drains of their
/// handler, and no accepted commit writes a chain it read stale.
pub fn check_fcfs(trace: &[TraceEvent]) -> Result<(), Violation> {
    let mut ledgers: BTreeMap<HandlerId, BTreeMap<ChainKey, (TransactionId, u64)>> = BTreeMap::new();
    let mut versions: BTreeMap<ChainKey, u64> = BTreeMap::new();
    for e in trace {
        match &e.body {
            EventBody::Drain { child: AgentId::Handler(h), .. } => {
                ledgers.remove(h);
            }
            EventBody::Accept { txn, writes, reads } => {
                let ledger = ledgers.entry(txn.handler).or_default();
                for w in writes {
                    let chain = (w.key.clone(), w.channel.clone());
                    if let Some(&(other, seq)) = ledger.get(&chain) {
                        if other != *txn {
                            return Err(Violation::new(
                                Check::FcfsExclusivity,
                                [seq, e.seq],
                                format!("{other} and {txn} both committed {} in channel {} in one interval", w.key, w.channel),
                            ));
                        }
                    }
                    ledger.insert(chain.clone(), (*txn, e.seq));
                    if let Some(r) = reads.iter().find(|r| r.key == w.key && r.channel == w.channel) {
                        let current = versions.get(&chain).copied().unwrap_or(0);
                        if current > r.base_version {
                            return Err(Violation::new(
                                Check::FcfsExclusivity,
                                [e.seq],
                                format!("{txn} wrote {} after reading version {} while {} was committed", w.key, r.base_version, current),
                            ));
                        }
                    }
                }
            }
            EventBody::Enqueue { record, .. } => {
                versions.insert((record.key.clone(), record.channel.clone()), record.version);
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn check_queue_bound(header: &Header, trace: &[TraceEvent]) -> Result<(), Violation> {
    for e in trace {
        let (len, limit, what) = match &e.body {
            EventBody::Enqueue { queue_len, .. } | EventBody::Refused { queue_len, .. } => (*queue_len, header.queue_limit, "queue length"),
            EventBody::Drain { entries, .. } => (*entries, header.batch_cap, "batch size"),
            _ => continue,
        };
        if len > limit {
            return Err(Violation::new(Check::QueueBound, [e.seq], format!("{what} {len} exceeds {limit}")));
        }
    }
    Ok(())
}

/// Two independently rebuilt indexes agree at every published root tick,
/// and the final Query matches.
pub fn check_snapshot_determinism(topology: &GroupTopology, trace: &[TraceEvent]) -> Result<Index, Violation> {
    let a = rebuild(topology, trace)?;
    let b = rebuild(topology, trace)?;
    let ticks = std::iter::once(0).chain(publishes(trace).map(|(_, t, _)| t));
    for t in ticks {
        let (sa, sb) = (a.past_cone(t), b.past_cone(t));
        if sa.as_ref().ok().map(|s| &s.heads) != sb.as_ref().ok().map(|s| &s.heads) || sa.is_err() {
            return Err(Violation::new(Check::SnapshotDeterminism, [], format!("snapshots at t_R={t} differ")));
        }
    }
    for e in trace {
        if let EventBody::Query { as_of, heads } = &e.body {
            if *as_of != a.published_through() {
                return Err(Violation::new(
                    Check::SnapshotDeterminism,
                    [e.seq],
                    format!("query at t_R={as_of} but t_R={} was published", a.published_through()),
                ));
            }
            let n = a.past_cone(*as_of).map(|s| s.heads.len()).unwrap_or(usize::MAX);
            if n != *heads {
                return Err(Violation::new(Check::SnapshotDeterminism, [e.seq], format!("query saw {heads} heads, past cone has {n}")));
            }
        }
    }
    Ok(a)
}

pub fn check_oracle(index: &Index, trace: &[TraceEvent]) -> Result<(), VerifyError> {
    let oracle = serial_oracle(trace)?;
    let cone = index.past_cone(index.published_through()).expect("final tick is published");
    let heads: BTreeMap<ChainKey, Value> = cone.heads.into_iter().map(|(k, (_, v))| (k, v)).collect();
    if heads != oracle {
        let diff = heads
            .iter()
            .find(|(k, v)| oracle.get(*k) != Some(*v))
            .map(|(k, v)| format!("{} in channel {}: past cone {v}, oracle {:?}", k.0, k.1, oracle.get(k)))
            .or_else(|| {
                oracle.keys().find(|k| !heads.contains_key(*k)).map(|k| format!("{} in channel {} missing from past cone", k.0, k.1))
            })
            .unwrap_or_default();
        return Err(Violation::new(Check::OracleEquivalence, [], diff).into());
    }
    Ok(())
}

/// Runs every check in order.
pub fn verify_trace(trace: &[TraceEvent]) -> Result<Report, VerifyError> {
    let header = header(trace)?;
    check_linear_extension(trace)?;
    check_conservation(trace)?;
    check_monotone_publication(trace)?;
    check_read_isolation(&header.topology, trace)?;
    check_fcfs(trace)?;
    check_queue_bound(&header, trace)?;
    let index = check_snapshot_determinism(&header.topology, trace)?;
    check_oracle(&index, trace)?;
    let (publishes, records) = publishes(trace).fold((0, 0), |(p, n), (_, _, r)| (p + 1, n + r.len()));
    Ok(Report { events: trace.len(), publishes, records, final_root_tick: index.published_through() })
}

/// Checks a metrics file against the metrics recomputed from its trace.
pub fn verify_metrics(trace: &[TraceEvent], metrics: &Metrics) -> Result<(), VerifyError> {
    let recomputed = Metrics::from_trace(trace)?;
    if &recomputed != metrics {
        return Err(Violation::new(Check::Metrics, [], "metrics file differs from the metrics of its trace").into());
    }
    Ok(())
}
