// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Edge shard handlers.
//!
//! A handler owns a disjoint set of keys and is the sole authority for
//! writes to them. Clients open transactions at the handler; writes land in
//! a private workspace that nothing outside the transaction can observe, and
//! reads come from the past cone frozen at begin. On commit the handler
//! adjudicates collisions first-come-first-served within the current
//! interval (the span between two drains by its parent) and queues one
//! [`CommitRecord`] per written `(key, channel)` for the parent to pull.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::aggregator::BatchSource;
use crate::index::{ChainKey, Index};
use crate::record::{Batch, CommitRecord};
use crate::time::{AgentId, ChannelId, ClientId, HandlerId, Key, Value};

pub const DEFAULT_QUEUE_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransactionId {
    pub handler: HandlerId,
    pub seq: u64,
}

impl fmt::Display for TransactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.t{}", self.handler, self.seq)
    }
}

impl FromStr for TransactionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed transaction id {s:?}");
        let (h, seq) = s.split_once(".t").ok_or_else(bad)?;
        let handler = match h.parse::<AgentId>() {
            Ok(AgentId::Handler(h)) => h,
            _ => return Err(bad()),
        };
        Ok(TransactionId { handler, seq: seq.parse().map_err(|_| bad())? })
    }
}

impl Serialize for TransactionId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TransactionId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxnState {
    Active,
    Committed,
    Rejected,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub id: TransactionId,
    pub client: ClientId,
    /// Root tick whose past cone this transaction reads from.
    pub start_anchor: u64,
    /// Chains read, with the version visible at the anchor (0 = none).
    pub read_set: BTreeMap<ChainKey, u64>,
    /// Shadow versions in first-write order.
    pub private_writes: Vec<(ChainKey, Value)>,
    pub state: TxnState,
}

impl Transaction {
    fn shadow(&self, key: &ChainKey) -> Option<Value> {
        self.private_writes.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Admission {
    Admitted,
    Refused,
}

/// Bounded FIFO of committed records awaiting the parent.
#[derive(Debug, Clone)]
pub struct CommitQueue {
    entries: VecDeque<CommitRecord>,
    limit: usize,
}

impl CommitQueue {
    pub fn new(limit: usize) -> Self {
        CommitQueue { entries: VecDeque::new(), limit }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    /// Accept new work only while the queue is below its limit.
    pub fn admit(&self) -> Admission {
        if self.entries.len() < self.limit {
            Admission::Admitted
        } else {
            Admission::Refused
        }
    }

    fn has_room_for(&self, n: usize) -> bool {
        self.entries.len() + n <= self.limit
    }

    fn push(&mut self, record: CommitRecord) {
        debug_assert!(self.entries.len() < self.limit);
        self.entries.push_back(record);
    }

    fn take(&mut self, max: usize) -> Vec<CommitRecord> {
        let n = max.min(self.entries.len());
        self.entries.drain(..n).collect()
    }
}

/// Claims made by accepted commits in the current interval.
#[derive(Debug, Clone, Default)]
pub struct IntervalLedger {
    claims: BTreeMap<ChainKey, TransactionId>,
}

impl IntervalLedger {
    pub fn winner(&self, key: &ChainKey) -> Option<TransactionId> {
        self.claims.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    fn reset(&mut self) {
        self.claims.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConflictKind {
    /// Another transaction already claimed the chain this interval.
    WriteWrite,
    /// The transaction read a chain that has since gained a version it
    /// cannot see, and wants to write it.
    ReadWrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conflict {
    pub with: TransactionId,
    pub key: Key,
    pub channel: ChannelId,
    pub kind: ConflictKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommitOutcome {
    Accepted(Vec<CommitRecord>),
    Rejected(Conflict),
    /// Back-pressure: the queue cannot take the write set. The transaction
    /// stays active and may retry.
    Refused,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReadOutcome {
    Shadow(Value),
    Published { version: u64, value: Value, t_root: u64 },
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandlerError {
    #[error("handler {0} is unavailable")]
    Unavailable(HandlerId),
    #[error("unknown transaction {0}")]
    UnknownTransaction(TransactionId),
    #[error("transaction {txn} is {state:?}, not active")]
    InvalidState { txn: TransactionId, state: TxnState },
    #[error("{key} is not owned by handler {handler}")]
    WrongShard { key: Key, handler: HandlerId },
}

#[derive(Debug, Clone)]
pub struct Handler {
    id: HandlerId,
    tick: u64,
    queue: CommitQueue,
    ledger: IntervalLedger,
    /// Latest committed version per chain and the transaction that wrote it.
    versions: BTreeMap<ChainKey, (u64, TransactionId)>,
    txns: BTreeMap<u64, Transaction>,
    next_txn: u64,
    halted: bool,
    drainable: bool,
}

impl Handler {
    pub fn new(id: HandlerId, queue_limit: usize) -> Self {
        Handler {
            id,
            tick: 0,
            queue: CommitQueue::new(queue_limit),
            ledger: IntervalLedger::default(),
            versions: BTreeMap::new(),
            txns: BTreeMap::new(),
            next_txn: 0,
            halted: false,
            drainable: true,
        }
    }

    pub fn id(&self) -> HandlerId {
        self.id
    }

    /// Handler proper time: one tick per committed record.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn queue(&self) -> &CommitQueue {
        &self.queue
    }

    pub fn ledger(&self) -> &IntervalLedger {
        &self.ledger
    }

    pub fn transaction(&self, id: TransactionId) -> Option<&Transaction> {
        (id.handler == self.id).then(|| self.txns.get(&id.seq)).flatten()
    }

    pub fn set_halted(&mut self, halted: bool) {
        self.halted = halted;
    }

    /// A handler that is not drainable refuses its parent's pulls but keeps
    /// serving clients and keeps its queue.
    pub fn set_drainable(&mut self, drainable: bool) {
        self.drainable = drainable;
    }

    pub fn is_drainable(&self) -> bool {
        self.drainable && !self.halted
    }

    pub fn admit(&self) -> Admission {
        self.queue.admit()
    }

    pub fn begin_transaction(&mut self, client: ClientId, current_root_tick: u64) -> Result<TransactionId, HandlerError> {
        if self.halted {
            return Err(HandlerError::Unavailable(self.id));
        }
        let id = TransactionId { handler: self.id, seq: self.next_txn };
        self.next_txn += 1;
        self.txns.insert(
            id.seq,
            Transaction {
                id,
                client,
                start_anchor: current_root_tick,
                read_set: BTreeMap::new(),
                private_writes: Vec::new(),
                state: TxnState::Active,
            },
        );
        Ok(id)
    }

    fn active_mut(&mut self, id: TransactionId) -> Result<&mut Transaction, HandlerError> {
        let txn = match self.txns.get_mut(&id.seq) {
            Some(t) if id.handler == self.id => t,
            _ => return Err(HandlerError::UnknownTransaction(id)),
        };
        if txn.state != TxnState::Active {
            return Err(HandlerError::InvalidState { txn: id, state: txn.state });
        }
        Ok(txn)
    }

    pub fn private_write(&mut self, txn: TransactionId, key: Key, channel: ChannelId, value: Value) -> Result<(), HandlerError> {
        let me = self.id;
        let t = self.active_mut(txn)?;
        if key.owner != me {
            return Err(HandlerError::WrongShard { key, handler: me });
        }
        let chain = (key, channel);
        match t.private_writes.iter_mut().find(|(k, _)| *k == chain) {
            Some(slot) => slot.1 = value,
            None => t.private_writes.push((chain, value)),
        }
        Ok(())
    }

    /// Own shadow first, then the past cone at the transaction's anchor.
    /// Reads may target keys owned by any handler.
    pub fn read(&mut self, txn: TransactionId, key: &Key, channel: &ChannelId, index: &Index) -> Result<ReadOutcome, HandlerError> {
        let t = self.active_mut(txn)?;
        let chain = (key.clone(), channel.clone());
        let published = index.latest_entry(key, channel, t.start_anchor);
        t.read_set.entry(chain.clone()).or_insert_with(|| published.map_or(0, |e| e.version));
        if let Some(v) = t.shadow(&chain) {
            return Ok(ReadOutcome::Shadow(v));
        }
        Ok(match published {
            Some(e) => ReadOutcome::Published { version: e.version, value: e.value, t_root: e.time.root },
            None => ReadOutcome::NotFound,
        })
    }

    pub fn request_commit(&mut self, txn: TransactionId) -> Result<CommitOutcome, HandlerError> {
        self.active_mut(txn)?;
        let t = &self.txns[&txn.seq];
        let writes = t.private_writes.len();
        if writes > 0 && (self.queue.admit() == Admission::Refused || !self.queue.has_room_for(writes)) {
            return Ok(CommitOutcome::Refused);
        }

        if let Some(conflict) = self.find_conflict(t) {
            self.txns.get_mut(&txn.seq).unwrap().state = TxnState::Rejected;
            return Ok(CommitOutcome::Rejected(conflict));
        }

        let t = self.txns.get_mut(&txn.seq).unwrap();
        t.state = TxnState::Committed;
        let mut records = Vec::with_capacity(writes);
        for ((key, channel), value) in &t.private_writes {
            self.tick += 1;
            let chain = (key.clone(), channel.clone());
            let slot = self.versions.entry(chain.clone()).or_insert((0, txn));
            slot.0 += 1;
            slot.1 = txn;
            let record = CommitRecord {
                key: key.clone(),
                channel: channel.clone(),
                t_handler: self.tick,
                handler: self.id,
                version: slot.0,
                value: *value,
            };
            self.ledger.claims.insert(chain, txn);
            self.queue.push(record.clone());
            records.push(record);
        }
        Ok(CommitOutcome::Accepted(records))
    }

    fn find_conflict(&self, t: &Transaction) -> Option<Conflict> {
        for ((key, channel), _) in &t.private_writes {
            let chain = (key.clone(), channel.clone());
            if let Some(with) = self.ledger.winner(&chain) {
                return Some(Conflict { with, key: key.clone(), channel: channel.clone(), kind: ConflictKind::WriteWrite });
            }
            if let (Some(&base), Some(&(current, with))) = (t.read_set.get(&chain), self.versions.get(&chain)) {
                if current > base {
                    return Some(Conflict { with, key: key.clone(), channel: channel.clone(), kind: ConflictKind::ReadWrite });
                }
            }
        }
        None
    }

    /// Client gives up on an active transaction (e.g. after refusals).
    pub fn abort(&mut self, txn: TransactionId) -> Result<(), HandlerError> {
        self.active_mut(txn)?.state = TxnState::Aborted;
        Ok(())
    }

    /// Parent pull: up to `max_records` in FIFO order. Each drain closes the
    /// current adjudication interval.
    pub fn drain_queue(&mut self, max_records: usize) -> Result<Batch, HandlerError> {
        if !self.is_drainable() {
            return Err(HandlerError::Unavailable(self.id));
        }
        self.ledger.reset();
        Ok(Batch::records(AgentId::Handler(self.id), self.queue.take(max_records)))
    }
}

impl BatchSource for Handler {
    fn source_id(&self) -> AgentId {
        AgentId::Handler(self.id)
    }

    fn pull(&mut self, max_entries: usize) -> Option<Batch> {
        self.drain_queue(max_entries).ok()
    }

    fn backlog(&self) -> usize {
        self.queue.len()
    }
}
