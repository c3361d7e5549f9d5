// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Serial replay of a trace.
//!
//! Accepted transactions are applied one at a time, in the order their
//! first record reaches the root log. The result is what a single-threaded
//! store would hold after executing the same transactions serially.

use std::collections::{BTreeMap, BTreeSet};

use crate::handler::TransactionId;
use crate::index::ChainKey;
use crate::time::{HandlerId, Value};

use super::trace::{EventBody, TraceError, TraceEvent, WriteEntry};

pub type OracleState = BTreeMap<ChainKey, Value>;

pub fn serial_oracle(trace: &[TraceEvent]) -> Result<OracleState, TraceError> {
    let mut accepted: BTreeMap<TransactionId, (u64, &[WriteEntry])> = BTreeMap::new();
    let mut emitted: BTreeMap<(HandlerId, u64), TransactionId> = BTreeMap::new();
    let mut order = Vec::new();
    let mut seen = BTreeSet::new();
    for e in trace {
        match &e.body {
            EventBody::Accept { txn, writes, .. } => {
                accepted.insert(*txn, (e.seq, writes));
            }
            EventBody::Enqueue { txn, record, .. } => {
                if !accepted.contains_key(txn) {
                    return Err(TraceError::malformed(e.seq, format!("{txn} enqueued a record without being accepted")));
                }
                emitted.insert((record.handler, record.t_handler), *txn);
            }
            EventBody::Publish { records, .. } => {
                for r in records {
                    let txn = emitted.get(&(r.handler, r.t_handler)).ok_or_else(|| {
                        TraceError::malformed(
                            e.seq,
                            format!("published record {}@{} t_A={} was never enqueued", r.key.name, r.handler, r.t_handler),
                        )
                    })?;
                    if seen.insert(*txn) {
                        order.push(*txn);
                    }
                }
            }
            _ => {}
        }
    }
    for (txn, (seq, writes)) in &accepted {
        if !writes.is_empty() && !seen.contains(txn) {
            return Err(TraceError::malformed(*seq, format!("accepted writes of {txn} never published")));
        }
    }
    let mut state = OracleState::new();
    for txn in order {
        for w in accepted[&txn].1 {
            state.insert((w.key.clone(), w.channel.clone()), w.value);
        }
    }
    Ok(state)
}
