// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! A hierarchical data clock for versioned key-value namespaces.
//!
//! Shard handlers capture writes in private workspaces and adjudicate
//! commits first-come-first-served. Parents pull the handlers' commit queues
//! round-robin and stamp each batch with their own tick; the root does the
//! same one level up and publishes the result as a single global timeline.
//! Every observer that asks for the past cone at the same root tick gets the
//! same snapshot.
//!
//! The [`sim`] module wires these pieces into a deterministic discrete-event
//! simulator; [`verify`] checks the resulting traces.

pub mod aggregator;
pub mod cli;
pub mod handler;
pub mod index;
pub mod metrics;
pub mod record;
pub mod sim;
pub mod time;
pub mod topology;
pub mod verify;

pub use aggregator::{measure_thickness, Aggregator, BatchSource, Ring, Thickness, Visit};
pub use handler::{Admission, CommitOutcome, Handler, ReadOutcome, TransactionId, TxnState};
pub use index::{snapshot_equal, Index, Snapshot};
pub use record::{Batch, CommitRecord, RootEntry, StampedBatch};
pub use time::{compare_time_tuples, simultaneous_ops, AgentId, ChannelId, ClientId, HandlerId, Key, TimeTuple, TupleOrder};
pub use topology::GroupTopology;
