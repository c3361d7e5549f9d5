// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Run metrics, computed from a trace alone.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::aggregator::measure_thickness;
use crate::sim::trace::{EventBody, TraceError, TraceEvent};
use crate::time::AgentId;
use crate::topology::GroupTopology;

/// Handler ticks covered by one root tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub max: u64,
    pub mean: f64,
    pub predicted: u64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub aborted: u64,
    pub accepted: u64,
    /// Mean records per stamped batch, by aggregator level.
    pub batch_size_by_level: BTreeMap<u8, f64>,
    pub begun: u64,
    pub final_root_tick: u64,
    pub max_queue: BTreeMap<String, usize>,
    pub publish_count: u64,
    pub refused: u64,
    pub rejected: u64,
    /// `None` when nothing was published.
    pub resolution: Option<Resolution>,
}

impl Metrics {
    pub fn from_trace(trace: &[TraceEvent]) -> Result<Self, TraceError> {
        let topology = match trace.first().map(|e| &e.body) {
            Some(EventBody::Config { groups, .. }) => {
                GroupTopology::new(groups.clone()).map_err(|e| TraceError::malformed(0, e.to_string()))?
            }
            _ => return Err(TraceError::malformed(0, "trace does not start with Config")),
        };
        let mut m = Metrics {
            aborted: 0,
            accepted: 0,
            batch_size_by_level: BTreeMap::new(),
            begun: 0,
            final_root_tick: 0,
            max_queue: BTreeMap::new(),
            publish_count: 0,
            refused: 0,
            rejected: 0,
            resolution: None,
        };
        for agent in topology.handlers().map(AgentId::Handler).chain(topology.aggregators()) {
            if agent != AgentId::Root {
                m.max_queue.insert(agent.to_string(), 0);
            }
        }
        let mut outputs: BTreeMap<AgentId, usize> = BTreeMap::new();
        let mut batches: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
        let mut slots = Vec::new();
        let bump = |m: &mut Metrics, agent: AgentId, len: usize| {
            let slot = m.max_queue.entry(agent.to_string()).or_insert(0);
            *slot = (*slot).max(len);
        };
        for e in trace {
            match &e.body {
                EventBody::Begin { .. } => m.begun += 1,
                EventBody::Accept { .. } => m.accepted += 1,
                EventBody::Reject { .. } => m.rejected += 1,
                EventBody::Refused { queue_len, .. } => {
                    m.refused += 1;
                    bump(&mut m, e.agent, *queue_len);
                }
                EventBody::Abort { .. } => m.aborted += 1,
                EventBody::Enqueue { queue_len, .. } => bump(&mut m, e.agent, *queue_len),
                EventBody::Drain { child, stamp, entries, records, .. } => {
                    if !matches!(child, AgentId::Handler(_)) {
                        let out = outputs.entry(*child).or_insert(0);
                        *out = out.saturating_sub(*entries);
                    }
                    if stamp.is_some() {
                        let level = topology.locate(e.agent).map_or(0, |(l, _)| l);
                        let b = batches.entry(level).or_insert((0, 0));
                        b.0 += 1;
                        b.1 += *records as u64;
                        if e.agent != AgentId::Root {
                            let out = outputs.entry(e.agent).or_insert(0);
                            *out += 1;
                            let len = *out;
                            bump(&mut m, e.agent, len);
                        }
                    }
                }
                EventBody::Publish { t_root, records } => {
                    m.publish_count += 1;
                    m.final_root_tick = *t_root;
                    slots.push(records.iter().map(|r| (r.handler, r.t_handler)).collect::<Vec<_>>());
                }
                _ => {}
            }
        }
        m.batch_size_by_level = batches.into_iter().map(|(l, (n, records))| (l, records as f64 / n as f64)).collect();
        m.resolution = measure_thickness(slots).ok().map(|t| Resolution {
            max: t.max,
            mean: t.mean,
            predicted: topology.predicted_thickness(),
            samples: t.samples,
        });
        Ok(m)
    }

    /// Pretty JSON with a trailing newline.
    pub fn write_json<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{corpus_scenario, run, Scenario};

    #[test]
    fn counts_match_event_tallies() {
        let out = run(&corpus_scenario(4)).unwrap();
        let count = |k: &str| out.trace.iter().filter(|e| e.body.kind() == k).count() as u64;
        let m = &out.metrics;
        assert_eq!(m.accepted, count("Accept"));
        assert_eq!(m.rejected, count("Reject"));
        assert_eq!(m.refused, count("Refused"));
        assert_eq!(m.aborted, count("Abort"));
        assert_eq!(m.begun, count("Begin"));
        assert_eq!(m.publish_count, count("Publish"));
        assert_eq!(m.begun, m.accepted + m.rejected + m.aborted);
    }

    #[test]
    fn metrics_are_recomputable_from_the_written_trace() {
        let out = run(&corpus_scenario(9)).unwrap();
        let mut buf = Vec::new();
        crate::sim::write_trace(&out.trace, &mut buf).unwrap();
        let reread = crate::sim::read_trace(&buf[..]).unwrap();
        assert_eq!(Metrics::from_trace(&reread).unwrap(), out.metrics);
    }

    #[test]
    fn single_handler_resolution_is_one() {
        let out = run(&Scenario::saturation(&[1], 200)).unwrap();
        let r = out.metrics.resolution.unwrap();
        assert_eq!(r.predicted, 1);
        assert_eq!(r.max, 1);
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn trace_must_open_with_config() {
        assert!(Metrics::from_trace(&[]).is_err());
    }
}
