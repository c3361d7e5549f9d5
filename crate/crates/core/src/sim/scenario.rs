// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Scenario files and built-in scenario presets.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! seed = 7
//! duration = 500
//!
//! [topology]
//! groups = [4, 2]
//!
//! [workload]
//! clients = 6
//! hot_key_fraction = 0.3
//!
//! [policy]
//! queue_limit = 16
//!
//! [[faults]]
//! agent = "A1"
//! from = 20
//! until = 40
//! ```
//!
//! Unknown fields are rejected. Times are in simulator ticks; one tick is
//! one nominal millisecond of handler time.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::time::AgentId;
use crate::topology::GroupTopology;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            write!(f, "invalid scenario: {}", self.message)
        } else {
            write!(f, "invalid scenario: {}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    /// Clients start no new transaction at or after this tick.
    #[serde(default = "defaults::duration")]
    pub duration: i64,
    pub topology: TopologySpec,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub faults: Vec<Fault>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub groups: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Workload {
    pub clients: i64,
    pub txns_per_client: i64,
    /// Operations per transaction, uniform in `ops_min..=ops_max`.
    pub ops_min: i64,
    pub ops_max: i64,
    pub keys_per_handler: i64,
    /// Probability that an operation targets its handler's hot key.
    pub hot_key_fraction: f64,
    /// Probability that an operation is a write rather than a read.
    pub write_fraction: f64,
    /// Probability that a write is read-modify-write (read, then write the
    /// value plus one).
    pub rmw_fraction: f64,
    /// Probability that an operation uses the `audit` channel instead of
    /// `latest`.
    pub channel_mix: f64,
    /// Ticks between the end of one transaction and the start of the next.
    pub think_time: i64,
    /// Commit retries after a back-pressure refusal before aborting.
    pub commit_retries: i64,
    pub retry_delay: i64,
    /// Client `c` always works against handler `c mod H`.
    pub pinned: bool,
    /// Walk each handler's keys in order instead of sampling them.
    pub sequential_keys: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Policy {
    /// Maximum handler commit queue length `L`.
    pub queue_limit: i64,
    /// Entries per pull; defaults to `queue_limit`.
    pub batch_cap: Option<i64>,
    /// Ticks between two visits of a bottom-level parent. Each level above
    /// visits once per full turn of the ring below it.
    pub drain_period: i64,
    /// Ticks between a client's successive operations.
    pub latency: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    pub agent: String,
    /// The agent refuses pulls for ticks in `from..until`.
    pub from: i64,
    pub until: i64,
}

mod defaults {
    pub fn duration() -> i64 {
        10_000
    }
}

impl Default for Workload {
    fn default() -> Self {
        Workload {
            clients: 4,
            txns_per_client: 20,
            ops_min: 1,
            ops_max: 4,
            keys_per_handler: 16,
            hot_key_fraction: 0.0,
            write_fraction: 0.6,
            rmw_fraction: 0.3,
            channel_mix: 0.0,
            think_time: 1,
            commit_retries: 2,
            retry_delay: 1,
            pinned: false,
            sequential_keys: false,
        }
    }
}

impl Default for Policy {
    fn default() -> Self {
        Policy { queue_limit: crate::handler::DEFAULT_QUEUE_LIMIT as i64, batch_cap: None, drain_period: 1, latency: 1 }
    }
}

/// A validated fault window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultWindow {
    pub agent: AgentId,
    pub from: u64,
    pub until: u64,
}

impl FaultWindow {
    pub fn covers(&self, agent: AgentId, t: u64) -> bool {
        self.agent == agent && self.from <= t && t < self.until
    }
}

/// A scenario with every field checked and converted.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub seed: u64,
    pub duration: u64,
    pub topology: GroupTopology,
    pub workload: ValidWorkload,
    pub queue_limit: usize,
    pub batch_cap: usize,
    pub drain_period: u64,
    pub latency: u64,
    pub faults: Vec<FaultWindow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidWorkload {
    pub clients: u32,
    pub txns_per_client: u32,
    pub ops_min: u32,
    pub ops_max: u32,
    pub keys_per_handler: u32,
    pub hot_key_fraction: f64,
    pub write_fraction: f64,
    pub rmw_fraction: f64,
    pub channel_mix: f64,
    pub think_time: u64,
    pub commit_retries: u32,
    pub retry_delay: u64,
    pub pinned: bool,
    pub sequential_keys: bool,
}

fn int<T: TryFrom<i64>>(field: &str, v: i64, min: i64) -> Result<T, ConfigError> {
    if v < min {
        return Err(ConfigError::new(field, format!("must be at least {min}, got {v}")));
    }
    T::try_from(v).map_err(|_| ConfigError::new(field, format!("{v} is out of range")))
}

fn fraction(field: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(ConfigError::new(field, format!("must lie in [0, 1], got {v}")))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| text[s].trim().to_owned()).unwrap_or_default();
            ConfigError::new(field, e.message().trim().to_owned())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios always serialize")
    }

    pub fn validate(&self) -> Result<Validated, ConfigError> {
        let groups = self
            .topology
            .groups
            .iter()
            .enumerate()
            .map(|(i, &g)| int::<u32>(&format!("topology.groups[{i}]"), g, 1))
            .collect::<Result<Vec<_>, _>>()?;
        let topology = GroupTopology::new(groups).map_err(|e| ConfigError::new("topology.groups", e.to_string()))?;

        let w = &self.workload;
        let workload = ValidWorkload {
            clients: int("workload.clients", w.clients, 0)?,
            txns_per_client: int("workload.txns_per_client", w.txns_per_client, 0)?,
            ops_min: int("workload.ops_min", w.ops_min, 1)?,
            ops_max: int("workload.ops_max", w.ops_max, 1)?,
            keys_per_handler: int("workload.keys_per_handler", w.keys_per_handler, 1)?,
            hot_key_fraction: fraction("workload.hot_key_fraction", w.hot_key_fraction)?,
            write_fraction: fraction("workload.write_fraction", w.write_fraction)?,
            rmw_fraction: fraction("workload.rmw_fraction", w.rmw_fraction)?,
            channel_mix: fraction("workload.channel_mix", w.channel_mix)?,
            think_time: int("workload.think_time", w.think_time, 0)?,
            commit_retries: int("workload.commit_retries", w.commit_retries, 0)?,
            retry_delay: int("workload.retry_delay", w.retry_delay, 1)?,
            pinned: w.pinned,
            sequential_keys: w.sequential_keys,
        };
        if workload.ops_max < workload.ops_min {
            return Err(ConfigError::new("workload.ops_max", "must not be below workload.ops_min"));
        }

        let p = &self.policy;
        let queue_limit: usize = int("policy.queue_limit", p.queue_limit, 1)?;
        let batch_cap = match p.batch_cap {
            Some(cap) => int("policy.batch_cap", cap, 1)?,
            None => queue_limit,
        };
        if workload.ops_max as usize > queue_limit {
            return Err(ConfigError::new("workload.ops_max", "a write set must fit in policy.queue_limit"));
        }
        let drain_period = int("policy.drain_period", p.drain_period, 1)?;
        let latency = int("policy.latency", p.latency, 0)?;

        let faults = self
            .faults
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let field = format!("faults[{i}]");
                let agent: AgentId = f.agent.parse().map_err(|e| ConfigError::new(format!("{field}.agent"), format!("{e}")))?;
                if agent == AgentId::Root || !topology.contains(agent) {
                    return Err(ConfigError::new(format!("{field}.agent"), format!("no child {agent} in this topology")));
                }
                let from = int(&format!("{field}.from"), f.from, 0)?;
                let until = int(&format!("{field}.until"), f.until, 0)?;
                if until < from {
                    return Err(ConfigError::new(format!("{field}.until"), "must not precede from"));
                }
                Ok(FaultWindow { agent, from, until })
            })
            .collect::<Result<Vec<_>, _>>()?;

        Ok(Validated {
            seed: self.seed,
            duration: int("duration", self.duration, 0)?,
            topology,
            workload,
            queue_limit,
            batch_cap,
            drain_period,
            latency,
            faults,
        })
    }

    /// Builds a scenario over `groups` with default workload and policy.
    pub fn with_topology(groups: &[u32], seed: u64) -> Self {
        Scenario {
            seed,
            duration: defaults::duration(),
            topology: TopologySpec { groups: groups.iter().map(|&g| g as i64).collect() },
            workload: Workload::default(),
            policy: Policy::default(),
            faults: Vec::new(),
        }
    }

    /// Takes `agent` out of its parent's reach for ticks in `from..until`.
    pub fn inject_fault(mut self, agent: AgentId, from: u64, until: u64) -> Result<Self, ConfigError> {
        self.faults.push(Fault { agent: agent.to_string(), from: from as i64, until: until as i64 });
        let field = format!("faults[{}].agent", self.faults.len() - 1);
        match self.validate() {
            Ok(_) => Ok(self),
            Err(e) if e.field == field => Err(e),
            Err(e) => Err(e),
        }
    }

    /// Every handler continuously busy: one pinned client per handler
    /// committing a single fresh key per tick.
    pub fn saturation(groups: &[u32], duration: u64) -> Self {
        let mut s = Scenario::with_topology(groups, 0);
        let handlers: u32 = groups.iter().product();
        s.duration = duration as i64;
        s.workload = Workload {
            clients: handlers as i64,
            txns_per_client: duration as i64,
            ops_min: 1,
            ops_max: 1,
            keys_per_handler: 4096,
            hot_key_fraction: 0.0,
            write_fraction: 1.0,
            rmw_fraction: 0.0,
            channel_mix: 0.0,
            think_time: 1,
            commit_retries: 0,
            retry_delay: 1,
            pinned: true,
            sequential_keys: true,
        };
        s.policy.latency = 0;
        s
    }

    /// `commits` single-write transactions arriving at once on one handler
    /// whose parent cannot reach it until `stall` ticks have passed.
    pub fn burst(commits: u32, queue_limit: usize, stall: u64) -> Self {
        let mut s = Scenario::with_topology(&[1], 0);
        s.workload = Workload {
            clients: commits as i64,
            txns_per_client: 1,
            ops_min: 1,
            ops_max: 1,
            keys_per_handler: commits.max(1) as i64,
            hot_key_fraction: 0.0,
            write_fraction: 1.0,
            rmw_fraction: 0.0,
            channel_mix: 0.0,
            think_time: 1,
            commit_retries: 0,
            retry_delay: 1,
            pinned: true,
            sequential_keys: true,
        };
        s.policy.queue_limit = queue_limit as i64;
        s.policy.latency = 0;
        s.faults.push(Fault { agent: "A0".into(), from: 0, until: stall as i64 });
        s
    }

    /// Two clients racing on one hot key, starting together.
    pub fn hot_key_pair() -> Self {
        let mut s = Scenario::with_topology(&[1], 0);
        s.workload = workload_contention(1.0);
        s.workload.clients = 2;
        s.workload.txns_per_client = 1;
        s.workload.ops_min = 1;
        s.workload.ops_max = 1;
        s.workload.write_fraction = 1.0;
        s.workload.rmw_fraction = 0.0;
        s.policy.drain_period = 10;
        s
    }
}

/// Workload in which `hot_key_fraction` of operations hit each handler's
/// hot key; everything else spreads over the handler's keys.
pub fn workload_contention(hot_key_fraction: f64) -> Workload {
    Workload {
        clients: 4,
        txns_per_client: 25,
        ops_min: 1,
        ops_max: 3,
        keys_per_handler: 64,
        hot_key_fraction,
        write_fraction: 0.7,
        rmw_fraction: 0.5,
        channel_mix: 0.0,
        think_time: 1,
        commit_retries: 2,
        retry_delay: 1,
        pinned: false,
        sequential_keys: false,
    }
}

/// The `i`-th scenario of the seeded verification corpus: at most five
/// handlers and at most 500 transactions each.
pub fn corpus_scenario(i: u32) -> Scenario {
    const TOPOLOGIES: [&[u32]; 7] = [&[1], &[2], &[3], &[2, 2], &[5], &[1, 2], &[2, 1, 2]];
    let topology = TOPOLOGIES[i as usize % TOPOLOGIES.len()];
    let mut s = Scenario::with_topology(topology, 1000 + i as u64);
    s.duration = 100_000;
    s.workload = Workload {
        clients: 2 + (i % 5) as i64,
        txns_per_client: 10 + ((i * 7) % 50) as i64,
        ops_min: 1,
        ops_max: 1 + (i % 4) as i64,
        keys_per_handler: [2, 4, 8, 16][(i % 4) as usize],
        hot_key_fraction: [0.0, 0.3, 0.6][(i % 3) as usize],
        write_fraction: 0.6,
        rmw_fraction: 0.4,
        channel_mix: if i.is_multiple_of(2) { 0.25 } else { 0.0 },
        think_time: (i % 3) as i64,
        commit_retries: 2,
        retry_delay: 1,
        pinned: i.is_multiple_of(6),
        sequential_keys: false,
    };
    s.policy = Policy {
        queue_limit: [4, 8, 64][(i % 3) as usize],
        batch_cap: if i.is_multiple_of(5) { Some(2) } else { None },
        drain_period: 1 + (i % 3) as i64,
        latency: 1,
    };
    if i % 4 == 1 {
        s.faults.push(Fault { agent: "A0".into(), from: 10, until: 30 });
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[topology]
groups = [1]

[workload]
clients = 1
txns_per_client = 1
"#;

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        let v = s.validate().unwrap();
        assert_eq!(v.seed, 3);
        assert_eq!(v.queue_limit, 64);
        assert_eq!(v.batch_cap, 64);
        assert_eq!(v.topology.handler_count(), 1);
    }

    #[test]
    fn negative_queue_limit_names_the_field() {
        let text = format!("{MINIMAL}\n[policy]\nqueue_limit = -1\n");
        let err = Scenario::from_toml(&text).unwrap_err();
        assert_eq!(err.field, "policy.queue_limit");
        assert!(err.to_string().contains("policy.queue_limit"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{MINIMAL}\n[policy]\nqueue_limt = 3\n");
        let err = Scenario::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("queue_limt"), "{err}");
        assert!(Scenario::from_toml("seed = 1\nbogus = 2\n[topology]\ngroups=[1]\n").is_err());
    }

    #[test]
    fn faults_must_name_a_child() {
        let s = Scenario::with_topology(&[2], 0);
        assert!(s.clone().inject_fault("A1".parse().unwrap(), 0, 5).is_ok());
        let err = s.clone().inject_fault("A7".parse().unwrap(), 0, 5).unwrap_err();
        assert_eq!(err.field, "faults[0].agent");
        assert!(s.inject_fault(AgentId::Root, 0, 5).is_err());
    }

    #[test]
    fn scenarios_survive_toml_round_trip() {
        for s in [corpus_scenario(5), Scenario::burst(100, 8, 50), Scenario::saturation(&[4, 2], 100)] {
            assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
        }
    }

    #[test]
    fn corpus_respects_its_bounds() {
        for i in 0..50 {
            let v = corpus_scenario(i).validate().unwrap();
            assert!(v.topology.handler_count() <= 5);
            assert!(v.workload.clients * v.workload.txns_per_client <= 500);
        }
    }
}
