// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use dataclock::index::Index;
use dataclock::sim::trace::ReadSource;
use dataclock::sim::{corpus_scenario, resolution, run, serial_oracle, write_trace, EventBody, RunOutput, Scenario};
use dataclock::snapshot_equal;
use dataclock::time::{AgentId, HandlerId};
use dataclock::verify::{check_fcfs, check_linear_extension, check_read_isolation, header, verify_trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CORPUS: u32 = 50;

fn corpus() -> Vec<(u32, RunOutput)> {
    (0..CORPUS).map(|i| (i, run(&corpus_scenario(i)).expect("corpus scenarios run"))).collect()
}

fn count(out: &RunOutput, kind: &str) -> usize {
    out.trace.iter().filter(|e| e.body.kind() == kind).count()
}

fn granularity() -> Result<String, String> {
    let mut notes = Vec::new();
    for groups in [&[10, 3][..], &[2], &[4, 2], &[3, 3, 3]] {
        let started = Instant::now();
        let r = resolution(groups, 1000).map_err(|e| e.to_string())?.ok_or("no root ticks")?;
        let elapsed = started.elapsed();
        let predicted: u64 = groups.iter().map(|&g| g as u64).product();
        let within = r.mean >= predicted as f64 / 2.0 && r.mean <= predicted as f64 * 2.0;
        notes.push(format!("{groups:?} measured {:.2} vs {predicted} in {:.2}s", r.mean, elapsed.as_secs_f64()));
        if !within || elapsed >= Duration::from_secs(10) {
            return Err(notes.join("; "));
        }
    }
    Ok(notes.join("; "))
}

fn fcfs(runs: &[(u32, RunOutput)]) -> Result<String, String> {
    for (i, out) in runs {
        check_fcfs(&out.trace).map_err(|v| format!("corpus {i}: {v}"))?;
    }
    let pair = run(&Scenario::hot_key_pair()).map_err(|e| e.to_string())?;
    let (acc, rej) = (count(&pair, "Accept"), count(&pair, "Reject"));
    if (acc, rej) != (1, 1) {
        return Err(format!("hot-key pair: {acc} accepted, {rej} rejected"));
    }
    let rejections: usize = runs.iter().map(|(_, o)| count(o, "Reject")).sum();
    Ok(format!("{CORPUS} scenarios, {rejections} rejections, no double claims; hot-key pair 1 accepted, 1 rejected"))
}

fn linear_extension(runs: &[(u32, RunOutput)]) -> Result<String, String> {
    for (i, out) in runs {
        check_linear_extension(&out.trace).map_err(|v| format!("corpus {i}: {v}"))?;
        verify_trace(&out.trace).map_err(|e| format!("corpus {i}: {e}"))?;
    }
    Ok(format!("{CORPUS} scenarios verify"))
}

fn oracle(runs: &[(u32, RunOutput)]) -> Result<String, String> {
    let mut heads = 0;
    for (i, out) in runs {
        let state = serial_oracle(&out.trace).map_err(|e| format!("corpus {i}: {e}"))?;
        let cone = out.index.past_cone(out.index.published_through()).map_err(|e| e.to_string())?;
        let cone: BTreeMap<_, _> = cone.heads.into_iter().map(|(k, (_, v))| (k, v)).collect();
        if cone != state {
            return Err(format!("corpus {i}: oracle and past cone differ"));
        }
        heads += cone.len();
    }
    Ok(format!("{heads} chain heads equal across {CORPUS} scenarios"))
}

fn snapshots(runs: &[(u32, RunOutput)]) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let observer = |out: &RunOutput| {
        let mut index = Index::new(header(&out.trace).unwrap().topology.id());
        for entry in &out.published_log {
            index.register_batch(entry).unwrap();
        }
        index
    };
    let mut straddles = 0;
    for _ in 0..200 {
        let (i, out) = &runs[rng.gen_range(0..runs.len())];
        let (a, b) = (observer(out), observer(out));
        let last = a.published_through();
        let as_of = rng.gen_range(0..=last);
        if !snapshot_equal(&a.past_cone(as_of).unwrap(), &b.past_cone(as_of).unwrap()) {
            return Err(format!("corpus {i}: observers disagree at t_R={as_of}"));
        }
        for entry in &out.published_log {
            let t = entry.stamp;
            if snapshot_equal(&a.past_cone(t - 1).unwrap(), &b.past_cone(t).unwrap()) {
                return Err(format!("corpus {i}: snapshots straddling t_R={t} compare equal"));
            }
            straddles += 1;
        }
    }
    Ok(format!("200 paired queries equal; {straddles} straddling pairs differ"))
}

fn read_isolation(runs: &[(u32, RunOutput)]) -> Result<String, String> {
    let mut published_reads = 0;
    for (i, out) in runs {
        let topo = header(&out.trace).map_err(|e| e.to_string())?.topology;
        check_read_isolation(&topo, &out.trace).map_err(|v| format!("corpus {i}: {v}"))?;
        published_reads += out.trace.iter().filter(|e| matches!(e.body, EventBody::Read { source: ReadSource::Published, .. })).count();
    }
    if published_reads == 0 {
        return Err("corpus performed no reads of published data".into());
    }
    Ok(format!("0 violations over {published_reads} reads of published data"))
}

fn rate_limiting() -> Result<String, String> {
    let out = run(&Scenario::burst(100, 8, 50)).map_err(|e| e.to_string())?;
    let requests = count(&out, "CommitRequest");
    let refused = count(&out, "Refused");
    let max_q = out.metrics.max_queue[&AgentId::Handler(HandlerId(0)).to_string()];
    if requests != 100 || refused < 1 || max_q != 8 {
        return Err(format!("{requests} requests, {refused} refused, max |Q| = {max_q}"));
    }
    Ok(format!("{requests} requests, {refused} refused, max |Q| = {max_q}"))
}

fn fault_tolerance() -> Result<String, String> {
    let mut base = Scenario::with_topology(&[3], 17);
    base.workload.clients = 3;
    base.workload.txns_per_client = 20;
    base.workload.write_fraction = 1.0;
    base.workload.rmw_fraction = 0.0;
    base.workload.pinned = true;
    base.workload.sequential_keys = true;
    base.workload.keys_per_handler = 1000;
    // The root's ring has three children at one visit per tick: one drain
    // cycle is three ticks.
    let down = AgentId::Handler(HandlerId(1));
    let faulted = base.clone().inject_fault(down, 6, 12).map_err(|e| e.to_string())?;
    let clean = run(&base).map_err(|e| e.to_string())?;
    let hurt = run(&faulted).map_err(|e| e.to_string())?;
    let skips = hurt.trace.iter().filter(|e| matches!(e.body, EventBody::Skip { child } if child == down)).count();
    if skips < 2 {
        return Err(format!("{skips} skips"));
    }
    for out in [&clean, &hurt] {
        if count(out, "Refused") + count(out, "Reject") > 0 {
            return Err("workload saw refusals or rejections".into());
        }
    }
    verify_trace(&hurt.trace).map_err(|e| e.to_string())?;
    let (a, b) = (serial_oracle(&clean.trace).map_err(|e| e.to_string())?, serial_oracle(&hurt.trace).map_err(|e| e.to_string())?);
    if a != b {
        return Err("terminal state differs from the fault-free run".into());
    }
    Ok(format!("{skips} skips of {down}; order preserved; terminal state of {} chains matches", a.len()))
}

fn determinism() -> Result<String, String> {
    for i in 0..CORPUS {
        let s = corpus_scenario(i);
        let bytes = |out: RunOutput| {
            let mut buf = Vec::new();
            write_trace(&out.trace, &mut buf).unwrap();
            buf
        };
        let a = bytes(run(&s).map_err(|e| e.to_string())?);
        let b = bytes(run(&s).map_err(|e| e.to_string())?);
        if a != b {
            return Err(format!("corpus {i}: traces differ"));
        }
    }
    Ok(format!("{CORPUS} scenarios byte-identical"))
}

#[test]
fn acceptance() {
    let runs = corpus();
    let results = [
        ("1 granularity scaling", granularity()),
        ("2 FCFS exclusivity", fcfs(&runs)),
        ("3 linear extension", linear_extension(&runs)),
        ("4 oracle equivalence", oracle(&runs)),
        ("5 snapshot sameness", snapshots(&runs)),
        ("6 read isolation", read_isolation(&runs)),
        ("7 rate limiting", rate_limiting()),
        ("8 ring fault tolerance", fault_tolerance()),
        ("9 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(note) => println!("PASS criterion {name}: {note}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
