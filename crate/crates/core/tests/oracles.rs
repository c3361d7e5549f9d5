// Copyright 2026 The Dataclock Authors. Licensed under Apache-2.0.

//! Library results checked against brute-force reimplementations.

use std::collections::{BTreeMap, BTreeSet};

use dataclock::handler::ConflictKind;
use dataclock::index::ChainKey;
use dataclock::sim::{corpus_scenario, run, workload_contention, EventBody, Scenario};
use dataclock::time::{AgentId, ChannelId, ClientId, HandlerId, Key, TupleOrder};
use dataclock::{CommitOutcome, Handler, TimeTuple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn tuple_order_matches_root_log_order() {
    // Two handlers under one parent, 50 commits.
    let out = run(&Scenario::saturation(&[2, 1], 25)).unwrap();
    let topology = dataclock::GroupTopology::new(vec![2, 1]).unwrap().id();
    let log = out.index.log();
    assert_eq!(log.len(), 50);
    let tuples: Vec<TimeTuple> =
        log.iter().map(|r| TimeTuple::new(r.t_root, r.t_parent, r.t_handler, HandlerId(r.handler), topology)).collect();
    for i in 0..tuples.len() {
        for j in 0..tuples.len() {
            let expected = match i.cmp(&j) {
                std::cmp::Ordering::Less => TupleOrder::Before,
                std::cmp::Ordering::Equal => TupleOrder::Equal,
                std::cmp::Ordering::Greater => TupleOrder::After,
            };
            assert_eq!(tuples[i].compare(&tuples[j]).unwrap(), expected, "log positions {i} and {j}");
        }
    }
}

#[test]
fn handler_matches_brute_force_first_come_first_served() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut handler = Handler::new(HandlerId(0), 1 << 20);
    let mut open = Vec::new();
    let mut claimed: BTreeSet<String> = BTreeSet::new();
    let mut keys_of = BTreeMap::new();
    let (mut started, mut decided) = (0, 0);
    while decided < 1000 {
        let roll = rng.gen_range(0..10);
        if roll < 4 && started < 1000 {
            let txn = handler.begin_transaction(ClientId(0), 0).unwrap();
            let a = rng.gen_range(0..6);
            let b = (a + rng.gen_range(1..6)) % 6;
            let names = [format!("k{a}"), format!("k{b}")];
            for name in &names {
                handler.private_write(txn, Key::new(name.clone(), HandlerId(0)), ChannelId::latest(), 1).unwrap();
            }
            keys_of.insert(txn, names);
            open.push(txn);
            started += 1;
        } else if roll < 9 && !open.is_empty() {
            let txn = open.remove(rng.gen_range(0..open.len()));
            let names = &keys_of[&txn];
            let expect_accept = names.iter().all(|k| !claimed.contains(k));
            match handler.request_commit(txn).unwrap() {
                CommitOutcome::Accepted(records) => {
                    assert!(expect_accept, "{txn} accepted over a claimed key");
                    assert_eq!(records.len(), 2);
                    claimed.extend(names.iter().cloned());
                }
                CommitOutcome::Rejected(c) => {
                    assert!(!expect_accept, "{txn} rejected without a claim");
                    assert_eq!(c.kind, ConflictKind::WriteWrite);
                    assert!(claimed.contains(&c.key.name));
                }
                CommitOutcome::Refused => panic!("queue is unbounded here"),
            }
            decided += 1;
        } else {
            handler.drain_queue(usize::MAX).unwrap();
            claimed.clear();
        }
    }
}

#[test]
fn latest_matches_a_linear_scan_of_the_root_log() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in [1, 5, 10, 14, 21] {
        let out = run(&corpus_scenario(i)).unwrap();
        let flat: Vec<(u64, &dataclock::CommitRecord)> =
            out.published_log.iter().flat_map(|e| e.flatten().into_iter().map(move |(r, _)| (e.stamp, r))).collect();
        let chains: Vec<ChainKey> =
            flat.iter().map(|(_, r)| (r.key.clone(), r.channel.clone())).collect::<BTreeSet<_>>().into_iter().collect();
        let last = out.index.published_through();
        for _ in 0..200 {
            let (key, channel) = &chains[rng.gen_range(0..chains.len())];
            let as_of = rng.gen_range(0..=last);
            let scan =
                flat.iter().rev().find(|(t, r)| *t <= as_of && &r.key == key && &r.channel == channel).map(|(_, r)| (r.version, r.value));
            assert_eq!(out.index.latest(key, channel, as_of), scan);
        }
    }
}

#[test]
fn history_is_the_emission_order_of_each_chain() {
    let out = run(&corpus_scenario(17)).unwrap();
    let mut emitted: BTreeMap<ChainKey, Vec<(u64, i64)>> = BTreeMap::new();
    for e in &out.trace {
        if let EventBody::Enqueue { record, .. } = &e.body {
            emitted.entry((record.key.clone(), record.channel.clone())).or_default().push((record.version, record.value));
        }
    }
    assert!(!emitted.is_empty());
    for ((key, channel), versions) in &emitted {
        let history = out.index.history(key, channel);
        assert_eq!(history.iter().map(|(v, x, _)| (*v, *x)).collect::<Vec<_>>(), *versions);
        for pair in history.windows(2) {
            assert_eq!(pair[0].2.compare(&pair[1].2).unwrap(), TupleOrder::Before);
        }
    }
    assert_eq!(out.index.chains().count(), emitted.len());
}

#[test]
fn root_visits_children_in_ring_order() {
    let out = run(&Scenario::saturation(&[3], 30)).unwrap();
    let visited: Vec<AgentId> = out
        .trace
        .iter()
        .filter(|e| e.agent == AgentId::Root)
        .filter_map(|e| match e.body {
            EventBody::Drain { child, .. } | EventBody::Skip { child } => Some(child),
            _ => None,
        })
        .collect();
    assert!(visited.len() >= 9);
    for (i, child) in visited.iter().enumerate() {
        assert_eq!(*child, AgentId::Handler(HandlerId(i as u32 % 3)));
    }
}

#[test]
fn rejections_grow_with_hot_key_fraction() {
    let rate = |fraction: f64| {
        let (mut rejected, mut begun) = (0, 0);
        for seed in 0..10 {
            let mut s = Scenario::with_topology(&[2], seed);
            s.workload = workload_contention(fraction);
            let m = run(&s).unwrap().metrics;
            rejected += m.rejected;
            begun += m.begun;
        }
        rejected as f64 / begun as f64
    };
    let rates = [rate(0.0), rate(0.5), rate(1.0)];
    assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
}

#[test]
fn disjoint_keys_in_separate_intervals_never_conflict() {
    let mut s = Scenario::with_topology(&[2], 4);
    s.workload = workload_contention(0.0);
    s.workload.pinned = true;
    s.workload.sequential_keys = true;
    s.workload.keys_per_handler = 10_000;
    s.workload.write_fraction = 1.0;
    s.workload.rmw_fraction = 0.0;
    assert_eq!(run(&s).unwrap().metrics.rejected, 0);
}
