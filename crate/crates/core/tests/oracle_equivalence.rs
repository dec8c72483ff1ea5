//! Committed state must match a sequential executor fed only the driving
//! process's predictions that were never cancelled.

use std::collections::{BTreeMap, BTreeSet};

use avnmp::engine::{run, Event, MessageId, Scenario, Sign, Time, VirtualMessage};

fn surviving_dp_sends(events: &[Event]) -> Vec<VirtualMessage> {
    let mut sent = Vec::new();
    let mut cancelled = BTreeSet::<MessageId>::new();
    for e in events {
        if let Event::Send { msg, .. } = e {
            if msg.src != 0 {
                continue;
            }
            match msg.sign {
                Sign::Positive => sent.push(*msg),
                Sign::Anti => {
                    cancelled.insert(msg.id);
                }
            }
        }
    }
    sent.retain(|m| !cancelled.contains(&m.id));
    sent
}

/// Each process applies the identity model in timestamp order and forwards
/// one latency later; a later message at the same timestamp overwrites.
fn sequential(
    inputs: &[VirtualMessage],
    lps: usize,
    latency: Time,
    until: Time,
) -> Vec<Vec<(Time, f64)>> {
    let mut sorted = inputs.to_vec();
    sorted.sort_by_key(|m| (m.recv_ts, m.src, m.id));
    let mut stage: BTreeMap<Time, f64> = BTreeMap::new();
    for m in &sorted {
        stage.insert(m.recv_ts, m.value);
    }
    let mut out = Vec::new();
    for _ in 0..lps {
        out.push(
            stage
                .iter()
                .filter(|(t, _)| **t <= until)
                .map(|(t, v)| (*t, *v))
                .collect(),
        );
        stage = stage.into_iter().map(|(t, v)| (t + latency, v)).collect();
    }
    out
}

#[test]
fn committed_state_matches_sequential_executor() {
    for seed in 0..20u64 {
        let s = Scenario::with_overrides(
            "",
            &["topology.nodes=4".into(), format!("seed.value={seed}")],
        )
        .unwrap();
        let trace = run(&s).unwrap();
        assert!(
            trace.counters.rollbacks > 0,
            "seed {seed} never rolled back"
        );
        let inputs = surviving_dp_sends(&trace.events);
        let want = sequential(
            &inputs,
            s.lp_count() as usize,
            s.topology.latency,
            s.engine.duration - 1,
        );
        assert_eq!(trace.committed, want, "seed {seed}");
    }
}
