use std::cmp::Reverse;
use std::collections::BinaryHeap;

use log::debug;

use super::trace::Counters;
use super::{
    DrivingProcess, EngineError, Event, EventTrace, LogicalProcess, LpRecord, ProcessId, Scenario,
    ScenarioError, Sign, Time, TraceParams, Verdict, VirtualMessage,
};
use crate::mdl::Hypothesis;
use crate::series::TimedSample;

const DP_ID: ProcessId = 0;

/// Heap entry ordered by delivery key.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending(VirtualMessage);

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.delivery_key().cmp(&other.0.delivery_key())
    }
}

/// A driving process feeding a chain of logical processes.
#[derive(Debug)]
pub struct Engine {
    params: TraceParams,
    tolerance_factor: f64,
    tolerance_interval: Time,
    workload: Vec<f64>,
    dp: DrivingProcess,
    lps: Vec<LogicalProcess>,
    wallclock: Time,
    tolerance: f64,
    in_flight: BinaryHeap<Reverse<Pending>>,
    events: Vec<Event>,
    counters: Counters,
}

impl Engine {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let workload = scenario.workload_values()?;
        let w = &scenario.window;
        let hypothesis = Hypothesis::linear(scenario.hypothesis.window, w.step as f64)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let n = scenario.lp_count();
        let latency = scenario.topology.latency;
        let dp = DrivingProcess::new(
            DP_ID,
            1,
            hypothesis,
            w.step,
            w.lookahead,
            scenario.engine.ratio,
            scenario.rate_cap(),
        );
        let lps = (1..=n)
            .map(|id| {
                let next = (id < n).then_some(id + 1);
                LogicalProcess::new(
                    id,
                    next,
                    latency,
                    w.lookahead,
                    w.step,
                    scenario.tolerance.start,
                )
                .with_cost_base(scenario.engine.cost_base)
            })
            .collect();
        Ok(Self {
            params: TraceParams {
                duration: scenario.engine.duration,
                lookahead: w.lookahead,
                step: w.step,
                latency,
                lp_count: n,
                metric_node: scenario.metric_node(),
                report_interval: scenario.engine.report_interval,
                tolerance_start: scenario.tolerance.start,
                fossil_collection: scenario.engine.fossil_collection,
            },
            tolerance_factor: scenario.tolerance.factor,
            tolerance_interval: scenario.tolerance.interval,
            workload,
            dp,
            lps,
            wallclock: 0,
            tolerance: scenario.tolerance.start,
            in_flight: BinaryHeap::new(),
            events: Vec::new(),
            counters: Counters::default(),
        })
    }

    pub fn wallclock(&self) -> Time {
        self.wallclock
    }

    pub fn lp(&self, id: ProcessId) -> Option<&LogicalProcess> {
        self.lps.get((id as usize).checked_sub(1)?)
    }

    pub fn driving_process(&self) -> &DrivingProcess {
        &self.dp
    }

    pub fn is_finished(&self) -> bool {
        self.wallclock >= self.params.duration
    }

    fn send_all(&mut self, msgs: Vec<VirtualMessage>) {
        for m in msgs {
            match m.sign {
                Sign::Positive => self.counters.virtual_messages += 1,
                Sign::Anti => self.counters.anti_messages += 1,
            }
            self.events.push(Event::Send {
                tick: self.wallclock,
                msg: m,
            });
            self.in_flight.push(Reverse(Pending(m)));
        }
    }

    fn collect_journal(&mut self, index: usize) {
        let lp = &mut self.lps[index];
        let id = lp.id();
        let tick = self.wallclock;
        for r in lp.take_journal() {
            self.events.push(match r {
                LpRecord::Processed { key, value, cost } => {
                    self.counters.events_processed += 1;
                    Event::Process {
                        tick,
                        lp: id,
                        key,
                        value,
                        cost,
                    }
                }
                LpRecord::Annihilated { id: mid, ts } => Event::Annihilate {
                    tick,
                    lp: id,
                    id: mid,
                    ts,
                },
                LpRecord::RolledBack { to, undone } => {
                    self.counters.rollbacks += 1;
                    Event::Rollback {
                        tick,
                        lp: id,
                        to,
                        undone,
                    }
                }
                LpRecord::Committed { lvt, value } => Event::Commit {
                    tick,
                    lp: id,
                    lvt,
                    value,
                },
            });
        }
    }

    /// Deliver until nothing is in flight and no held input is due.
    fn settle(&mut self) -> Result<(), EngineError> {
        loop {
            while let Some(Reverse(Pending(m))) = self.in_flight.pop() {
                let index = m.dst as usize - 1;
                let out = self.lps[index].process(m, self.wallclock)?;
                self.collect_journal(index);
                self.send_all(out);
            }
            for index in 0..self.lps.len() {
                let out = self.lps[index].drain(self.wallclock)?;
                self.collect_journal(index);
                self.send_all(out);
            }
            if self.in_flight.is_empty() {
                return Ok(());
            }
        }
    }

    /// Real load at a logical process: the driving process's sample,
    /// delayed one latency per hop.
    fn real_value(&self, lp: ProcessId) -> Option<f64> {
        let t = self.wallclock - self.params.latency * (lp as Time - 1);
        usize::try_from(t)
            .ok()
            .and_then(|i| self.workload.get(i))
            .copied()
    }

    /// Advance one wallclock second.
    pub fn step(&mut self) -> Result<(), EngineError> {
        let wc = self.wallclock;
        if wc > 0 && wc % self.tolerance_interval == 0 {
            self.tolerance *= self.tolerance_factor;
            for lp in &mut self.lps {
                lp.set_tolerance(self.tolerance);
            }
            self.events.push(Event::Tighten {
                tick: wc,
                tolerance: self.tolerance,
            });
        }

        let sample = TimedSample::new(wc as f64, self.workload[wc as usize]);
        let out = self.dp.observe(wc, sample)?;
        self.send_all(out);
        self.settle()?;

        // Check every process against the same pre-rollback state.
        let mut outcomes = Vec::new();
        for index in 0..self.lps.len() {
            let id = self.lps[index].id();
            let Some(real) = self.real_value(id) else {
                continue;
            };
            let outcome = self.lps[index].verify(real, wc)?;
            self.collect_journal(index);
            self.events.push(Event::Verify {
                tick: wc,
                lp: id,
                actual: real,
                predicted: outcome.predicted,
                verdict: outcome.verdict,
            });
            outcomes.push(outcome);
        }
        if outcomes
            .iter()
            .any(|o| o.verdict == Verdict::OutOfTolerance)
        {
            for o in outcomes {
                self.send_all(o.antis);
            }
            let antis = self.dp.reset(wc);
            self.counters.resets += 1;
            self.events.push(Event::Reset {
                tick: wc,
                dp: DP_ID,
            });
            self.send_all(antis);
            self.settle()?;
        }

        for index in 0..self.lps.len() {
            self.lps[index].commit(wc);
            self.collect_journal(index);
        }
        if self.params.fossil_collection {
            self.fossil_collect();
        }
        self.events.push(Event::Snapshot {
            tick: wc,
            process: DP_ID,
            lvt: self.dp.lvt(),
        });
        for lp in &self.lps {
            self.events.push(Event::Snapshot {
                tick: wc,
                process: lp.id(),
                lvt: lp.lvt(),
            });
        }
        self.wallclock += 1;
        Ok(())
    }

    /// GVT is wallclock. Returns the state entries freed across processes.
    pub fn fossil_collect(&mut self) -> usize {
        let gvt = self.wallclock;
        self.dp.fossil_collect(gvt);
        let freed: usize = self.lps.iter_mut().map(|lp| lp.fossil_collect(gvt)).sum();
        self.counters.fossil_freed += freed as u64;
        freed
    }

    pub fn run_to_end(mut self) -> Result<EventTrace, EngineError> {
        while !self.is_finished() {
            self.step()?;
        }
        debug!(
            "finished at {} s: {} messages, {} anti, {} rollbacks",
            self.wallclock,
            self.counters.virtual_messages,
            self.counters.anti_messages,
            self.counters.rollbacks
        );
        Ok(EventTrace {
            params: self.params,
            events: self.events,
            counters: self.counters,
            committed: self
                .lps
                .iter()
                .map(|lp| lp.committed_log().to_vec())
                .collect(),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Run a scenario from tick 0 to its duration.
pub fn run(scenario: &Scenario) -> Result<EventTrace, RunError> {
    Ok(Engine::new(scenario)?.run_to_end()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(overrides: &[&str]) -> Scenario {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        Scenario::with_overrides("", &o).unwrap()
    }

    fn snapshots(trace: &EventTrace) -> impl Iterator<Item = (Time, ProcessId, Time)> + '_ {
        trace.events.iter().filter_map(|e| match *e {
            Event::Snapshot { tick, process, lvt } => Some((tick, process, lvt)),
            _ => None,
        })
    }

    #[test]
    fn same_seed_same_trace() {
        let s = scenario(&["engine.duration=400"]);
        let a = run(&s).unwrap();
        let b = run(&s).unwrap();
        assert_eq!(a, b);
        let mut ja = Vec::new();
        let mut jb = Vec::new();
        a.write_jsonl(&mut ja).unwrap();
        b.write_jsonl(&mut jb).unwrap();
        assert_eq!(ja, jb);
        let c = run(&scenario(&["engine.duration=400", "seed.value=1"])).unwrap();
        assert_ne!(a.events, c.events);
    }

    #[test]
    fn perfect_prediction_never_rolls_back() {
        let s = scenario(&[
            "tolerance.start=inf",
            "workload.kind=linear",
            "workload.intercept=100.0",
            "workload.slope=3.0",
            "engine.duration=600",
        ]);
        let trace = run(&s).unwrap();
        assert_eq!(trace.counters.rollbacks, 0);
        assert_eq!(trace.counters.resets, 0);
        assert_eq!(trace.counters.anti_messages, 0);
        let last = trace.params.metric_node;
        let peak = snapshots(&trace)
            .filter(|&(_, p, _)| p == last)
            .map(|(tick, _, lvt)| lvt - tick)
            .max()
            .unwrap();
        assert_eq!(peak, trace.params.lookahead);
    }

    #[test]
    fn reference_parameters_roll_back() {
        let trace = run(&scenario(&[])).unwrap();
        assert!(trace.counters.rollbacks > 0);
        assert!(trace.counters.anti_messages > 0);
    }

    #[test]
    fn every_process_stays_inside_the_window() {
        let trace = run(&scenario(&["engine.duration=900"])).unwrap();
        for (tick, _, lvt) in snapshots(&trace) {
            assert!(
                lvt - tick <= trace.params.lookahead,
                "lvt {lvt} at tick {tick}"
            );
        }
    }

    #[test]
    fn quiescent_after_every_tick() {
        let s = scenario(&["engine.duration=300", "tolerance.start=50.0"]);
        let mut engine = Engine::new(&s).unwrap();
        while !engine.is_finished() {
            engine.step().unwrap();
            assert!(engine.in_flight.is_empty());
            for id in 1..=s.lp_count() {
                assert_eq!(engine.lp(id).unwrap().pending_antis(), 0);
            }
        }
    }

    #[test]
    fn fossil_collection_bounds_retained_state() {
        let on = scenario(&["engine.duration=600"]);
        let off = scenario(&["engine.duration=600", "engine.fossil_collection=false"]);
        let mut a = Engine::new(&on).unwrap();
        let mut b = Engine::new(&off).unwrap();
        let mut last_off = 0;
        while !a.is_finished() {
            a.step().unwrap();
            b.step().unwrap();
            let r = b
                .lp(1)
                .unwrap()
                .state_queue()
                .filter(|e| e.committed)
                .count();
            assert!(r >= last_off);
            last_off = r;
        }
        assert!(a.lp(1).unwrap().retained() * 2 < b.lp(1).unwrap().retained());
    }

    #[test]
    fn fossil_frees_committed_steps() {
        // One process, exact predictions: after k committed steps at least
        // k - 1 entries are freed.
        let s = scenario(&[
            "topology.nodes=2",
            "tolerance.start=inf",
            "workload.kind=linear",
            "workload.intercept=0.0",
            "workload.slope=1.0",
            "engine.duration=400",
            "engine.fossil_collection=false",
        ]);
        let mut e = Engine::new(&s).unwrap();
        while !e.is_finished() {
            e.step().unwrap();
        }
        let committed = e
            .lp(1)
            .unwrap()
            .state_queue()
            .filter(|x| x.committed)
            .count();
        assert!(committed > 10);
        assert!(e.fossil_collect() >= committed - 1);
    }
}
