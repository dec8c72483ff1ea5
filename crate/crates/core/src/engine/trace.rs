use std::io::{self, Write};

use serde::Serialize;

use super::{EventKey, MessageId, ProcessId, Sign, Time, Verdict, VirtualMessage};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceParams {
    pub duration: Time,
    pub lookahead: Time,
    pub step: Time,
    pub latency: Time,
    pub lp_count: u32,
    pub metric_node: ProcessId,
    pub report_interval: Time,
    pub tolerance_start: f64,
    pub fossil_collection: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// A message left its sender; anti-messages carry `Sign::Anti`.
    Send {
        tick: Time,
        msg: VirtualMessage,
    },
    Process {
        tick: Time,
        lp: ProcessId,
        key: EventKey,
        value: f64,
        cost: f64,
    },
    Annihilate {
        tick: Time,
        lp: ProcessId,
        id: MessageId,
        ts: Time,
    },
    Rollback {
        tick: Time,
        lp: ProcessId,
        to: Time,
        undone: usize,
    },
    Verify {
        tick: Time,
        lp: ProcessId,
        actual: f64,
        predicted: Option<f64>,
        verdict: Verdict,
    },
    /// The driving process cancelled its future predictions.
    Reset {
        tick: Time,
        dp: ProcessId,
    },
    Commit {
        tick: Time,
        lp: ProcessId,
        lvt: Time,
        value: f64,
    },
    Tighten {
        tick: Time,
        tolerance: f64,
    },
    /// End-of-tick local virtual time of one process.
    Snapshot {
        tick: Time,
        process: ProcessId,
        lvt: Time,
    },
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub tick: Time,
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub src: Option<ProcessId>,
    pub dst: Option<ProcessId>,
    pub ts: Option<Time>,
    pub value: Option<f64>,
    pub sign: Option<Sign>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub undone: Option<usize>,
}

impl EventRecord {
    fn new(tick: Time, kind: &'static str) -> Self {
        Self {
            tick,
            kind,
            src: None,
            dst: None,
            ts: None,
            value: None,
            sign: None,
            id: None,
            predicted: None,
            verdict: None,
            cost: None,
            undone: None,
        }
    }
}

impl Event {
    pub fn tick(&self) -> Time {
        match *self {
            Event::Send { tick, .. }
            | Event::Process { tick, .. }
            | Event::Annihilate { tick, .. }
            | Event::Rollback { tick, .. }
            | Event::Verify { tick, .. }
            | Event::Reset { tick, .. }
            | Event::Commit { tick, .. }
            | Event::Tighten { tick, .. }
            | Event::Snapshot { tick, .. } => tick,
        }
    }

    pub fn to_record(&self) -> EventRecord {
        match *self {
            Event::Send { tick, msg } => EventRecord {
                src: Some(msg.src),
                dst: Some(msg.dst),
                ts: Some(msg.recv_ts),
                value: Some(msg.value),
                sign: Some(msg.sign),
                id: Some(msg.id.to_string()),
                ..EventRecord::new(
                    tick,
                    if msg.sign == Sign::Anti {
                        "anti"
                    } else {
                        "send"
                    },
                )
            },
            Event::Process {
                tick,
                lp,
                key: (ts, src, id),
                value,
                cost,
            } => EventRecord {
                src: Some(src),
                dst: Some(lp),
                ts: Some(ts),
                value: Some(value),
                sign: Some(Sign::Positive),
                id: Some(id.to_string()),
                cost: Some(cost),
                ..EventRecord::new(tick, "process")
            },
            Event::Annihilate { tick, lp, id, ts } => EventRecord {
                src: Some(id.origin),
                dst: Some(lp),
                ts: Some(ts),
                sign: Some(Sign::Anti),
                id: Some(id.to_string()),
                ..EventRecord::new(tick, "annihilate")
            },
            Event::Rollback {
                tick,
                lp,
                to,
                undone,
            } => EventRecord {
                dst: Some(lp),
                ts: Some(to),
                undone: Some(undone),
                ..EventRecord::new(tick, "rollback")
            },
            Event::Verify {
                tick,
                lp,
                actual,
                predicted,
                verdict,
            } => EventRecord {
                dst: Some(lp),
                ts: Some(tick),
                value: Some(actual),
                predicted,
                verdict: Some(verdict),
                ..EventRecord::new(tick, "verify")
            },
            Event::Reset { tick, dp } => EventRecord {
                src: Some(dp),
                ts: Some(tick),
                ..EventRecord::new(tick, "reset")
            },
            Event::Commit {
                tick,
                lp,
                lvt,
                value,
            } => EventRecord {
                dst: Some(lp),
                ts: Some(lvt),
                value: Some(value),
                ..EventRecord::new(tick, "commit")
            },
            Event::Tighten { tick, tolerance } => EventRecord {
                value: Some(tolerance),
                ..EventRecord::new(tick, "tighten")
            },
            Event::Snapshot { tick, process, lvt } => EventRecord {
                src: Some(process),
                ts: Some(lvt),
                ..EventRecord::new(tick, "snapshot")
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Counters {
    pub virtual_messages: u64,
    pub anti_messages: u64,
    pub rollbacks: u64,
    pub events_processed: u64,
    pub resets: u64,
    pub fossil_freed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub params: TraceParams,
    pub events: Vec<Event>,
    pub counters: Counters,
    /// Committed `(lvt, value)` entries per logical process, by process
    /// id starting at 1.
    pub committed: Vec<Vec<(Time, f64)>>,
}

impl EventTrace {
    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, &e.to_record())?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}
