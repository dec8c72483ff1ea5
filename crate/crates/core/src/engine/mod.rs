//! Optimistic prediction engine.
//!
//! A driving process watches the real load at the network edge and sends
//! virtual messages that predict it up to a lookahead window ahead of
//! wallclock. Logical processes along a chain cache those predictions in
//! state queues, check them against the real load as wallclock catches up,
//! and roll back with anti-messages when a prediction falls outside the
//! tolerance.
//!
//! Virtual time is counted in whole seconds. Each wallclock tick is one
//! second; messages between processes take `latency` seconds of virtual
//! time but are delivered within the tick that sent them.

mod dp;
mod lp;
mod scenario;
mod sim;
mod trace;
mod workload;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dp::DrivingProcess;
pub use lp::{LogicalProcess, LpRecord, VerifyOutcome};
pub use scenario::{
    apply_override, EngineConfig, HypothesisConfig, Scenario, ScenarioError, SeedConfig,
    ToleranceConfig, TopologyConfig, WindowConfig,
};
pub use sim::{run, Engine, RunError};
pub use trace::{Counters, Event, EventRecord, EventTrace, TraceParams};
pub use workload::Workload;

/// Seconds of virtual or wall time.
pub type Time = i64;
pub type ProcessId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageId {
    pub origin: ProcessId,
    pub seq: u64,
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.origin, self.seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    // Declared first so a positive sorts ahead of its anti.
    Positive,
    Anti,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirtualMessage {
    pub id: MessageId,
    pub src: ProcessId,
    pub dst: ProcessId,
    pub send_ts: Time,
    pub recv_ts: Time,
    pub value: f64,
    pub sign: Sign,
}

/// Receive-side ordering: timestamp, then sender, then message id.
pub type EventKey = (Time, ProcessId, MessageId);

impl VirtualMessage {
    pub fn anti(&self) -> Self {
        Self {
            sign: Sign::Anti,
            ..*self
        }
    }

    pub fn key(&self) -> EventKey {
        (self.recv_ts, self.src, self.id)
    }

    /// Global delivery order. A positive precedes its own anti.
    pub fn delivery_key(&self) -> (Time, ProcessId, MessageId, Sign) {
        (self.recv_ts, self.src, self.id, self.sign)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateEntry {
    pub lvt: Time,
    pub value: f64,
    pub committed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    InTolerance,
    OutOfTolerance,
}

/// Input-to-output transform of a logical process.
pub trait Model: fmt::Debug + Send {
    fn output(&self, input: f64) -> f64;
}

/// Output load equals input load.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Model for Identity {
    fn output(&self, input: f64) -> f64 {
        input
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("message {id} for process {got} delivered to process {expected}")]
    Routing {
        expected: ProcessId,
        got: ProcessId,
        id: MessageId,
    },
    #[error("process {lp}: rollback to {to} would undo state committed through {committed}")]
    Causality {
        lp: ProcessId,
        to: Time,
        committed: Time,
    },
    #[error("process {lp}: rollback target {to} is not before lvt {lvt}")]
    NotInPast { lp: ProcessId, to: Time, lvt: Time },
    #[error("sample time {sample} does not match wallclock {wallclock}")]
    SampleTime { sample: f64, wallclock: Time },
    #[error("prediction failed: {0}")]
    Prediction(#[from] crate::mdl::MdlError),
}
