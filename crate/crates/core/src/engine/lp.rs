use std::collections::{BTreeMap, BTreeSet};

use super::{
    EngineError, EventKey, Identity, MessageId, Model, ProcessId, Sign, StateEntry, Time, Verdict,
    VirtualMessage,
};

/// What a logical process did, in order, since the journal was last taken.
#[derive(Debug, Clone, PartialEq)]
pub enum LpRecord {
    Processed {
        key: EventKey,
        value: f64,
        cost: f64,
    },
    Annihilated {
        id: MessageId,
        ts: Time,
    },
    RolledBack {
        to: Time,
        undone: usize,
    },
    Committed {
        lvt: Time,
        value: f64,
    },
}

#[derive(Debug, Clone)]
struct Processed {
    msg: VirtualMessage,
    prev_lvt: Time,
    prev_entry: Option<StateEntry>,
    sends: Vec<MessageId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub verdict: Verdict,
    pub predicted: Option<f64>,
    pub antis: Vec<VirtualMessage>,
}

#[derive(Debug)]
pub struct LogicalProcess {
    id: ProcessId,
    downstream: Option<ProcessId>,
    latency: Time,
    lookahead: Time,
    step: Time,
    tolerance: f64,
    cost_base: f64,
    model: Box<dyn Model>,
    lvt: Time,
    state: BTreeMap<Time, StateEntry>,
    input: BTreeMap<EventKey, VirtualMessage>,
    early_antis: BTreeSet<MessageId>,
    processed: Vec<Processed>,
    saved_sends: BTreeMap<MessageId, VirtualMessage>,
    committed_through: Option<Time>,
    committed_log: Vec<(Time, f64)>,
    next_seq: u64,
    rollbacks: u64,
    journal: Vec<LpRecord>,
}

impl LogicalProcess {
    /// `lookahead` bounds how far past wallclock inputs are processed;
    /// `step` is the spacing of predictions, used for the nearest-entry
    /// query and fossil collection.
    pub fn new(
        id: ProcessId,
        downstream: Option<ProcessId>,
        latency: Time,
        lookahead: Time,
        step: Time,
        tolerance: f64,
    ) -> Self {
        Self {
            id,
            downstream,
            latency,
            lookahead,
            step,
            tolerance,
            cost_base: 1.0,
            model: Box::new(Identity),
            lvt: 0,
            state: BTreeMap::new(),
            input: BTreeMap::new(),
            early_antis: BTreeSet::new(),
            processed: Vec::new(),
            saved_sends: BTreeMap::new(),
            committed_through: None,
            committed_log: Vec::new(),
            next_seq: 0,
            rollbacks: 0,
            journal: Vec::new(),
        }
    }

    pub fn with_model(mut self, model: Box<dyn Model>) -> Self {
        self.model = model;
        self
    }

    pub fn with_cost_base(mut self, base: f64) -> Self {
        self.cost_base = base;
        self
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn lvt(&self) -> Time {
        self.lvt
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn set_tolerance(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
    }

    pub fn rollbacks(&self) -> u64 {
        self.rollbacks
    }

    pub fn state_queue(&self) -> impl Iterator<Item = &StateEntry> {
        self.state.values()
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    pub fn pending_antis(&self) -> usize {
        self.early_antis.len()
    }

    /// Every entry committed so far, in commit order.
    pub fn committed_log(&self) -> &[(Time, f64)] {
        &self.committed_log
    }

    /// Items held for possible rollback: state entries, saved sends and
    /// processed events.
    pub fn retained(&self) -> usize {
        self.state.len() + self.saved_sends.len() + self.processed.len()
    }

    pub fn take_journal(&mut self) -> Vec<LpRecord> {
        std::mem::take(&mut self.journal)
    }

    /// Receive one message. Returns everything sent as a consequence:
    /// forwarded predictions and anti-messages.
    pub fn process(
        &mut self,
        m: VirtualMessage,
        wallclock: Time,
    ) -> Result<Vec<VirtualMessage>, EngineError> {
        if m.dst != self.id {
            return Err(EngineError::Routing {
                expected: self.id,
                got: m.dst,
                id: m.id,
            });
        }
        match m.sign {
            Sign::Anti => self.receive_anti(m),
            Sign::Positive => {
                if self.early_antis.remove(&m.id) {
                    self.journal.push(LpRecord::Annihilated {
                        id: m.id,
                        ts: m.recv_ts,
                    });
                    return Ok(Vec::new());
                }
                let mut out = Vec::new();
                let key = m.key();
                if let Some(pos) = self.processed.iter().position(|p| p.msg.key() > key) {
                    // Straggler: undo everything that should have come after it.
                    let undone = self.processed.len() - pos;
                    out = self.undo_from(pos)?;
                    self.rollbacks += 1;
                    self.journal.push(LpRecord::RolledBack {
                        to: m.recv_ts,
                        undone,
                    });
                }
                self.input.insert(key, m);
                out.extend(self.drain(wallclock)?);
                Ok(out)
            }
        }
    }

    fn receive_anti(&mut self, m: VirtualMessage) -> Result<Vec<VirtualMessage>, EngineError> {
        if self.input.remove(&m.key()).is_some() {
            self.journal.push(LpRecord::Annihilated {
                id: m.id,
                ts: m.recv_ts,
            });
            return Ok(Vec::new());
        }
        let Some(pos) = self.processed.iter().position(|p| p.msg.id == m.id) else {
            self.early_antis.insert(m.id);
            return Ok(Vec::new());
        };
        let undone = self.processed.len() - pos;
        let antis = self.undo_from(pos)?;
        self.rollbacks += 1;
        self.journal.push(LpRecord::RolledBack {
            to: m.recv_ts,
            undone,
        });
        self.input.remove(&m.key());
        self.journal.push(LpRecord::Annihilated {
            id: m.id,
            ts: m.recv_ts,
        });
        Ok(antis)
    }

    /// Process held inputs whose timestamp is within the lookahead window.
    pub fn drain(&mut self, wallclock: Time) -> Result<Vec<VirtualMessage>, EngineError> {
        let mut out = Vec::new();
        while let Some(entry) = self.input.first_entry() {
            if entry.key().0 > wallclock + self.lookahead {
                break;
            }
            let m = entry.remove();
            out.extend(self.execute(m)?);
        }
        Ok(out)
    }

    fn execute(&mut self, m: VirtualMessage) -> Result<Option<VirtualMessage>, EngineError> {
        let ts = m.recv_ts;
        if let Some(c) = self.committed_through.filter(|&c| ts <= c) {
            return Err(EngineError::Causality {
                lp: self.id,
                to: ts,
                committed: c,
            });
        }
        let cost = self.cost_base + self.retained() as f64;
        let value = self.model.output(m.value);
        let prev_entry = self.state.insert(
            ts,
            StateEntry {
                lvt: ts,
                value,
                committed: false,
            },
        );
        let prev_lvt = self.lvt;
        self.lvt = ts;
        let mut sends = Vec::new();
        let forwarded = self.downstream.map(|dst| {
            let out = VirtualMessage {
                id: MessageId {
                    origin: self.id,
                    seq: self.next_seq,
                },
                src: self.id,
                dst,
                send_ts: ts,
                recv_ts: ts + self.latency,
                value,
                sign: Sign::Positive,
            };
            self.next_seq += 1;
            self.saved_sends.insert(out.id, out);
            sends.push(out.id);
            out
        });
        self.journal.push(LpRecord::Processed {
            key: m.key(),
            value,
            cost,
        });
        self.processed.push(Processed {
            msg: m,
            prev_lvt,
            prev_entry,
            sends,
        });
        Ok(forwarded)
    }

    /// Undo `processed[pos..]`, newest first, putting their inputs back in
    /// the input queue. Returns anti-messages for their sends.
    fn undo_from(&mut self, pos: usize) -> Result<Vec<VirtualMessage>, EngineError> {
        if let Some(c) = self.committed_through {
            if let Some(p) = self.processed[pos..].iter().find(|p| p.msg.recv_ts <= c) {
                return Err(EngineError::Causality {
                    lp: self.id,
                    to: p.msg.recv_ts,
                    committed: c,
                });
            }
        }
        let mut antis = Vec::new();
        for p in self.processed.drain(pos..).rev() {
            match p.prev_entry {
                Some(e) => self.state.insert(p.msg.recv_ts, e),
                None => self.state.remove(&p.msg.recv_ts),
            };
            for id in p.sends {
                // The anti-message replaces the saved copy.
                let saved = self
                    .saved_sends
                    .remove(&id)
                    .expect("sends are saved until fossil collected");
                antis.push(saved.anti());
            }
            self.lvt = p.prev_lvt;
            self.input.insert(p.msg.key(), p.msg);
        }
        antis.reverse();
        Ok(antis)
    }

    /// Return to `to_time`: undo every event after it and cancel its sends.
    pub fn rollback(&mut self, to_time: Time) -> Result<Vec<VirtualMessage>, EngineError> {
        if to_time >= self.lvt {
            return Err(EngineError::NotInPast {
                lp: self.id,
                to: to_time,
                lvt: self.lvt,
            });
        }
        if let Some(c) = self.committed_through.filter(|&c| to_time < c) {
            return Err(EngineError::Causality {
                lp: self.id,
                to: to_time,
                committed: c,
            });
        }
        let pos = self.processed.partition_point(|p| p.msg.recv_ts <= to_time);
        let undone = self.processed.len() - pos;
        let antis = self.undo_from(pos)?;
        self.lvt = to_time;
        self.rollbacks += 1;
        self.journal.push(LpRecord::RolledBack {
            to: to_time,
            undone,
        });
        Ok(antis)
    }

    /// The entry nearest `t` within half a step either side; the earlier
    /// entry wins a tie.
    pub fn query_prediction(&self, t: Time) -> Option<StateEntry> {
        let half = self.step / 2;
        self.state
            .range(t - half..=t + half)
            .map(|(_, e)| *e)
            .filter(|e| 2 * (e.lvt - t).abs() <= self.step)
            .min_by_key(|e| ((e.lvt - t).abs(), e.lvt))
    }

    /// Compare the real value at `wallclock` with the cached prediction.
    /// Out of tolerance (including no prediction at all) rolls back to
    /// `wallclock` when there is anything to undo.
    pub fn verify(&mut self, real: f64, wallclock: Time) -> Result<VerifyOutcome, EngineError> {
        let entry = self.query_prediction(wallclock);
        let predicted = entry.map(|e| e.value);
        let within = predicted.is_some_and(|p| (real - p).abs() <= self.tolerance);
        if within {
            let e = entry.expect("a prediction was found");
            if e.lvt <= wallclock {
                self.commit(e.lvt);
            }
            return Ok(VerifyOutcome {
                verdict: Verdict::InTolerance,
                predicted,
                antis: Vec::new(),
            });
        }
        let antis = if self.lvt > wallclock {
            self.rollback(wallclock)?
        } else {
            Vec::new()
        };
        Ok(VerifyOutcome {
            verdict: Verdict::OutOfTolerance,
            predicted,
            antis,
        })
    }

    /// Commit every entry at or before `wallclock`.
    pub fn commit(&mut self, wallclock: Time) {
        for e in self.state.range_mut(..=wallclock).map(|(_, e)| e) {
            if !e.committed {
                e.committed = true;
                self.committed_log.push((e.lvt, e.value));
                self.journal.push(LpRecord::Committed {
                    lvt: e.lvt,
                    value: e.value,
                });
                self.committed_through =
                    Some(self.committed_through.map_or(e.lvt, |c| c.max(e.lvt)));
            }
        }
    }

    /// Discard committed entries, saved sends and processed events older
    /// than `gvt - step`. Returns the number of state entries freed.
    pub fn fossil_collect(&mut self, gvt: Time) -> usize {
        let horizon = gvt - self.step;
        let before = self.state.len();
        let old: Vec<Time> = self
            .state
            .range(..horizon)
            .filter(|(_, e)| e.committed)
            .map(|(t, _)| *t)
            .collect();
        for t in old {
            self.state.remove(&t);
        }
        self.saved_sends.retain(|_, m| m.send_ts >= horizon);
        let cut = self.processed.partition_point(|p| p.msg.recv_ts < horizon);
        self.processed.drain(..cut);
        before - self.state.len()
    }
}
