use std::collections::BTreeMap;

use super::{EngineError, MessageId, ProcessId, Sign, Time, VirtualMessage};
use crate::mdl::{predict_at, Hypothesis};
use crate::series::TimedSample;

/// Edge process that turns observed load into virtual messages.
#[derive(Debug, Clone)]
pub struct DrivingProcess {
    id: ProcessId,
    dst: ProcessId,
    hypothesis: Hypothesis,
    step: Time,
    lookahead: Time,
    ratio: f64,
    rate_cap: usize,
    history: Vec<TimedSample>,
    lvt: Time,
    credit: f64,
    next_seq: u64,
    sent: BTreeMap<MessageId, VirtualMessage>,
    reprime: bool,
}

impl DrivingProcess {
    /// `ratio` virtual messages are earned per observation; at most
    /// `rate_cap` go out in one tick.
    pub fn new(
        id: ProcessId,
        dst: ProcessId,
        hypothesis: Hypothesis,
        step: Time,
        lookahead: Time,
        ratio: f64,
        rate_cap: usize,
    ) -> Self {
        Self {
            id,
            dst,
            hypothesis,
            step,
            lookahead,
            ratio,
            rate_cap,
            history: Vec::new(),
            lvt: 0,
            credit: 0.0,
            next_seq: 0,
            sent: BTreeMap::new(),
            reprime: true,
        }
    }

    /// Start from an existing history, with lvt at its last sample and no
    /// priming message pending.
    pub fn with_history(mut self, history: Vec<TimedSample>) -> Self {
        if let Some(last) = history.last() {
            self.lvt = last.t.floor() as Time;
        }
        self.history = history;
        self.reprime = false;
        self
    }

    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn lvt(&self) -> Time {
        self.lvt
    }

    /// Messages sent and not yet cancelled or fossil collected.
    pub fn outstanding(&self) -> usize {
        self.sent.len()
    }

    fn send(&mut self, send_ts: Time, recv_ts: Time, value: f64) -> VirtualMessage {
        let m = VirtualMessage {
            id: MessageId {
                origin: self.id,
                seq: self.next_seq,
            },
            src: self.id,
            dst: self.dst,
            send_ts,
            recv_ts,
            value,
            sign: Sign::Positive,
        };
        self.next_seq += 1;
        self.sent.insert(m.id, m);
        m
    }

    /// Record the real sample for `wallclock` and emit predictions.
    ///
    /// After a reset (and on the very first observation) the real value
    /// itself goes out first, stamped at `wallclock`.
    pub fn observe(
        &mut self,
        wallclock: Time,
        sample: TimedSample,
    ) -> Result<Vec<VirtualMessage>, EngineError> {
        if sample.t != wallclock as f64 {
            return Err(EngineError::SampleTime {
                sample: sample.t,
                wallclock,
            });
        }
        self.history.push(sample);
        let keep = self.hypothesis.window() as usize + 1;
        if self.history.len() > keep {
            self.history.drain(..self.history.len() - keep);
        }
        self.lvt = self.lvt.max(wallclock);

        let mut out = Vec::new();
        if self.reprime {
            self.reprime = false;
            out.push(self.send(wallclock, wallclock, sample.value));
        }
        let earned = self.credit + self.ratio;
        let budget = (earned.floor() as usize).min(self.rate_cap);
        self.credit = earned.fract();
        for _ in 0..budget {
            let target = self.lvt + self.step;
            if target > wallclock + self.lookahead {
                break;
            }
            let value = predict_at(&self.hypothesis, &self.history, target as f64)?;
            out.push(self.send(self.lvt, target, value));
            self.lvt = target;
        }
        Ok(out)
    }

    /// Cancel every prediction for after `wallclock` and re-prime from the
    /// next real sample.
    pub fn reset(&mut self, wallclock: Time) -> Vec<VirtualMessage> {
        let doomed: Vec<MessageId> = self
            .sent
            .values()
            .filter(|m| m.recv_ts > wallclock)
            .map(|m| m.id)
            .collect();
        let antis = doomed
            .iter()
            .map(|id| self.sent.remove(id).expect("collected above").anti())
            .collect();
        self.lvt = wallclock;
        self.reprime = true;
        antis
    }

    /// Forget sends older than `gvt - step`; they can no longer be cancelled.
    pub fn fossil_collect(&mut self, gvt: Time) -> usize {
        let before = self.sent.len();
        let horizon = gvt - self.step;
        self.sent.retain(|_, m| m.recv_ts >= horizon);
        before - self.sent.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dp(ratio: f64) -> DrivingProcess {
        DrivingProcess::new(
            0,
            1,
            Hypothesis::linear(1, 20.0).unwrap(),
            20,
            200,
            ratio,
            500,
        )
    }

    #[test]
    fn observe_extrapolates() {
        let mut d = dp(1.0).with_history(vec![TimedSample::new(0.0, 0.0)]);
        let out = d.observe(1, TimedSample::new(1.0, 10.0)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(
            (out[0].send_ts, out[0].recv_ts, out[0].value),
            (1, 21, 210.0)
        );
        assert_eq!(d.lvt(), 21);
    }

    #[test]
    fn window_boundary_stops_emission() {
        let mut d = dp(5.0).with_history(vec![TimedSample::new(0.0, 1.0)]);
        d.lvt = 205;
        assert!(d.observe(5, TimedSample::new(5.0, 1.0)).unwrap().is_empty());
    }

    #[test]
    fn zero_ratio_is_silent() {
        let mut d = dp(0.0).with_history(vec![TimedSample::new(0.0, 1.0)]);
        assert!(d.observe(1, TimedSample::new(1.0, 1.0)).unwrap().is_empty());
    }

    #[test]
    fn first_observation_primes() {
        let mut d = dp(1.0);
        let out = d.observe(0, TimedSample::new(0.0, 42.0)).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].send_ts, out[0].recv_ts, out[0].value), (0, 0, 42.0));
        assert_eq!(out[1].recv_ts, 20);
    }

    #[test]
    fn fractional_ratio_accumulates() {
        let mut d = dp(0.5).with_history(vec![TimedSample::new(0.0, 1.0)]);
        let counts: Vec<usize> = (1..=4)
            .map(|t| d.observe(t, TimedSample::new(t as f64, 1.0)).unwrap().len())
            .collect();
        assert_eq!(counts, vec![0, 1, 0, 1]);
    }

    #[test]
    fn rate_cap_limits_burst() {
        let mut d =
            DrivingProcess::new(0, 1, Hypothesis::linear(1, 20.0).unwrap(), 20, 200, 8.0, 3)
                .with_history(vec![TimedSample::new(0.0, 1.0)]);
        assert_eq!(d.observe(1, TimedSample::new(1.0, 1.0)).unwrap().len(), 3);
    }

    #[test]
    fn reset_cancels_future_predictions() {
        let mut d = dp(4.0);
        let sent = d.observe(0, TimedSample::new(0.0, 1.0)).unwrap();
        assert_eq!(sent.len(), 5);
        let antis = d.reset(30);
        assert_eq!(
            antis.iter().map(|m| m.recv_ts).collect::<Vec<_>>(),
            vec![40, 60, 80]
        );
        assert!(antis.iter().all(|m| m.sign == Sign::Anti));
        let next = d.observe(31, TimedSample::new(31.0, 9.0)).unwrap();
        assert_eq!((next[0].recv_ts, next[0].value), (31, 9.0));
    }

    #[test]
    fn sample_must_match_wallclock() {
        let mut d = dp(1.0);
        assert!(d.observe(3, TimedSample::new(2.0, 1.0)).is_err());
    }
}
