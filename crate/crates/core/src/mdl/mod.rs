//! Prediction hypotheses and minimum-description-length scoring.
//!
//! A [`Hypothesis`] smooths a history with a running mean of width `w` and
//! extrapolates a straight line through the last two smoothed samples. The
//! same hypothesis doubles as the code half of an active packet: a series
//! is sent as its first sample plus the residuals left over by one-step
//! ahead prediction, and the receiver re-runs the predictor to regenerate
//! it. The best hypothesis for a series is the one with the shortest packet.

pub mod codec;
pub mod packet;

use thiserror::Error;

pub use crate::series::TimedSample;
pub use packet::{decode_packet, encode_packet, ActivePacket, PacketMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdlError {
    #[error("smoothing window must be at least 1")]
    ZeroWindow,
    #[error("step size {0} must be positive and finite")]
    BadStep(f64),
    #[error("history is empty")]
    EmptyHistory,
    #[error("data series is empty")]
    EmptyData,
    #[error("hypothesis grid is empty")]
    EmptyGrid,
    #[error("series misaligned at index {index}: {reason}")]
    Alignment { index: usize, reason: &'static str },
    #[error("sample {value} at index {index} does not fit a 32-bit signed integer")]
    SampleOutOfRange { index: usize, value: f64 },
    #[error("value {0} cannot be rounded to a 64-bit integer")]
    Unroundable(f64),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("bad magic {0:#06x}")]
    BadMagic(u16),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("bad flags {0:#04x}")]
    BadFlags(u8),
    #[error("truncated payload")]
    Truncated,
    #[error("unknown hypothesis family tag {0}")]
    UnknownFamily(u8),
    #[error("invalid hypothesis parameters")]
    BadHypothesis,
    #[error("gamma code longer than 64 bits")]
    OverlongCode,
    #[error("more than {0} samples in payload")]
    TooManySamples(usize),
    #[error("decoded value leaves the 32-bit sample range")]
    ValueOutOfRange,
}

/// Model family tag carried in the packet code section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HypothesisFamily {
    LinearExtrapolation,
}

impl HypothesisFamily {
    pub fn tag(self) -> u8 {
        match self {
            HypothesisFamily::LinearExtrapolation => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(HypothesisFamily::LinearExtrapolation),
            _ => None,
        }
    }
}

/// Smoothed linear extrapolation. The step is held at single precision
/// because that is what the packet code section carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    family: HypothesisFamily,
    window: u16,
    step: f32,
}

impl Hypothesis {
    /// Bits taken by an encoded hypothesis: 8-bit family, 16-bit window,
    /// 32-bit step.
    pub const CODE_BITS: usize = 8 + 16 + 32;

    pub fn linear(window: u16, step: f64) -> Result<Self, MdlError> {
        if window == 0 {
            return Err(MdlError::ZeroWindow);
        }
        let s = step as f32;
        if !(step.is_finite() && s.is_finite() && s > 0.0) {
            return Err(MdlError::BadStep(step));
        }
        Ok(Self {
            family: HypothesisFamily::LinearExtrapolation,
            window,
            step: s,
        })
    }

    pub fn family(&self) -> HypothesisFamily {
        self.family
    }

    pub fn window(&self) -> u16 {
        self.window
    }

    pub fn step_size(&self) -> f64 {
        self.step as f64
    }

    pub(crate) fn step_bits(&self) -> u32 {
        self.step.to_bits()
    }

    pub(crate) fn from_code_fields(
        tag: u8,
        window: u16,
        step_bits: u32,
    ) -> Result<Self, PacketError> {
        let family = HypothesisFamily::from_tag(tag).ok_or(PacketError::UnknownFamily(tag))?;
        let step = f32::from_bits(step_bits);
        if window == 0 || !step.is_finite() || step <= 0.0 {
            return Err(PacketError::BadHypothesis);
        }
        Ok(Self {
            family,
            window,
            step,
        })
    }
}

/// Running mean: sample `i` becomes the mean of the last `min(i + 1, w)`
/// values. Timestamps are untouched.
pub fn smooth(history: &[TimedSample], w: usize) -> Result<Vec<TimedSample>, MdlError> {
    if w == 0 {
        return Err(MdlError::ZeroWindow);
    }
    if history.is_empty() {
        return Err(MdlError::EmptyHistory);
    }
    let values: Vec<f64> = history.iter().map(|s| s.value).collect();
    Ok(history
        .iter()
        .zip(causal_means(&values, w))
        .map(|(s, m)| TimedSample::new(s.t, m))
        .collect())
}

fn causal_means(values: &[f64], w: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let win = &values[lo..=i];
            win.iter().sum::<f64>() / win.len() as f64
        })
        .collect()
}

/// Extrapolate `steps` samples past the end of `history`, spaced by the
/// hypothesis step.
pub fn predict(
    h: &Hypothesis,
    history: &[TimedSample],
    steps: usize,
) -> Result<Vec<TimedSample>, MdlError> {
    let (last, slope) = trend(h, history)?;
    let step = h.step_size();
    Ok((1..=steps)
        .map(|k| {
            let dt = k as f64 * step;
            TimedSample::new(last.t + dt, last.value + slope * dt)
        })
        .collect())
}

/// Value of the fitted line at an arbitrary time `t`.
pub fn predict_at(h: &Hypothesis, history: &[TimedSample], t: f64) -> Result<f64, MdlError> {
    let (last, slope) = trend(h, history)?;
    Ok(last.value + slope * (t - last.t))
}

/// Last smoothed sample and the slope through it and the one before.
fn trend(h: &Hypothesis, history: &[TimedSample]) -> Result<(TimedSample, f64), MdlError> {
    if history.is_empty() {
        return Err(MdlError::EmptyHistory);
    }
    // Only the tail matters: the last two smoothed points need w + 1 samples.
    let keep = (h.window as usize + 1).min(history.len());
    let tail = &history[history.len() - keep..];
    let smoothed = smooth(tail, h.window as usize)?;
    let last = smoothed[smoothed.len() - 1];
    let slope = match smoothed.len() {
        1 => 0.0,
        n => {
            let prev = smoothed[n - 2];
            (last.value - prev.value) / (last.t - prev.t)
        }
    };
    Ok((last, slope))
}

fn round_i64(v: f64) -> Result<i64, MdlError> {
    let r = v.round();
    // i64 range is [-2^63, 2^63)
    if r.is_finite() && (-9.223_372_036_854_776e18..9.223_372_036_854_776e18).contains(&r) {
        Ok(r as i64)
    } else {
        Err(MdlError::Unroundable(v))
    }
}

/// `round(actual_i) - round(predicted_i)` over aligned series.
pub fn residual(actual: &[TimedSample], predicted: &[TimedSample]) -> Result<Vec<i64>, MdlError> {
    if actual.len() != predicted.len() {
        return Err(MdlError::Alignment {
            index: actual.len().min(predicted.len()),
            reason: "length mismatch",
        });
    }
    actual
        .iter()
        .zip(predicted)
        .enumerate()
        .map(|(index, (a, p))| {
            if a.t != p.t {
                return Err(MdlError::Alignment {
                    index,
                    reason: "timestamp mismatch",
                });
            }
            round_i64(a.value)?
                .checked_sub(round_i64(p.value)?)
                .ok_or(MdlError::Unroundable(a.value - p.value))
        })
        .collect()
}

/// Round each sample and check it fits the 32-bit packet sample range.
pub fn quantize(data: &[TimedSample]) -> Result<Vec<i64>, MdlError> {
    data.iter()
        .enumerate()
        .map(|(index, s)| {
            let r = s.value.round();
            if r.is_finite() && r >= i32::MIN as f64 && r <= i32::MAX as f64 {
                Ok(r as i64)
            } else {
                Err(MdlError::SampleOutOfRange {
                    index,
                    value: s.value,
                })
            }
        })
        .collect()
}

/// Rounded one-step-ahead predictions for indices `1..values.len()`, each
/// using only the samples before it on a unit-spaced timeline. Shared by
/// encoder and decoder so both sides compute the same numbers.
pub(crate) fn one_step_predictions(window: usize, values: &[i64]) -> Vec<i64> {
    let as_f: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    let smoothed = causal_means(&as_f, window);
    (1..values.len())
        .map(|i| one_step_from_smoothed(&smoothed[..i]))
        .collect()
}

fn one_step_from_smoothed(smoothed: &[f64]) -> i64 {
    let last = smoothed[smoothed.len() - 1];
    let slope = match smoothed.len() {
        1 => 0.0,
        n => last - smoothed[n - 2],
    };
    (last + slope).round() as i64
}

/// Incremental decoder-side predictor: feeds values one at a time.
pub(crate) struct OnlinePredictor {
    window: usize,
    values: Vec<f64>,
    smoothed: Vec<f64>,
}

impl OnlinePredictor {
    pub(crate) fn new(window: usize) -> Self {
        Self {
            window,
            values: Vec::new(),
            smoothed: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, v: i64) {
        self.values.push(v as f64);
        let i = self.values.len() - 1;
        let lo = (i + 1).saturating_sub(self.window);
        let win = &self.values[lo..=i];
        self.smoothed
            .push(win.iter().sum::<f64>() / win.len() as f64);
    }

    pub(crate) fn next(&self) -> i64 {
        let n = self.smoothed.len();
        one_step_from_smoothed(&self.smoothed[n.saturating_sub(2)..])
    }
}

/// Summed absolute in-sample residual and description length of one
/// hypothesis on one series.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisScore {
    pub hypothesis: Hypothesis,
    pub sum_abs_error: u64,
    pub description_length: usize,
}

/// In-sample residuals: `value_i - prediction_i` for `i >= 1`.
pub fn in_sample_residuals(h: &Hypothesis, data: &[TimedSample]) -> Result<Vec<i64>, MdlError> {
    let values = quantize(data)?;
    if values.is_empty() {
        return Err(MdlError::EmptyData);
    }
    let preds = one_step_predictions(h.window as usize, &values);
    Ok(values[1..].iter().zip(preds).map(|(v, p)| v - p).collect())
}

/// Bits of the active packet for `data` under `h`: header, hypothesis
/// code, the first sample verbatim and the coded residuals.
pub fn description_length(h: &Hypothesis, data: &[TimedSample]) -> Result<usize, MdlError> {
    let residuals = in_sample_residuals(h, data)?;
    Ok(packet::HEADER_BITS
        + Hypothesis::CODE_BITS
        + packet::SAMPLE_BITS
        + codec::residuals_len(&residuals))
}

/// Bits of the passive packet for `n` samples.
pub fn passive_length(n: usize) -> usize {
    packet::HEADER_BITS + packet::SAMPLE_BITS * n
}

pub fn score(h: &Hypothesis, data: &[TimedSample]) -> Result<HypothesisScore, MdlError> {
    let residuals = in_sample_residuals(h, data)?;
    Ok(HypothesisScore {
        hypothesis: *h,
        sum_abs_error: residuals.iter().map(|r| r.unsigned_abs()).sum(),
        description_length: packet::HEADER_BITS
            + Hypothesis::CODE_BITS
            + packet::SAMPLE_BITS
            + codec::residuals_len(&residuals),
    })
}

/// Score every window in `grid`, in grid order.
pub fn score_grid(
    grid: &[u16],
    step: f64,
    data: &[TimedSample],
) -> Result<Vec<HypothesisScore>, MdlError> {
    if grid.is_empty() {
        return Err(MdlError::EmptyGrid);
    }
    grid.iter()
        .map(|&w| score(&Hypothesis::linear(w, step)?, data))
        .collect()
}

/// The hypothesis with the shortest description; ties go to the smallest
/// window.
pub fn select_hypothesis(
    grid: &[u16],
    step: f64,
    data: &[TimedSample],
) -> Result<(Hypothesis, usize), MdlError> {
    let scores = score_grid(grid, step, data)?;
    let best = scores
        .iter()
        .min_by(|a, b| {
            a.description_length
                .cmp(&b.description_length)
                .then(a.hypothesis.window.cmp(&b.hypothesis.window))
        })
        .expect("grid is non-empty");
    Ok((best.hypothesis, best.description_length))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::uniform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vals(s: &[TimedSample]) -> Vec<f64> {
        s.iter().map(|x| x.value).collect()
    }

    #[test]
    fn smooth_examples() {
        let s = uniform(&[3.0, -1.0, 8.0], 1.0);
        assert_eq!(smooth(&s, 1).unwrap(), s);
        assert_eq!(
            vals(&smooth(&uniform(&[0.0, 10.0, 20.0, 30.0], 1.0), 2).unwrap()),
            vec![0.0, 5.0, 15.0, 25.0]
        );
        assert_eq!(
            vals(&smooth(&uniform(&[4.0; 3], 1.0), 3).unwrap()),
            vec![4.0; 3]
        );
        assert_eq!(smooth(&s, 0), Err(MdlError::ZeroWindow));
        assert_eq!(smooth(&[], 2), Err(MdlError::EmptyHistory));
    }

    #[test]
    fn predict_examples() {
        let h = Hypothesis::linear(1, 10.0).unwrap();
        let hist = [TimedSample::new(0.0, 0.0), TimedSample::new(10.0, 100.0)];
        assert_eq!(
            predict(&h, &hist, 2).unwrap(),
            vec![TimedSample::new(20.0, 200.0), TimedSample::new(30.0, 300.0)]
        );

        let h = Hypothesis::linear(1, 5.0).unwrap();
        let flat = [TimedSample::new(0.0, 7.0), TimedSample::new(5.0, 7.0)];
        assert!(predict(&h, &flat, 3)
            .unwrap()
            .iter()
            .all(|s| s.value == 7.0));

        assert!(predict(&h, &flat, 0).unwrap().is_empty());
        assert_eq!(predict(&h, &[], 1), Err(MdlError::EmptyHistory));
    }

    #[test]
    fn predict_smoothed_tail() {
        // Independent hand evaluation: smoothed (w=2) = [0, 5, 12];
        // slope through (1,5),(2,12) = 7; next at t=3 is 12 + 7 = 19.
        let h = Hypothesis::linear(2, 1.0).unwrap();
        let hist = uniform(&[0.0, 10.0, 14.0], 1.0);
        assert_eq!(
            predict(&h, &hist, 1).unwrap(),
            vec![TimedSample::new(3.0, 19.0)]
        );
    }

    #[test]
    fn predict_at_matches_predict() {
        let h = Hypothesis::linear(2, 1.0).unwrap();
        let hist = uniform(&[0.0, 10.0, 14.0], 1.0);
        assert_eq!(predict_at(&h, &hist, 3.0).unwrap(), 19.0);
        assert_eq!(predict_at(&h, &hist, 12.0).unwrap(), 12.0 + 7.0 * 10.0);
        assert_eq!(predict_at(&h, &[], 1.0), Err(MdlError::EmptyHistory));
    }

    #[test]
    fn single_sample_predicts_flat() {
        let h = Hypothesis::linear(3, 2.0).unwrap();
        let p = predict(&h, &[TimedSample::new(4.0, 9.0)], 2).unwrap();
        assert_eq!(
            p,
            vec![TimedSample::new(6.0, 9.0), TimedSample::new(8.0, 9.0)]
        );
    }

    #[test]
    fn residual_examples() {
        let a = uniform(&[10.0, 20.0], 1.0);
        assert_eq!(residual(&a, &a).unwrap(), vec![0, 0]);
        assert_eq!(
            residual(&a, &uniform(&[8.0, 25.0], 1.0)).unwrap(),
            vec![2, -5]
        );
        assert!(matches!(
            residual(&a, &a[..1]),
            Err(MdlError::Alignment { .. })
        ));
        assert!(matches!(
            residual(&a, &uniform(&[10.0, 20.0], 2.0)),
            Err(MdlError::Alignment { index: 1, .. })
        ));
    }

    #[test]
    fn one_step_matches_predict_on_prefixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<i64> = (0..60).map(|_| rng.random_range(-500..500)).collect();
        for w in [1u16, 2, 3, 7] {
            let h = Hypothesis::linear(w, 1.0).unwrap();
            let preds = one_step_predictions(w as usize, &values);
            let series = uniform(&values.iter().map(|&v| v as f64).collect::<Vec<_>>(), 1.0);
            for i in 1..values.len() {
                let p = predict(&h, &series[..i], 1).unwrap()[0];
                assert_eq!(p.t, i as f64);
                assert_eq!(p.value.round() as i64, preds[i - 1], "w={w} i={i}");
            }
            let mut online = OnlinePredictor::new(w as usize);
            for i in 1..values.len() {
                online.push(values[i - 1]);
                assert_eq!(online.next(), preds[i - 1]);
            }
        }
    }

    #[test]
    fn linear_data_beats_passive() {
        let data = uniform(
            &(0..16).map(|i| 100.0 + 3.0 * i as f64).collect::<Vec<_>>(),
            1.0,
        );
        let h = Hypothesis::linear(1, 1.0).unwrap();
        let res = in_sample_residuals(&h, &data).unwrap();
        assert_eq!(res[0], 3);
        assert!(res[1..].iter().all(|&r| r == 0));
        let dl = description_length(&h, &data).unwrap();
        assert!(dl < passive_length(16), "{dl}");
    }

    #[test]
    fn single_sample_description_length() {
        let h = Hypothesis::linear(4, 1.0).unwrap();
        let d = [TimedSample::new(0.0, 42.0)];
        assert_eq!(description_length(&h, &d).unwrap(), 32 + 56 + 32);
        assert_eq!(description_length(&h, &[]), Err(MdlError::EmptyData));
    }

    #[test]
    fn random_data_does_not_compress() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let v: Vec<f64> = (0..256).map(|_| rng.random::<i32>() as f64).collect();
        let data = uniform(&v, 1.0);
        let slack = packet::HEADER_BITS + Hypothesis::CODE_BITS;
        for w in [1u16, 2, 4, 8] {
            let dl = description_length(&Hypothesis::linear(w, 1.0).unwrap(), &data).unwrap();
            assert!(dl + slack >= passive_length(v.len()), "w={w}");
        }
    }

    #[test]
    fn selection_rules() {
        let linear = uniform(&(0..64).map(|i| 5.0 * i as f64).collect::<Vec<_>>(), 1.0);
        let grid = [1u16, 2, 4, 8];
        let scores = score_grid(&grid, 1.0, &linear).unwrap();
        assert!(scores[1..]
            .iter()
            .all(|s| s.description_length > scores[0].description_length));
        assert_eq!(
            select_hypothesis(&grid, 1.0, &linear).unwrap().0.window(),
            1
        );

        let flat = uniform(&[9.0; 40], 1.0);
        let scores = score_grid(&grid, 1.0, &flat).unwrap();
        assert!(scores
            .iter()
            .all(|s| s.description_length == scores[0].description_length));
        assert_eq!(
            select_hypothesis(&[8, 4, 2, 1], 1.0, &flat)
                .unwrap()
                .0
                .window(),
            1
        );

        assert_eq!(select_hypothesis(&[], 1.0, &flat), Err(MdlError::EmptyGrid));
    }

    #[test]
    fn noisy_linear_prefers_smoothing() {
        // Noise alternates sign each sample, far faster than the windows.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v: Vec<f64> = (0..400)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                1000.0 + 2.0 * i as f64 + sign * rng.random_range(20.0..40.0)
            })
            .collect();
        let (h, _) = select_hypothesis(&[1, 2, 4, 8], 1.0, &uniform(&v, 1.0)).unwrap();
        assert!(h.window() > 1);
    }

    #[test]
    fn hypothesis_validation() {
        assert_eq!(Hypothesis::linear(0, 1.0), Err(MdlError::ZeroWindow));
        assert!(Hypothesis::linear(1, 0.0).is_err());
        assert!(Hypothesis::linear(1, f64::NAN).is_err());
        assert!(Hypothesis::linear(1, 1e300).is_err());
        assert_eq!(Hypothesis::linear(3, 20.0).unwrap().step_size(), 20.0);
    }
}
