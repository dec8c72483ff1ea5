//! Complexity estimation for bit strings.
//!
//! The default estimator charges a string of length `l` with `k` ones
//! `l * H(k / l) + log2(l)` bits, where `H` is the binary entropy. It
//! depends only on the length and the weight of ones, so it is blind to
//! ordering: it is a quick stand-in for a compressor, not a compressor.
//!
//! Numeric series are measured by serializing each sample as a fixed-width
//! two's-complement integer (MSB first) and estimating each
//! non-overlapping window.

use thiserror::Error;

use crate::bits::BitString;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexityError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("complexity of an empty bit string is undefined")]
    EmptyString,
    #[error("window must be at least 1")]
    ZeroWindow,
    #[error("window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("codec width {0} outside 1..=64")]
    BadWidth(u32),
    #[error("sample {0} is not finite")]
    NonFiniteSample(f64),
}

/// Binary entropy in bits per symbol, with `0 * log2(0) = 0`.
pub fn binary_entropy(p: f64) -> Result<f64, ComplexityError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ComplexityError::ProbabilityOutOfRange(p));
    }
    Ok(entropy_terms(p, 1.0 - p))
}

fn entropy_terms(p: f64, q: f64) -> f64 {
    let term = |x: f64| if x == 0.0 { 0.0 } else { -x * x.log2() };
    // Fixed summation order keeps H(p) and H(1 - p) bit-identical.
    let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
    (term(lo) + term(hi)).clamp(0.0, 1.0)
}

/// An estimate of the complexity of one bit string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityEstimate {
    /// Estimated complexity in bits.
    pub khat: f64,
    /// `khat / source_length`.
    pub density: f64,
    /// Length of the measured string in bits.
    pub source_length: usize,
}

impl ComplexityEstimate {
    fn new(khat: f64, source_length: usize) -> Self {
        Self {
            khat,
            density: khat / source_length as f64,
            source_length,
        }
    }
}

/// Something that can put a number on the complexity of a bit string.
pub trait ComplexityEstimator {
    fn estimate(&self, x: &BitString) -> Result<ComplexityEstimate, ComplexityError>;
}

/// Entropy-of-ones estimator: `l * H(ones / l) + log2(l)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct EntropyEstimator;

impl ComplexityEstimator for EntropyEstimator {
    fn estimate(&self, x: &BitString) -> Result<ComplexityEstimate, ComplexityError> {
        estimate_complexity(x)
    }
}

pub fn estimate_complexity(x: &BitString) -> Result<ComplexityEstimate, ComplexityError> {
    if x.is_empty() {
        return Err(ComplexityError::EmptyString);
    }
    let len = x.len() as f64;
    let h = entropy_terms(x.ones() as f64 / len, x.zeros() as f64 / len);
    Ok(ComplexityEstimate::new(len * h + len.log2(), x.len()))
}

/// Estimated complexity per bit.
pub fn complexity_density(x: &BitString) -> Result<f64, ComplexityError> {
    estimate_complexity(x).map(|e| e.density)
}

/// Serializes numeric samples to bits.
pub trait SampleCodec {
    fn encode_into(&self, sample: f64, out: &mut BitString) -> Result<(), ComplexityError>;

    fn encode_all(&self, samples: &[f64]) -> Result<BitString, ComplexityError> {
        let mut out = BitString::new();
        for &s in samples {
            self.encode_into(s, &mut out)?;
        }
        Ok(out)
    }
}

/// Round to the nearest integer and emit its low `width` two's-complement
/// bits, most significant first. Values outside the width wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedWidthCodec {
    width: u32,
}

impl FixedWidthCodec {
    pub fn new(width: u32) -> Result<Self, ComplexityError> {
        if width == 0 || width > 64 {
            return Err(ComplexityError::BadWidth(width));
        }
        Ok(Self { width })
    }

    pub fn width(&self) -> u32 {
        self.width
    }
}

impl Default for FixedWidthCodec {
    fn default() -> Self {
        Self { width: 32 }
    }
}

impl SampleCodec for FixedWidthCodec {
    fn encode_into(&self, sample: f64, out: &mut BitString) -> Result<(), ComplexityError> {
        if !sample.is_finite() {
            return Err(ComplexityError::NonFiniteSample(sample));
        }
        // `as` saturates out-of-range floats; wrapping happens below.
        let v = sample.round() as i64 as u64;
        out.push_bits(v, self.width)
            .map_err(|_| ComplexityError::BadWidth(self.width))
    }
}

/// Estimate each aligned, non-overlapping window of `window` samples.
/// A trailing partial window is dropped.
pub fn windowed_complexity(
    samples: &[f64],
    window: usize,
    codec: &dyn SampleCodec,
    estimator: &dyn ComplexityEstimator,
) -> Result<Vec<ComplexityEstimate>, ComplexityError> {
    if window == 0 {
        return Err(ComplexityError::ZeroWindow);
    }
    if window > samples.len() {
        return Err(ComplexityError::WindowTooLarge {
            window,
            len: samples.len(),
        });
    }
    samples
        .chunks_exact(window)
        .map(|chunk| estimator.estimate(&codec.encode_all(chunk)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn alternating(n: usize) -> BitString {
        (0..n).map(|i| i % 2 == 1).collect()
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // 30-digit reference: 0.811278124459132863909695792039
        assert_close(
            binary_entropy(0.25).unwrap(),
            0.811_278_124_459_132_9,
            1e-12,
        );
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn estimate_examples() {
        let zeros = BitString::repeat(false, 1024);
        assert_eq!(estimate_complexity(&zeros).unwrap().khat, 10.0);
        assert_eq!(
            estimate_complexity(&alternating(1024)).unwrap().khat,
            1034.0
        );

        let sixteen: BitString = "1000100010001000".parse().unwrap();
        // 30-digit reference: 16.9804499913461258225551326726
        assert_close(
            estimate_complexity(&sixteen).unwrap().khat,
            16.980_449_991_346_126,
            1e-9,
        );
        assert_eq!(
            estimate_complexity(&BitString::new()),
            Err(ComplexityError::EmptyString)
        );
    }

    #[test]
    fn density_examples() {
        assert_close(
            complexity_density(&BitString::repeat(false, 1024)).unwrap(),
            10.0 / 1024.0,
            1e-15,
        );
        assert_close(
            complexity_density(&alternating(1024)).unwrap(),
            1034.0 / 1024.0,
            1e-15,
        );
        assert_eq!(complexity_density(&"0".parse().unwrap()).unwrap(), 0.0);
        assert!(complexity_density(&BitString::new()).is_err());
    }

    #[test]
    fn fixed_width_codec_is_twos_complement_msb_first() {
        let c = FixedWidthCodec::new(8).unwrap();
        assert_eq!(c.encode_all(&[5.0]).unwrap().to_string(), "00000101");
        assert_eq!(c.encode_all(&[-1.0]).unwrap().to_string(), "11111111");
        assert_eq!(c.encode_all(&[2.6]).unwrap().to_string(), "00000011");
        assert_eq!(
            c.encode_all(&[256.0 + 7.0]).unwrap().to_string(),
            "00000111"
        );
        assert!(c.encode_all(&[f64::INFINITY]).is_err());
        assert!(FixedWidthCodec::new(0).is_err());
        assert!(FixedWidthCodec::new(65).is_err());
    }

    #[test]
    fn windowed_constant_series() {
        let c = FixedWidthCodec::new(8).unwrap();
        let est = windowed_complexity(&[5.0, 5.0, 5.0, 5.0], 2, &c, &EntropyEstimator).unwrap();
        assert_eq!(est.len(), 2);
        assert_eq!(est[0], est[1]);
    }

    #[test]
    fn windowed_drops_partial_and_rejects_bad_windows() {
        let c = FixedWidthCodec::default();
        let s = [1.0; 7];
        assert_eq!(
            windowed_complexity(&s, 3, &c, &EntropyEstimator)
                .unwrap()
                .len(),
            2
        );
        assert_eq!(
            windowed_complexity(&s, 0, &c, &EntropyEstimator),
            Err(ComplexityError::ZeroWindow)
        );
        assert!(matches!(
            windowed_complexity(&s, 8, &c, &EntropyEstimator),
            Err(ComplexityError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn windowed_random_32bit_samples_are_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..800).map(|_| rng.random::<u32>() as f64).collect();
        let c = FixedWidthCodec::default();
        for e in windowed_complexity(&samples, 8, &c, &EntropyEstimator).unwrap() {
            assert!((0.95..=1.05).contains(&e.density), "{}", e.density);
        }
    }

    #[test]
    fn windowed_random_half_exceeds_constant_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut samples = vec![0.0; 64];
        samples.extend((0..64).map(|_| rng.random::<u32>() as f64));
        let c = FixedWidthCodec::default();
        let est = windowed_complexity(&samples, 16, &c, &EntropyEstimator).unwrap();
        let (first, second) = est.split_at(4);
        let max_first = first.iter().map(|e| e.density).fold(f64::MIN, f64::max);
        assert!(second.iter().all(|e| e.density > max_first));
    }

    fn arb_bits() -> impl Strategy<Value = BitString> {
        prop::collection::vec(any::<bool>(), 1..2048).prop_map(BitString::from_iter)
    }

    proptest! {
        #[test]
        fn bounds_hold(x in arb_bits()) {
            let e = estimate_complexity(&x).unwrap();
            let l = x.len() as f64;
            prop_assert!(l.log2() <= e.khat);
            prop_assert!(e.khat <= l + l.log2());
            prop_assert_eq!(e.density, e.khat / l);
            prop_assert_eq!(x.ones() + x.zeros(), x.len());
            prop_assert_eq!(x.ones(), x.recount_ones());
        }

        #[test]
        fn permutation_and_complement_invariant(x in arb_bits(), seed in any::<u64>()) {
            let mut bits: Vec<bool> = x.iter().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..bits.len()).rev() {
                bits.swap(i, rng.random_range(0..=i));
            }
            let shuffled = BitString::from_iter(bits);
            let k = estimate_complexity(&x).unwrap().khat;
            prop_assert_eq!(estimate_complexity(&shuffled).unwrap().khat, k);
            prop_assert_eq!(estimate_complexity(&x.complement()).unwrap().khat, k);
        }
    }

    #[test]
    fn random_mean_tracks_length() {
        let n = 1024usize;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mean = (0..1000)
            .map(|_| {
                let x: BitString = (0..n).map(|_| rng.random::<bool>()).collect();
                estimate_complexity(&x).unwrap().khat
            })
            .sum::<f64>()
            / 1000.0;
        let nf = n as f64;
        assert!(mean >= 0.95 * nf && mean <= nf + nf.log2() + 1.0, "{mean}");
    }
}
