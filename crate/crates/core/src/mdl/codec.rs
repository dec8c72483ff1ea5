//! Self-delimiting residual coding.
//!
//! Each residual is zigzag-mapped to a natural number and written as an
//! Elias-gamma code with two symbols reserved:
//!
//! | gamma value | meaning                                      |
//! |-------------|----------------------------------------------|
//! | 1           | a single zero residual                       |
//! | 2           | run escape, followed by gamma(run - 7)       |
//! | k >= 3      | non-zero residual with zigzag value `k - 2`  |
//!
//! Runs of eight or more zero residuals always use the escape.

use crate::bits::{BitReader, BitString};

use super::PacketError;

/// Shortest zero run that is written with the escape.
pub const MIN_ESCAPED_RUN: u64 = 8;

const SYM_ZERO: u64 = 1;
const SYM_RUN: u64 = 2;
const SYM_OFFSET: u64 = 2;

/// Largest residual magnitude the coder accepts.
pub const MAX_RESIDUAL: i64 = 1 << 62;

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(n: u64) -> i64 {
    ((n >> 1) as i64) ^ -((n & 1) as i64)
}

/// Elias gamma for `n >= 1`: `floor(log2 n)` zeros, then `n` in binary.
pub fn write_gamma(out: &mut BitString, n: u64) {
    assert!(n >= 1, "gamma code is undefined for 0");
    let nbits = 63 - n.leading_zeros();
    for _ in 0..nbits {
        out.push(false);
    }
    out.push_bits(n, nbits + 1).expect("width <= 64");
}

pub fn gamma_len(n: u64) -> usize {
    assert!(n >= 1, "gamma code is undefined for 0");
    2 * (63 - n.leading_zeros() as usize) + 1
}

pub fn read_gamma(r: &mut BitReader<'_>) -> Result<u64, PacketError> {
    let mut zeros = 0u32;
    while !r.read_bit().map_err(|_| PacketError::Truncated)? {
        zeros += 1;
        if zeros > 63 {
            return Err(PacketError::OverlongCode);
        }
    }
    let low = r.read_bits(zeros).map_err(|_| PacketError::Truncated)?;
    Ok((1u64 << zeros) | low)
}

/// Append the residual stream for `residuals`.
pub fn encode_residuals(out: &mut BitString, residuals: &[i64]) {
    let mut i = 0;
    while i < residuals.len() {
        if residuals[i] == 0 {
            let run = residuals[i..].iter().take_while(|&&r| r == 0).count();
            if run as u64 >= MIN_ESCAPED_RUN {
                write_gamma(out, SYM_RUN);
                write_gamma(out, run as u64 - (MIN_ESCAPED_RUN - 1));
            } else {
                for _ in 0..run {
                    write_gamma(out, SYM_ZERO);
                }
            }
            i += run;
        } else {
            let r = residuals[i];
            assert!(r.abs() <= MAX_RESIDUAL, "residual {r} out of range");
            write_gamma(out, zigzag(r) + SYM_OFFSET);
            i += 1;
        }
    }
}

/// Exact length in bits of [`encode_residuals`] output.
pub fn residuals_len(residuals: &[i64]) -> usize {
    let mut out = BitString::new();
    encode_residuals(&mut out, residuals);
    out.len()
}

/// Decode residuals until the stream ends. Fewer than eight trailing zero
/// bits are byte padding and are ignored. `limit` caps the number of
/// residuals produced.
pub fn decode_residuals(r: &mut BitReader<'_>, limit: usize) -> Result<Vec<i64>, PacketError> {
    let mut out = Vec::new();
    loop {
        if r.remaining() < 8 && r.rest_is_zero() {
            return Ok(out);
        }
        match read_gamma(r)? {
            SYM_ZERO => out.push(0),
            SYM_RUN => {
                let run = read_gamma(r)?
                    .checked_add(MIN_ESCAPED_RUN - 1)
                    .ok_or(PacketError::OverlongCode)?;
                if run > (limit - out.len().min(limit)) as u64 {
                    return Err(PacketError::TooManySamples(limit));
                }
                out.resize(out.len() + run as usize, 0);
            }
            k => out.push(unzigzag(k - SYM_OFFSET)),
        }
        if out.len() > limit {
            return Err(PacketError::TooManySamples(limit));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zigzag_table() {
        let pairs = [(0i64, 0u64), (-1, 1), (1, 2), (-2, 3), (2, 4)];
        for (v, z) in pairs {
            assert_eq!(zigzag(v), z);
            assert_eq!(unzigzag(z), v);
        }
        assert_eq!(unzigzag(zigzag(i64::MIN)), i64::MIN);
        assert_eq!(unzigzag(zigzag(i64::MAX)), i64::MAX);
    }

    #[test]
    fn gamma_codewords() {
        let cases = [
            (1u64, "1"),
            (2, "010"),
            (3, "011"),
            (4, "00100"),
            (9, "0001001"),
        ];
        for (n, code) in cases {
            let mut b = BitString::new();
            write_gamma(&mut b, n);
            assert_eq!(b.to_string(), code);
            assert_eq!(gamma_len(n), code.len());
            assert_eq!(read_gamma(&mut b.reader()).unwrap(), n);
        }
        let mut big = BitString::new();
        write_gamma(&mut big, u64::MAX);
        assert_eq!(big.len(), 127);
        assert_eq!(read_gamma(&mut big.reader()).unwrap(), u64::MAX);
    }

    #[test]
    fn overlong_prefix_rejected() {
        let b = BitString::repeat(false, 70).concat(&"1".parse().unwrap());
        assert_eq!(read_gamma(&mut b.reader()), Err(PacketError::OverlongCode));
    }

    #[test]
    fn zero_runs_use_escape() {
        let mut short = BitString::new();
        encode_residuals(&mut short, &[0; 7]);
        assert_eq!(short.to_string(), "1111111");

        let mut eight = BitString::new();
        encode_residuals(&mut eight, &[0; 8]);
        // escape "010" then gamma(1) = "1"
        assert_eq!(eight.to_string(), "0101");

        let mut long = BitString::new();
        encode_residuals(&mut long, &[0; 1000]);
        assert_eq!(long.len(), 3 + gamma_len(1000 - 7));
    }

    #[test]
    fn padding_is_ignored_but_truncation_is_not() {
        let mut b = BitString::new();
        encode_residuals(&mut b, &[5, -3, 0]);
        let n = b.len();
        b.push_bits(0, 5).unwrap();
        assert_eq!(
            decode_residuals(&mut b.reader(), 100).unwrap(),
            vec![5, -3, 0]
        );

        let cut = b.slice(0, n - 3);
        assert!(decode_residuals(&mut cut.reader(), 100).is_err());
    }

    #[test]
    fn limit_caps_output() {
        let mut b = BitString::new();
        encode_residuals(&mut b, &[0; 100]);
        assert_eq!(
            decode_residuals(&mut b.reader(), 50),
            Err(PacketError::TooManySamples(50))
        );
    }

    proptest! {
        #[test]
        fn residual_roundtrip(v in prop::collection::vec(
            prop_oneof![Just(0i64), -1000i64..1000, -MAX_RESIDUAL..=MAX_RESIDUAL], 0..300)) {
            let mut b = BitString::new();
            encode_residuals(&mut b, &v);
            prop_assert_eq!(b.len(), residuals_len(&v));
            let back = decode_residuals(&mut b.reader(), v.len()).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
