//! Active and passive packet wire format.
//!
//! All fields are MSB first. See `docs/packet-format.md` for the layout.

use crate::bits::{BitReader, BitString};

use super::codec;
use super::{quantize, Hypothesis, MdlError, OnlinePredictor, PacketError, TimedSample};

pub const MAGIC: u16 = 0xA7E7;
pub const VERSION: u8 = 1;
pub const HEADER_BITS: usize = 32;
pub const SAMPLE_BITS: usize = 32;

/// Upper bound on samples accepted by the decoder.
pub const MAX_SAMPLES: usize = 1 << 24;

const FLAG_ACTIVE: u8 = 0x01;
const FLAG_PASSIVE: u8 = 0x02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketMode {
    /// Hypothesis code plus residuals.
    Active,
    /// Raw fixed-width samples, no code.
    Passive,
}

impl PacketMode {
    fn flags(self) -> u8 {
        match self {
            PacketMode::Active => FLAG_ACTIVE,
            PacketMode::Passive => FLAG_PASSIVE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivePacket {
    mode: PacketMode,
    code: BitString,
    data: BitString,
}

impl ActivePacket {
    pub fn mode(&self) -> PacketMode {
        self.mode
    }

    pub fn code(&self) -> &BitString {
        &self.code
    }

    pub fn data(&self) -> &BitString {
        &self.data
    }

    /// Header plus code plus data, in bits.
    pub fn total_length(&self) -> usize {
        HEADER_BITS + self.code.len() + self.data.len()
    }

    /// The hypothesis carried in the code section, if any.
    pub fn hypothesis(&self) -> Result<Option<Hypothesis>, PacketError> {
        if self.mode == PacketMode::Passive {
            return Ok(None);
        }
        read_hypothesis(&mut self.code.reader()).map(Some)
    }

    pub fn to_bits(&self) -> BitString {
        let mut out = BitString::with_capacity(self.total_length());
        out.push_bits(MAGIC as u64, 16).expect("fixed width");
        out.push_bits(VERSION as u64, 8).expect("fixed width");
        out.push_bits(self.mode.flags() as u64, 8)
            .expect("fixed width");
        out.extend_from(&self.code);
        out.extend_from(&self.data);
        out
    }

    /// Bytes on the wire; the last byte is zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_bits().to_bytes()
    }

    /// Split a wire bit string into header, code and data. Only the header
    /// and the code section are validated here.
    pub fn from_bits(bits: &BitString) -> Result<Self, PacketError> {
        let mut r = bits.reader();
        let magic = r.read_bits(16).map_err(|_| PacketError::Truncated)? as u16;
        if magic != MAGIC {
            return Err(PacketError::BadMagic(magic));
        }
        let version = r.read_bits(8).map_err(|_| PacketError::Truncated)? as u8;
        if version != VERSION {
            return Err(PacketError::BadVersion(version));
        }
        let flags = r.read_bits(8).map_err(|_| PacketError::Truncated)? as u8;
        let mode = match flags {
            FLAG_ACTIVE => PacketMode::Active,
            FLAG_PASSIVE => PacketMode::Passive,
            other => return Err(PacketError::BadFlags(other)),
        };
        let code_len = match mode {
            PacketMode::Active => {
                read_hypothesis(&mut r.clone())?;
                Hypothesis::CODE_BITS
            }
            PacketMode::Passive => 0,
        };
        let code = bits.slice(HEADER_BITS, HEADER_BITS + code_len);
        let data = bits.slice(HEADER_BITS + code_len, bits.len());
        Ok(Self { mode, code, data })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PacketError> {
        Self::from_bits(&BitString::from_bytes(bytes))
    }
}

fn write_hypothesis(out: &mut BitString, h: &Hypothesis) {
    out.push_bits(h.family().tag() as u64, 8)
        .expect("fixed width");
    out.push_bits(h.window() as u64, 16).expect("fixed width");
    out.push_bits(h.step_bits() as u64, 32)
        .expect("fixed width");
}

fn read_hypothesis(r: &mut BitReader<'_>) -> Result<Hypothesis, PacketError> {
    let tag = r.read_bits(8).map_err(|_| PacketError::Truncated)? as u8;
    let window = r.read_bits(16).map_err(|_| PacketError::Truncated)? as u16;
    let step = r.read_bits(32).map_err(|_| PacketError::Truncated)? as u32;
    Hypothesis::from_code_fields(tag, window, step)
}

fn push_sample(out: &mut BitString, v: i64) {
    out.push_bits(v as i32 as u32 as u64, SAMPLE_BITS as u32)
        .expect("fixed width");
}

fn read_sample(r: &mut BitReader<'_>) -> Result<i64, PacketError> {
    Ok(r.read_bits(SAMPLE_BITS as u32)
        .map_err(|_| PacketError::Truncated)? as u32 as i32 as i64)
}

/// Encode `data` (rounded to integers) as an active or passive packet.
pub fn encode_packet(
    h: &Hypothesis,
    data: &[TimedSample],
    mode: PacketMode,
) -> Result<ActivePacket, MdlError> {
    let values = quantize(data)?;
    if values.is_empty() {
        return Err(MdlError::EmptyData);
    }
    let mut code = BitString::new();
    let mut payload = BitString::new();
    match mode {
        PacketMode::Passive => {
            for &v in &values {
                push_sample(&mut payload, v);
            }
        }
        PacketMode::Active => {
            write_hypothesis(&mut code, h);
            push_sample(&mut payload, values[0]);
            let preds = super::one_step_predictions(h.window() as usize, &values);
            let residuals: Vec<i64> = values[1..].iter().zip(preds).map(|(v, p)| v - p).collect();
            codec::encode_residuals(&mut payload, &residuals);
        }
    }
    Ok(ActivePacket {
        mode,
        code,
        data: payload,
    })
}

/// Regenerate the integer sample values carried by `p`.
pub fn decode_packet(p: &ActivePacket) -> Result<Vec<i64>, PacketError> {
    let mut r = p.data.reader();
    match p.mode {
        PacketMode::Passive => {
            let n = r.remaining() / SAMPLE_BITS;
            if n == 0 {
                return Err(PacketError::Truncated);
            }
            if n > MAX_SAMPLES {
                return Err(PacketError::TooManySamples(MAX_SAMPLES));
            }
            let values = (0..n)
                .map(|_| read_sample(&mut r))
                .collect::<Result<Vec<_>, _>>()?;
            if r.remaining() >= 8 || !r.rest_is_zero() {
                return Err(PacketError::Truncated);
            }
            Ok(values)
        }
        PacketMode::Active => {
            let h = read_hypothesis(&mut p.code.reader())?;
            let first = read_sample(&mut r)?;
            let residuals = codec::decode_residuals(&mut r, MAX_SAMPLES - 1)?;
            let mut predictor = OnlinePredictor::new(h.window() as usize);
            let mut values = Vec::with_capacity(residuals.len() + 1);
            values.push(first);
            predictor.push(first);
            for e in residuals {
                let v = predictor
                    .next()
                    .checked_add(e)
                    .filter(|v| (i32::MIN as i64..=i32::MAX as i64).contains(v))
                    .ok_or(PacketError::ValueOutOfRange)?;
                values.push(v);
                predictor.push(v);
            }
            Ok(values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::uniform;
    use proptest::prelude::*;

    fn h(w: u16) -> Hypothesis {
        Hypothesis::linear(w, 20.0).unwrap()
    }

    #[test]
    fn passive_layout() {
        let data = uniform(&[1.0, -2.0, 3.0], 20.0);
        let p = encode_packet(&h(1), &data, PacketMode::Passive).unwrap();
        assert!(p.code().is_empty());
        assert_eq!(p.data().len(), 32 * 3);
        assert_eq!(p.total_length(), 32 + 96);
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..4], &[0xA7, 0xE7, 0x01, 0x02]);
        assert_eq!(&bytes[8..12], &[0xff, 0xff, 0xff, 0xfe]);
    }

    #[test]
    fn active_layout() {
        let data = uniform(&[7.0, 7.0], 20.0);
        let p = encode_packet(&h(3), &data, PacketMode::Active).unwrap();
        let bits = p.to_bits();
        assert_eq!(bits.len(), 32 + 56 + 32 + 1);
        let bytes = bits.to_bytes();
        assert_eq!(&bytes[..4], &[0xA7, 0xE7, 0x01, 0x01]);
        // family 1, window 3, step 20.0f32 = 0x41a00000
        assert_eq!(&bytes[4..11], &[0x01, 0x00, 0x03, 0x41, 0xa0, 0x00, 0x00]);
        assert_eq!(&bytes[11..15], &[0, 0, 0, 7]);
        assert_eq!(bytes[15], 0b1000_0000);
        assert_eq!(p.hypothesis().unwrap(), Some(h(3)));
    }

    #[test]
    fn zero_residuals_are_shorter_than_passive() {
        for n in [16usize, 64, 500] {
            let data = uniform(
                &(0..n).map(|i| 40.0 * i as f64 - 300.0).collect::<Vec<_>>(),
                20.0,
            );
            let a = encode_packet(&h(1), &data, PacketMode::Active).unwrap();
            let p = encode_packet(&h(1), &data, PacketMode::Passive).unwrap();
            assert!(a.total_length() < p.total_length());
            assert_eq!(
                a.total_length(),
                super::super::description_length(&h(1), &data).unwrap()
            );
        }
    }

    #[test]
    fn header_errors() {
        let data = uniform(&[1.0, 2.0], 1.0);
        let mut bytes = encode_packet(&h(1), &data, PacketMode::Active)
            .unwrap()
            .to_bytes();
        bytes[0] ^= 0xff;
        assert!(matches!(
            ActivePacket::from_bytes(&bytes),
            Err(PacketError::BadMagic(_))
        ));

        let mut bytes = encode_packet(&h(1), &data, PacketMode::Active)
            .unwrap()
            .to_bytes();
        bytes[2] = 9;
        assert_eq!(
            ActivePacket::from_bytes(&bytes),
            Err(PacketError::BadVersion(9))
        );
        bytes[2] = 1;
        assert_eq!(
            ActivePacket::from_bytes(&bytes[..3]),
            Err(PacketError::Truncated)
        );
        assert_eq!(
            ActivePacket::from_bytes(&bytes[..8]),
            Err(PacketError::Truncated)
        );
        bytes[3] = 3;
        assert_eq!(
            ActivePacket::from_bytes(&bytes),
            Err(PacketError::BadFlags(3))
        );
    }

    #[test]
    fn truncated_payloads() {
        let data = uniform(&[1.0, 50.0, -70.0], 1.0);
        let full = encode_packet(&h(1), &data, PacketMode::Active)
            .unwrap()
            .to_bits();
        // cut into the verbatim first sample
        let p = ActivePacket::from_bits(&full.slice(0, 32 + 56 + 20)).unwrap();
        assert_eq!(decode_packet(&p), Err(PacketError::Truncated));
        // cut into a residual code
        let p = ActivePacket::from_bits(&full.slice(0, full.len() - 2)).unwrap();
        assert_eq!(decode_packet(&p), Err(PacketError::Truncated));

        let passive = encode_packet(&h(1), &data, PacketMode::Passive)
            .unwrap()
            .to_bits();
        let p = ActivePacket::from_bits(&passive.slice(0, passive.len() - 12)).unwrap();
        assert_eq!(decode_packet(&p), Err(PacketError::Truncated));
    }

    #[test]
    fn out_of_range_samples_rejected() {
        let data = uniform(&[3e9], 1.0);
        assert!(matches!(
            encode_packet(&h(1), &data, PacketMode::Passive),
            Err(MdlError::SampleOutOfRange { index: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn roundtrip_both_modes(values in prop::collection::vec(any::<i32>(), 1..200),
                                w in 1u16..40, small in any::<bool>()) {
            let values: Vec<f64> = values.iter()
                .map(|&v| if small { (v % 1000) as f64 } else { v as f64 })
                .collect();
            let data = uniform(&values, 1.0);
            let expect: Vec<i64> = values.iter().map(|&v| v as i64).collect();
            for mode in [PacketMode::Active, PacketMode::Passive] {
                let p = encode_packet(&h(w), &data, mode).unwrap();
                prop_assert_eq!(&decode_packet(&p).unwrap(), &expect);
                let wire = ActivePacket::from_bytes(&p.to_bytes()).unwrap();
                prop_assert_eq!(&decode_packet(&wire).unwrap(), &expect);
            }
        }
    }
}
