//! Component I/O observations and their complexity densities.
//!
//! Trace files hold one record per line: `IN <hex>` or `OUT <hex>`.
//! Blank lines and anything after `#` are ignored. Records must alternate
//! starting with `IN`, so every input is paired with the output it caused.

use std::fmt::Write as _;

use crate::bits::BitString;
use crate::complexity::complexity_density;

use super::KmapError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::In => "IN",
            Direction::Out => "OUT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTrace {
    component: String,
    records: Vec<(Direction, BitString)>,
    slice: Option<(usize, usize)>,
}

impl ObservationTrace {
    pub fn new(
        component: impl Into<String>,
        records: Vec<(Direction, BitString)>,
    ) -> Result<Self, KmapError> {
        for (i, (dir, _)) in records.iter().enumerate() {
            let want = if i % 2 == 0 {
                Direction::In
            } else {
                Direction::Out
            };
            if *dir != want {
                return Err(KmapError::TraceShape(format!(
                    "record {} is {}, expected {}",
                    i + 1,
                    dir.tag(),
                    want.tag()
                )));
            }
        }
        if records.len() % 2 == 1 {
            return Err(KmapError::TraceShape("final IN has no OUT".into()));
        }
        Ok(Self {
            component: component.into(),
            records,
            slice: None,
        })
    }

    /// Build from `(input, output)` byte pairs.
    pub fn from_pairs(component: impl Into<String>, pairs: &[(Vec<u8>, Vec<u8>)]) -> Self {
        let records = pairs
            .iter()
            .flat_map(|(i, o)| {
                [
                    (Direction::In, BitString::from_bytes(i)),
                    (Direction::Out, BitString::from_bytes(o)),
                ]
            })
            .collect();
        Self {
            component: component.into(),
            records,
            slice: None,
        }
    }

    /// Restrict every measurement to bits `opstart..opend` of the
    /// concatenated observations.
    pub fn with_slice(mut self, opstart: usize, opend: usize) -> Result<Self, KmapError> {
        let total = self.total_bits();
        if opstart >= opend || opend > total {
            return Err(KmapError::BadSlice {
                opstart,
                opend,
                total,
            });
        }
        self.slice = Some((opstart, opend));
        Ok(self)
    }

    pub fn component(&self) -> &str {
        &self.component
    }

    pub fn records(&self) -> &[(Direction, BitString)] {
        &self.records
    }

    pub fn slice(&self) -> Option<(usize, usize)> {
        self.slice
    }

    /// Number of IN/OUT pairs.
    pub fn pairs(&self) -> usize {
        self.records.len() / 2
    }

    pub fn total_bits(&self) -> usize {
        self.records.iter().map(|(_, b)| b.len()).sum()
    }

    /// The first `n` pairs concatenated, with the slice applied.
    pub fn observed_bits(&self, n: usize) -> BitString {
        let mut out = BitString::new();
        for (_, b) in &self.records[..2 * n.min(self.pairs())] {
            out.extend_from(b);
        }
        match self.slice {
            Some((start, end)) => out.slice(start, end),
            None => out,
        }
    }

    /// Density of the first `n` pairs for `n = 1..=k`.
    pub fn density_series(&self, k: usize) -> Result<Vec<f64>, KmapError> {
        if self.records.is_empty() {
            return Err(KmapError::EmptyTrace(self.component.clone()));
        }
        if k == 0 || k > self.pairs() {
            return Err(KmapError::NotEnoughObservations {
                have: self.pairs(),
                want: k,
            });
        }
        (1..=k)
            .map(|n| {
                complexity_density(&self.observed_bits(n)).map_err(|e| KmapError::Density {
                    component: self.component.clone(),
                    observations: n,
                    source: e,
                })
            })
            .collect()
    }

    /// Density of every pair together.
    pub fn final_density(&self) -> Result<f64, KmapError> {
        let k = self.pairs();
        Ok(*self
            .density_series(k)?
            .last()
            .expect("density_series returns k values"))
    }

    /// Serialize to the line format read by [`parse_trace`].
    pub fn to_text(&self) -> Result<String, KmapError> {
        let mut out = String::new();
        for (i, (dir, bits)) in self.records.iter().enumerate() {
            if bits.len() % 8 != 0 {
                return Err(KmapError::TraceShape(format!(
                    "record {} has {} bits, not a whole number of bytes",
                    i + 1,
                    bits.len()
                )));
            }
            let _ = writeln!(out, "{} {}", dir.tag(), hex::encode(bits.to_bytes()));
        }
        Ok(out)
    }
}

/// Component density series; see [`ObservationTrace::density_series`].
pub fn trace_density(tr: &ObservationTrace, k: usize) -> Result<Vec<f64>, KmapError> {
    tr.density_series(k)
}

pub fn parse_trace(component: &str, text: &str) -> Result<ObservationTrace, KmapError> {
    let mut records = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| KmapError::TraceParse { line: no + 1, msg };
        let mut parts = line.split_whitespace();
        let dir = match parts.next() {
            Some("IN") => Direction::In,
            Some("OUT") => Direction::Out,
            Some(other) => return Err(bad(format!("unknown direction {other:?}"))),
            None => unreachable!("line is not empty"),
        };
        let payload = parts.next().unwrap_or("");
        if parts.next().is_some() {
            return Err(bad("more than one payload field".into()));
        }
        let bytes = hex::decode(payload).map_err(|e| bad(e.to_string()))?;
        records.push((dir, BitString::from_bytes(&bytes)));
    }
    ObservationTrace::new(component, records)
}
