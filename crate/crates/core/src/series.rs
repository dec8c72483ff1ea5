//! Timed sample series and their CSV form (`time_s,value`).

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {what} is not finite")]
    NonFinite { row: usize, what: &'static str },
    #[error("row {row}: time {t} does not increase past {prev}")]
    NotIncreasing { row: usize, t: f64, prev: f64 },
}

/// One observation: time in seconds and a value (load in messages/second,
/// or any real quantity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample {
    #[serde(rename = "time_s")]
    pub t: f64,
    pub value: f64,
}

impl TimedSample {
    pub fn new(t: f64, value: f64) -> Self {
        Self { t, value }
    }
}

/// Samples at `t = i * step` for each value.
pub fn uniform(values: &[f64], step: f64) -> Vec<TimedSample> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| TimedSample::new(i as f64 * step, v))
        .collect()
}

pub fn values(series: &[TimedSample]) -> Vec<f64> {
    series.iter().map(|s| s.value).collect()
}

/// Check that every field is finite and time strictly increases.
pub fn validate(series: &[TimedSample]) -> Result<(), SeriesError> {
    let mut prev: Option<f64> = None;
    for (row, s) in series.iter().enumerate() {
        if !s.t.is_finite() {
            return Err(SeriesError::NonFinite {
                row,
                what: "time_s",
            });
        }
        if !s.value.is_finite() {
            return Err(SeriesError::NonFinite { row, what: "value" });
        }
        if let Some(p) = prev {
            if s.t <= p {
                return Err(SeriesError::NotIncreasing {
                    row,
                    t: s.t,
                    prev: p,
                });
            }
        }
        prev = Some(s.t);
    }
    Ok(())
}

/// Parse `time_s,value` CSV with a header row.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<TimedSample>, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let series = rdr.deserialize().collect::<Result<Vec<TimedSample>, _>>()?;
    validate(&series)?;
    Ok(series)
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Vec<TimedSample>, SeriesError> {
    read_csv(std::fs::File::open(path)?)
}

pub fn write_csv<W: Write>(writer: W, series: &[TimedSample]) -> Result<(), SeriesError> {
    let mut w = csv::Writer::from_writer(writer);
    for s in series {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}
