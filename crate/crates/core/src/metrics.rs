//! Series derived from an engine trace, and the complexity/error join.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::complexity::{windowed_complexity, ComplexityError, EntropyEstimator, FixedWidthCodec};
use crate::engine::{Event, EventTrace, Sign, Time, Verdict};
use crate::series::TimedSample;
use crate::stats::spearman;

pub const TOLERANCE: &str = "tolerance";
pub const OUT_OF_TOLERANCE: &str = "out_of_tolerance_proportion";
pub const PREDICTION_ERROR: &str = "prediction_error";
pub const LOOKAHEAD: &str = "expected_lookahead";
pub const SPEEDUP: &str = "speedup";
pub const VIRTUAL_MESSAGES: &str = "virtual_messages";
pub const ANTI_MESSAGES: &str = "anti_messages";
pub const TASK_TIME: &str = "task_time";
pub const ROLLBACKS: &str = "rollbacks";

/// Every series [`derive_metrics`] produces, in output order.
pub const SERIES_NAMES: [&str; 9] = [
    TOLERANCE,
    OUT_OF_TOLERANCE,
    PREDICTION_ERROR,
    LOOKAHEAD,
    SPEEDUP,
    VIRTUAL_MESSAGES,
    ANTI_MESSAGES,
    TASK_TIME,
    ROLLBACKS,
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("incomplete trace: {0}")]
    Incomplete(String),
    #[error("need at least 3 windows with data, got {0}")]
    InsufficientData(usize),
    #[error("window length must be positive")]
    BadWindow,
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub name: &'static str,
    /// `(wallclock_s, value)`, strictly increasing in wallclock.
    pub samples: Vec<(f64, f64)>,
}

impl MetricSeries {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            samples: Vec::new(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    /// Mean of the samples in each `interval`-second bucket, stamped with
    /// the bucket start. Empty buckets are skipped.
    pub fn interval_means(&self, interval: f64) -> Vec<(f64, f64)> {
        let mut buckets: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for &(t, v) in &self.samples {
            let b = buckets.entry((t / interval).floor() as i64).or_default();
            b.0 += v;
            b.1 += 1;
        }
        buckets
            .into_iter()
            .map(|(k, (sum, n))| (k as f64 * interval, sum / n as f64))
            .collect()
    }
}

/// Build the nine metric series from a trace. Per-process series follow
/// the trace's metric node; message, rollback and cost series cover all
/// processes.
pub fn derive_metrics(trace: &EventTrace) -> Result<Vec<MetricSeries>, MetricsError> {
    let p = &trace.params;
    let node = p.metric_node;
    let interval = p.report_interval;

    let mut lvt_at: BTreeMap<Time, Time> = BTreeMap::new();
    for e in &trace.events {
        if let Event::Snapshot { tick, process, lvt } = *e {
            if process == node {
                lvt_at.insert(tick, lvt);
            }
        }
    }
    if let Some(missing) = (0..p.duration).find(|t| !lvt_at.contains_key(t)) {
        return Err(MetricsError::Incomplete(format!(
            "no snapshot of process {node} at tick {missing}"
        )));
    }

    let mut tolerance = MetricSeries::new(TOLERANCE);
    let mut proportion = MetricSeries::new(OUT_OF_TOLERANCE);
    let mut error = MetricSeries::new(PREDICTION_ERROR);
    let mut lookahead = MetricSeries::new(LOOKAHEAD);
    let mut speedup = MetricSeries::new(SPEEDUP);
    let mut virtual_messages = MetricSeries::new(VIRTUAL_MESSAGES);
    let mut anti_messages = MetricSeries::new(ANTI_MESSAGES);
    let mut task_time = MetricSeries::new(TASK_TIME);
    let mut rollbacks = MetricSeries::new(ROLLBACKS);

    let mut by_tick: BTreeMap<Time, Vec<&Event>> = BTreeMap::new();
    for e in &trace.events {
        by_tick.entry(e.tick()).or_default().push(e);
    }

    let mut theta = p.tolerance_start;
    let (mut sent, mut antis, mut rolled) = (0u64, 0u64, 0u64);
    // (verifies, out of tolerance) and (cost sum, events) per interval
    let mut verdicts: BTreeMap<Time, (u32, u32)> = BTreeMap::new();
    let mut costs: BTreeMap<Time, (f64, u32)> = BTreeMap::new();
    for tick in 0..p.duration {
        for e in by_tick.get(&tick).map(Vec::as_slice).unwrap_or_default() {
            match **e {
                Event::Tighten { tolerance, .. } => {
                    theta = tolerance;
                    antis = 0;
                }
                Event::Send { msg, .. } => match msg.sign {
                    Sign::Positive => sent += 1,
                    Sign::Anti => antis += 1,
                },
                Event::Rollback { .. } => rolled += 1,
                Event::Process { cost, .. } => {
                    let c = costs.entry(tick / interval).or_default();
                    c.0 += cost;
                    c.1 += 1;
                }
                Event::Verify {
                    lp,
                    actual,
                    predicted,
                    verdict,
                    ..
                } if lp == node => {
                    let v = verdicts.entry(tick / interval).or_default();
                    v.0 += 1;
                    if verdict == Verdict::OutOfTolerance {
                        v.1 += 1;
                    }
                    if let Some(pred) = predicted {
                        error.samples.push((tick as f64, pred - actual));
                    }
                }
                _ => {}
            }
        }
        let t = tick as f64;
        // A process behind wallclock has no lookahead.
        let lvt = lvt_at[&tick].max(tick);
        tolerance.samples.push((t, theta));
        lookahead.samples.push((t, (lvt - tick) as f64));
        if tick > 0 {
            speedup.samples.push((t, lvt as f64 / t));
        }
        virtual_messages.samples.push((t, sent as f64));
        anti_messages.samples.push((t, antis as f64));
        rollbacks.samples.push((t, rolled as f64));
    }
    for (k, (n, out)) in verdicts {
        proportion
            .samples
            .push(((k * interval) as f64, out as f64 / n as f64));
    }
    for (k, (sum, n)) in costs {
        task_time
            .samples
            .push(((k * interval) as f64, sum / n as f64));
    }

    Ok(vec![
        tolerance,
        proportion,
        error,
        lookahead,
        speedup,
        virtual_messages,
        anti_messages,
        task_time,
        rollbacks,
    ])
}

pub fn find<'a>(series: &'a [MetricSeries], name: &str) -> Option<&'a MetricSeries> {
    series.iter().find(|s| s.name == name)
}

/// `wallclock_s,value` rows.
pub fn write_series_csv<W: Write>(w: W, s: &MetricSeries) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["wallclock_s", "value"])?;
    for (t, v) in &s.samples {
        out.write_record([t.to_string(), v.to_string()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Write `<name>.csv` for every series into `dir`; returns the paths.
pub fn write_all_csv(dir: &Path, series: &[MetricSeries]) -> Result<Vec<PathBuf>, MetricsError> {
    series
        .iter()
        .map(|s| {
            let path = dir.join(format!("{}.csv", s.name));
            let file = fs::File::create(&path).map_err(|source| MetricsError::Io {
                path: path.clone(),
                source,
            })?;
            write_series_csv(std::io::BufWriter::new(file), s)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinRow {
    pub window_start: f64,
    pub density: f64,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityErrorJoin {
    pub rows: Vec<JoinRow>,
    /// Spearman correlation of density against mean |error|; absent when
    /// either side is constant.
    pub rho: Option<f64>,
}

/// Pair each `window`-second stretch of the workload's complexity density
/// with the mean |prediction error| observed in the same stretch. Windows
/// start at the first workload sample; windows without error samples, and
/// a trailing partial window, are dropped.
pub fn complexity_error_join(
    workload: &[TimedSample],
    errors: &MetricSeries,
    window: f64,
) -> Result<ComplexityErrorJoin, MetricsError> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(MetricsError::BadWindow);
    }
    let Some(first) = workload.first() else {
        return Err(MetricsError::InsufficientData(0));
    };
    let t0 = first.t;
    let last = workload.last().expect("non-empty").t;
    let codec = FixedWidthCodec::default();
    let mut rows = Vec::new();
    let mut k = 0.0;
    while t0 + (k + 1.0) * window <= last + 1.0 {
        let (lo, hi) = (t0 + k * window, t0 + (k + 1.0) * window);
        k += 1.0;
        let values: Vec<f64> = workload
            .iter()
            .filter(|s| s.t >= lo && s.t < hi)
            .map(|s| s.value)
            .collect();
        let errs: Vec<f64> = errors
            .samples
            .iter()
            .filter(|(t, _)| *t >= lo && *t < hi)
            .map(|(_, e)| e.abs())
            .collect();
        if values.is_empty() || errs.is_empty() {
            continue;
        }
        let est = windowed_complexity(&values, values.len(), &codec, &EntropyEstimator)?;
        rows.push(JoinRow {
            window_start: lo,
            density: est[0].density,
            mean_abs_error: errs.iter().sum::<f64>() / errs.len() as f64,
        });
    }
    if rows.len() < 3 {
        return Err(MetricsError::InsufficientData(rows.len()));
    }
    let d: Vec<f64> = rows.iter().map(|r| r.density).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.mean_abs_error).collect();
    Ok(ComplexityErrorJoin {
        rho: spearman(&d, &e),
        rows,
    })
}

/// `window_start_s,density,mean_abs_error` rows.
pub fn write_join_csv<W: Write>(w: W, join: &ComplexityErrorJoin) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["window_start_s", "density", "mean_abs_error"])?;
    for r in &join.rows {
        out.write_record([
            r.window_start.to_string(),
            r.density.to_string(),
            r.mean_abs_error.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
