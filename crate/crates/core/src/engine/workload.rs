use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ScenarioError, Time};
use crate::series;

/// Real load seen by the driving process, one sample per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Workload {
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// `base + Σ amplitude·sin(2πt / period)` plus Gaussian noise.
    Sine {
        base: f64,
        /// `[amplitude, period_s]` pairs.
        components: Vec<[f64; 2]>,
        #[serde(default)]
        noise: f64,
    },
    /// Segments of `segment` seconds, alternately the constant value and
    /// uniform random integers in `[0, high)`.
    Alternating {
        segment: Time,
        #[serde(default)]
        constant: f64,
        high: f64,
    },
    /// `time_s,value` CSV, held constant between samples.
    Csv {
        path: PathBuf,
    },
}

impl Default for Workload {
    fn default() -> Self {
        Workload::Sine {
            base: 2000.0,
            components: vec![[800.0, 900.0], [300.0, 170.0]],
            noise: 60.0,
        }
    }
}

impl Workload {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::Invalid(format!("workload: {msg}")));
        match self {
            Workload::Linear { intercept, slope }
                if !(intercept.is_finite() && slope.is_finite()) =>
            {
                bad("linear coefficients must be finite")
            }
            Workload::Sine {
                base,
                components,
                noise,
            } => {
                if !base.is_finite() || !(noise.is_finite() && *noise >= 0.0) {
                    return bad("sine base and noise must be finite, noise non-negative");
                }
                if components
                    .iter()
                    .any(|[a, p]| !a.is_finite() || !(p.is_finite() && *p > 0.0))
                {
                    return bad("sine components need finite amplitudes and positive periods");
                }
                Ok(())
            }
            Workload::Alternating {
                segment,
                constant,
                high,
            } => {
                if *segment < 1 || !constant.is_finite() || !(high.is_finite() && *high >= 1.0) {
                    return bad("alternating needs segment >= 1 and high >= 1");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Samples for `t = 0..duration`. Relative CSV paths resolve against
    /// `base_dir`.
    pub fn generate(
        &self,
        duration: Time,
        seed: u64,
        base_dir: Option<&Path>,
    ) -> Result<Vec<f64>, ScenarioError> {
        self.validate()?;
        let n = duration.max(0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match self {
            Workload::Linear { intercept, slope } => {
                (0..n).map(|t| intercept + slope * t as f64).collect()
            }
            Workload::Sine {
                base,
                components,
                noise,
            } => {
                let normal = Normal::new(0.0, *noise).expect("validated noise");
                (0..n)
                    .map(|t| {
                        let t = t as f64;
                        let wave: f64 = components
                            .iter()
                            .map(|[a, p]| a * (TAU * t / p).sin())
                            .sum();
                        base + wave + normal.sample(&mut rng)
                    })
                    .collect()
            }
            Workload::Alternating {
                segment,
                constant,
                high,
            } => (0..n)
                .map(|t| {
                    if (t as Time / segment) % 2 == 0 {
                        *constant
                    } else {
                        rng.random_range(0.0..*high).floor()
                    }
                })
                .collect(),
            Workload::Csv { path } => {
                let path = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let samples =
                    series::read_csv_path(&path).map_err(|e| ScenarioError::Workload {
                        path: path.clone(),
                        reason: e.to_string(),
                    })?;
                hold(&samples, n).ok_or_else(|| ScenarioError::Workload {
                    path,
                    reason: "no sample at or before t = 0".into(),
                })?
            }
        })
    }
}

/// Zero-order hold onto integer seconds.
fn hold(samples: &[series::TimedSample], n: usize) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut current = None;
    for t in 0..n {
        while i < samples.len() && samples[i].t <= t as f64 {
            current = Some(samples[i].value);
            i += 1;
        }
        out.push(current?);
    }
    Some(out)
}
