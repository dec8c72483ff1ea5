use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Time, Workload};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid override {0:?}: expected key=value")]
    BadOverride(String),
    #[error("override {key:?}: {reason}")]
    OverridePath { key: String, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("workload {path}: {reason}")]
    Workload { path: PathBuf, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Sliding lookahead window, seconds.
    pub lookahead: Time,
    /// Prediction step, seconds.
    pub step: Time,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            lookahead: 200,
            step: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    /// Initial tolerance, messages/second. `inf` disables rollback on error.
    pub start: f64,
    /// Multiplier applied at each tightening.
    pub factor: f64,
    /// Seconds between tightenings.
    pub interval: Time,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            start: 500.0,
            factor: 0.8,
            interval: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Chain length including the driving process.
    pub nodes: u32,
    /// Virtual seconds per link.
    pub latency: Time,
    /// Logical process whose series the metrics report; defaults to the
    /// last one.
    pub metric_node: Option<u32>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            nodes: 5,
            latency: 1,
            metric_node: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypothesisConfig {
    /// Running-mean width of the driving process predictor.
    pub window: u16,
}

impl Default for HypothesisConfig {
    fn default() -> Self {
        Self { window: 32 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Wallclock seconds to simulate.
    pub duration: Time,
    /// Virtual messages per real observation.
    pub ratio: f64,
    /// Emission cap in messages per millisecond.
    pub generation_rate: f64,
    pub fossil_collection: bool,
    /// Seconds per reporting interval for interval metrics.
    pub report_interval: Time,
    /// Fixed part of the per-event cost proxy.
    pub cost_base: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            duration: 3600,
            ratio: 1.0,
            generation_rate: 0.5,
            fossil_collection: true,
            report_interval: 30,
            cost_base: 200.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub window: WindowConfig,
    pub tolerance: ToleranceConfig,
    pub topology: TopologyConfig,
    pub hypothesis: HypothesisConfig,
    pub workload: Workload,
    pub seed: SeedConfig,
    pub engine: EngineConfig,
    /// Directory relative workload paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        Self::with_overrides(s, &[])
    }

    /// Parse, apply `key=value` overrides (dotted keys), then validate.
    pub fn with_overrides(s: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut table: toml::Table = toml::from_str(s)?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| ScenarioError::BadOverride(o.clone()))?;
            apply_override(&mut table, key.trim(), value.trim())?;
        }
        let scenario: Scenario = table.try_into()?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut s = Self::with_overrides(&text, overrides)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn lp_count(&self) -> u32 {
        self.topology.nodes - 1
    }

    pub fn metric_node(&self) -> u32 {
        self.topology.metric_node.unwrap_or(self.lp_count())
    }

    /// Maximum messages the driving process may send in one 1 s tick.
    pub fn rate_cap(&self) -> usize {
        (self.engine.generation_rate * 1000.0).floor() as usize
    }

    pub fn workload_values(&self) -> Result<Vec<f64>, ScenarioError> {
        self.workload.generate(
            self.engine.duration,
            self.seed.value,
            self.base_dir.as_deref(),
        )
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Invalid(msg));
        let w = &self.window;
        if !(w.lookahead > w.step && w.step > 0) {
            return fail(format!(
                "need lookahead > step > 0, got {} and {}",
                w.lookahead, w.step
            ));
        }
        let t = &self.tolerance;
        if t.start.is_nan() || t.start <= 0.0 {
            return fail("tolerance.start must be positive".into());
        }
        if !(t.factor > 0.0 && t.factor <= 1.0) {
            return fail("tolerance.factor must be in (0, 1]".into());
        }
        if t.interval < 1 {
            return fail("tolerance.interval must be at least 1".into());
        }
        let top = &self.topology;
        if top.nodes < 2 {
            return fail("topology.nodes must be at least 2".into());
        }
        if top.latency < 0 {
            return fail("topology.latency must be non-negative".into());
        }
        if let Some(m) = top.metric_node {
            if m < 1 || m >= top.nodes {
                return fail(format!("topology.metric_node must be in 1..{}", top.nodes));
            }
        }
        if self.hypothesis.window < 1 {
            return fail("hypothesis.window must be at least 1".into());
        }
        let e = &self.engine;
        if e.duration < 1 {
            return fail("engine.duration must be at least 1".into());
        }
        if !(e.ratio.is_finite() && e.ratio >= 0.0) {
            return fail("engine.ratio must be finite and non-negative".into());
        }
        if !(e.generation_rate.is_finite() && e.generation_rate > 0.0) {
            return fail("engine.generation_rate must be positive".into());
        }
        if e.report_interval < 1 {
            return fail("engine.report_interval must be at least 1".into());
        }
        if !(e.cost_base.is_finite() && e.cost_base >= 0.0) {
            return fail("engine.cost_base must be finite and non-negative".into());
        }
        self.workload.validate()
    }
}

/// Set a dotted key in a TOML table. The value is read as a TOML value
/// when it parses as one and as a plain string otherwise.
pub fn apply_override(
    table: &mut toml::Table,
    key: &str,
    value: &str,
) -> Result<(), ScenarioError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ScenarioError::BadOverride(format!("{key}={value}")));
    }
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in path {
        let next = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| ScenarioError::OverridePath {
                key: key.to_string(),
                reason: format!("{p} is not a table"),
            })?;
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}
