//! Complexity maps of a system's components.
//!
//! Edges carry a complexity density: the cost, per bit, of understanding
//! the component an edge leads into. Low-density paths are easy to attack.
//! Path costs and max-flows are computed exactly over rationals; the
//! densities themselves come in as `f64` and are converted without
//! rounding.

mod solve;
pub mod synth;
mod trace;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num::{BigRational, Signed, Zero};
use serde::Deserialize;
use thiserror::Error;

use crate::complexity::ComplexityError;

pub use solve::{
    export_surface, insecurity_flow, insecurity_levels, levels_from_pairs, max_flow,
    min_complexity_paths, pair_flows, read_flows_csv, read_levels_csv, read_matrix_csv,
    read_surface_csv, write_flows_csv, write_levels_csv, write_matrix_csv, write_surface_csv,
    FlowResult, Height, PairFlow, PathMatrix, SurfaceMode, SurfaceSample,
};
pub use trace::{parse_trace, trace_density, Direction, ObservationTrace};

#[derive(Debug, Error)]
pub enum KmapError {
    #[error("trace for {0:?} has no observations")]
    EmptyTrace(String),
    #[error("malformed trace: {0}")]
    TraceShape(String),
    #[error("trace line {line}: {msg}")]
    TraceParse { line: usize, msg: String },
    #[error("need {want} observation pairs (at least 1), trace has {have}")]
    NotEnoughObservations { have: usize, want: usize },
    #[error("slice {opstart}..{opend} invalid for {total} observed bits")]
    BadSlice {
        opstart: usize,
        opend: usize,
        total: usize,
    },
    #[error("density of {component:?} after {observations} observations: {source}")]
    Density {
        component: String,
        observations: usize,
        source: ComplexityError,
    },
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("start node {0:?} is not in the layout")]
    MissingStart(String),
    #[error("edge {from:?} -> {to:?} enters the start node")]
    EdgeIntoStart { from: String, to: String },
    #[error("self-loop on {0:?}")]
    SelfLoop(String),
    #[error("edge {from:?} -> {to:?} has density {density}, must be positive and finite")]
    BadDensity {
        from: String,
        to: String,
        density: String,
    },
    #[error("node position of {0:?} is not finite")]
    BadPosition(String),
    #[error("source and sink are both {0:?}")]
    SameEndpoints(String),
    #[error("edge {from:?} -> {to:?} needs exactly one of `density` or `trace`")]
    EdgeWeightSpec { from: String, to: String },
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad CSV: {0}")]
    Csv(String),
}

impl From<csv::Error> for KmapError {
    fn from(e: csv::Error) -> Self {
        KmapError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KNode {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

impl KNode {
    pub fn new(id: impl Into<String>, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            x,
            y,
        }
    }
}

/// Where an edge's density comes from.
#[derive(Debug, Clone)]
pub enum EdgeWeight {
    Density(f64),
    Exact(BigRational),
    /// Final density of the trace.
    Trace(ObservationTrace),
}

#[derive(Debug, Clone)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub weight: EdgeWeight,
}

impl EdgeSpec {
    pub fn density(from: &str, to: &str, d: f64) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            weight: EdgeWeight::Density(d),
        }
    }

    pub fn exact(from: &str, to: &str, d: BigRational) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            weight: EdgeWeight::Exact(d),
        }
    }

    pub fn trace(from: &str, to: &str, tr: ObservationTrace) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            weight: EdgeWeight::Trace(tr),
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMapGraph {
    nodes: Vec<KNode>,
    index: BTreeMap<String, usize>,
    start: usize,
    edges: BTreeMap<(usize, usize), BigRational>,
    warnings: Vec<String>,
}

impl KMapGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[KNode] {
        &self.nodes
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.nodes[i].id
    }

    /// Edges keyed by `(from, to)` node index.
    pub fn edges(&self) -> &BTreeMap<(usize, usize), BigRational> {
        &self.edges
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<&BigRational> {
        self.edges.get(&(from, to))
    }

    /// Diagnostics raised while building, e.g. overwritten edges.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

fn exact_density(from: &str, to: &str, w: &EdgeWeight) -> Result<BigRational, KmapError> {
    let bad = |density: String| KmapError::BadDensity {
        from: from.into(),
        to: to.into(),
        density,
    };
    let as_exact = |d: f64| {
        BigRational::from_float(d)
            .filter(|r| r.is_positive())
            .ok_or_else(|| bad(d.to_string()))
    };
    match w {
        EdgeWeight::Density(d) => as_exact(*d),
        EdgeWeight::Exact(r) if r.is_positive() => Ok(r.clone()),
        EdgeWeight::Exact(r) => Err(bad(r.to_string())),
        EdgeWeight::Trace(tr) => as_exact(tr.final_density()?),
    }
}

pub fn build_kmap(
    layout: Vec<KNode>,
    start: &str,
    edges: Vec<EdgeSpec>,
) -> Result<KMapGraph, KmapError> {
    let mut index = BTreeMap::new();
    for (i, n) in layout.iter().enumerate() {
        if !(n.x.is_finite() && n.y.is_finite()) {
            return Err(KmapError::BadPosition(n.id.clone()));
        }
        if index.insert(n.id.clone(), i).is_some() {
            return Err(KmapError::DuplicateNode(n.id.clone()));
        }
    }
    let start_ix = *index
        .get(start)
        .ok_or_else(|| KmapError::MissingStart(start.into()))?;
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| KmapError::UnknownNode(id.into()))
    };

    let mut out = BTreeMap::new();
    let mut warnings = Vec::new();
    for e in &edges {
        let (u, v) = (lookup(&e.from)?, lookup(&e.to)?);
        if v == start_ix {
            return Err(KmapError::EdgeIntoStart {
                from: e.from.clone(),
                to: e.to.clone(),
            });
        }
        if u == v {
            return Err(KmapError::SelfLoop(e.from.clone()));
        }
        let w = exact_density(&e.from, &e.to, &e.weight)?;
        if out.insert((u, v), w).is_some() {
            let msg = format!(
                "edge {} -> {} defined twice; keeping the last",
                e.from, e.to
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(KMapGraph {
        nodes: layout,
        index,
        start: start_ix,
        edges: out,
        warnings,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    start: String,
    #[serde(default, rename = "node")]
    nodes: Vec<NodeEntry>,
    #[serde(default, rename = "edge")]
    edges: Vec<EdgeEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeEntry {
    id: String,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    from: String,
    to: String,
    density: Option<f64>,
    trace: Option<PathBuf>,
    observations: Option<usize>,
    opstart: Option<usize>,
    opend: Option<usize>,
}

/// Parse a graph description. Trace paths are resolved against
/// `base_dir`.
///
/// ```toml
/// start = "START"
/// [[node]]
/// id = "START"
/// x = 0.0
/// y = 0.0
/// [[edge]]
/// from = "START"
/// to = "E"
/// trace = "e.trace"   # or: density = 0.3
/// ```
pub fn graph_from_toml_str(text: &str, base_dir: &Path) -> Result<KMapGraph, KmapError> {
    let file: GraphFile = toml::from_str(text)?;
    let layout = file
        .nodes
        .into_iter()
        .map(|n| KNode::new(n.id, n.x, n.y))
        .collect();
    let mut edges = Vec::with_capacity(file.edges.len());
    for e in file.edges {
        let weight = match (e.density, &e.trace) {
            (Some(d), None)
                if e.observations.is_none() && e.opstart.is_none() && e.opend.is_none() =>
            {
                EdgeWeight::Density(d)
            }
            (None, Some(p)) => EdgeWeight::Trace(load_trace_entry(&e, &base_dir.join(p))?),
            _ => {
                return Err(KmapError::EdgeWeightSpec {
                    from: e.from,
                    to: e.to,
                })
            }
        };
        edges.push(EdgeSpec {
            from: e.from,
            to: e.to,
            weight,
        });
    }
    build_kmap(layout, &file.start, edges)
}

fn load_trace_entry(e: &EdgeEntry, path: &Path) -> Result<ObservationTrace, KmapError> {
    let text = std::fs::read_to_string(path).map_err(|source| KmapError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut tr = parse_trace(&e.to, &text)?;
    if let Some(k) = e.observations {
        if k == 0 || k > tr.pairs() {
            return Err(KmapError::NotEnoughObservations {
                have: tr.pairs(),
                want: k,
            });
        }
        let records = tr.records()[..2 * k].to_vec();
        tr = ObservationTrace::new(&e.to, records)?;
    }
    match (e.opstart, e.opend) {
        (None, None) => Ok(tr),
        (start, end) => {
            let total = tr.total_bits();
            tr.with_slice(start.unwrap_or(0), end.unwrap_or(total))
        }
    }
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<KMapGraph, KmapError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| KmapError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    graph_from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Exact rational as the nearest `f64`.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    use num::ToPrimitive;
    if r.is_zero() {
        return 0.0;
    }
    r.to_f64().unwrap_or(f64::NAN)
}
