//! A small simulated active network.
//!
//! Packets carry either code (an expression plus numeric arguments) or a
//! static decimal payload. A node that receives code can run it and send
//! the result back as data; [`transmit`] accounts what each choice costs
//! on every link and node.

pub mod expr;

use std::collections::BTreeMap;
use std::io::Write;

use serde::Deserialize;
use thiserror::Error;

pub use expr::{decimal_expansion, Expr, ExprError};

pub type NodeId = u32;
pub type LinkId = u32;

const MODE_ALGORITHMIC: u8 = 0x01;
const MODE_STATIC: u8 = 0x02;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("empty packet")]
    Empty,
    #[error("unknown packet mode {0:#04x}")]
    BadMode(u8),
    #[error("truncated packet")]
    Truncated,
    #[error("argument {0} is not finite")]
    NonFiniteArg(usize),
    #[error("payload is not a decimal number")]
    BadPayload,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprPacket {
    Algorithmic { code: Expr, args: Vec<f64> },
    Static { payload: String },
}

impl ExprPacket {
    pub fn algorithmic(code: Expr, args: Vec<f64>) -> Self {
        ExprPacket::Algorithmic { code, args }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, ExprPacket::Static { .. })
    }

    /// Operations a node performs to run this packet (0 for data).
    pub fn op_count(&self) -> usize {
        match self {
            ExprPacket::Algorithmic { code, .. } => code.op_count(),
            ExprPacket::Static { .. } => 0,
        }
    }

    pub fn size_bytes(&self) -> usize {
        match self {
            ExprPacket::Algorithmic { code, args } => 2 + 8 * args.len() + code.encoded_len(),
            ExprPacket::Static { payload } => 5 + payload.len(),
        }
    }

    /// Wire form. Algorithmic: mode, argument count, big-endian f64
    /// arguments, prefix code. Static: mode, u32 payload length, ASCII.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.size_bytes());
        match self {
            ExprPacket::Algorithmic { code, args } => {
                out.push(MODE_ALGORITHMIC);
                out.push(args.len() as u8);
                for a in args {
                    out.extend_from_slice(&a.to_be_bytes());
                }
                code.encode_into(&mut out);
            }
            ExprPacket::Static { payload } => {
                out.push(MODE_STATIC);
                out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
                out.extend_from_slice(payload.as_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PacketError> {
        let (&mode, rest) = bytes.split_first().ok_or(PacketError::Empty)?;
        match mode {
            MODE_ALGORITHMIC => {
                let (&n, mut rest) = rest.split_first().ok_or(PacketError::Truncated)?;
                let mut args = Vec::with_capacity(n as usize);
                for i in 0..n as usize {
                    let Some((raw, tail)) = rest.split_first_chunk::<8>() else {
                        return Err(PacketError::Truncated);
                    };
                    let v = f64::from_be_bytes(*raw);
                    if !v.is_finite() {
                        return Err(PacketError::NonFiniteArg(i));
                    }
                    args.push(v);
                    rest = tail;
                }
                let code = Expr::from_bytes(rest)?;
                Ok(ExprPacket::Algorithmic { code, args })
            }
            MODE_STATIC => {
                let Some((raw, rest)) = rest.split_first_chunk::<4>() else {
                    return Err(PacketError::Truncated);
                };
                let len = u32::from_be_bytes(*raw) as usize;
                if rest.len() < len {
                    return Err(PacketError::Truncated);
                }
                if rest.len() > len {
                    return Err(PacketError::TrailingBytes(rest.len() - len));
                }
                let payload = std::str::from_utf8(rest).map_err(|_| PacketError::BadPayload)?;
                if !is_decimal(payload) {
                    return Err(PacketError::BadPayload);
                }
                Ok(ExprPacket::Static {
                    payload: payload.to_string(),
                })
            }
            other => Err(PacketError::BadMode(other)),
        }
    }
}

fn is_decimal(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.bytes().all(|b| b.is_ascii_digit())
        && !(digits.contains('.') && frac.is_empty())
}

/// Run a packet: code becomes its decimal value truncated to `precision`
/// significant digits; data is returned unchanged.
pub fn evaluate(p: &ExprPacket, precision: usize) -> Result<ExprPacket, ExprError> {
    if precision == 0 {
        return Err(ExprError::ZeroDigits);
    }
    match p {
        ExprPacket::Static { .. } => Ok(p.clone()),
        ExprPacket::Algorithmic { code, args } => {
            let v = code.eval(args)?;
            Ok(ExprPacket::Static {
                payload: decimal_expansion(&v, precision),
            })
        }
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid topology file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate link id {0}")]
    DuplicateLink(LinkId),
    #[error("node {0}: processing rate must be positive and finite")]
    BadRate(NodeId),
    #[error("link {0}: capacity must be positive and finite")]
    BadCapacity(LinkId),
    #[error("link {link} references unknown node {node}")]
    UnknownNode { link: LinkId, node: NodeId },
    #[error("unknown link id {0}")]
    UnknownLink(LinkId),
    #[error("route is empty")]
    EmptyRoute,
    #[error("links {0} and {1} on a route do not share a node")]
    BrokenRoute(LinkId, LinkId),
    #[error("{packets} packets but {routes} routes")]
    RouteCount { packets: usize, routes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    /// Operations per second.
    pub processing_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: LinkId,
    pub endpoints: [NodeId; 2],
    /// Bytes per second.
    pub capacity: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    #[serde(default, rename = "node")]
    nodes: Vec<Node>,
    #[serde(default, rename = "link")]
    links: Vec<Link>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeMap<LinkId, Link>,
}

impl Topology {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, TopologyError> {
        let mut node_map = BTreeMap::new();
        for n in nodes {
            if !(n.processing_rate > 0.0 && n.processing_rate.is_finite()) {
                return Err(TopologyError::BadRate(n.id));
            }
            if node_map.insert(n.id, n).is_some() {
                return Err(TopologyError::DuplicateNode(n.id));
            }
        }
        let mut link_map = BTreeMap::new();
        for l in links {
            if !(l.capacity > 0.0 && l.capacity.is_finite()) {
                return Err(TopologyError::BadCapacity(l.id));
            }
            for node in l.endpoints {
                if !node_map.contains_key(&node) {
                    return Err(TopologyError::UnknownNode { link: l.id, node });
                }
            }
            if link_map.insert(l.id, l).is_some() {
                return Err(TopologyError::DuplicateLink(l.id));
            }
        }
        Ok(Self {
            nodes: node_map,
            links: link_map,
        })
    }

    /// Parse `[[node]]` (id, processing_rate) and `[[link]]` (id,
    /// endpoints, capacity) tables.
    pub fn from_toml_str(s: &str) -> Result<Self, TopologyError> {
        let f: TopologyFile = toml::from_str(s)?;
        Self::new(f.nodes, f.links)
    }

    /// A chain of `capacities.len()` links numbered from 1, node `i - 1`
    /// to node `i` on link `i`.
    pub fn chain(capacities: &[f64], processing_rate: f64) -> Result<Self, TopologyError> {
        let nodes = (0..=capacities.len() as NodeId)
            .map(|id| Node {
                id,
                processing_rate,
            })
            .collect();
        let links = capacities
            .iter()
            .zip(1..)
            .map(|(&capacity, id)| Link {
                id,
                endpoints: [id - 1, id],
                capacity,
            })
            .collect();
        Self::new(nodes, links)
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.links.get(&id)
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.values()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn set_capacity(&mut self, id: LinkId, capacity: f64) -> Result<(), TopologyError> {
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(TopologyError::BadCapacity(id));
        }
        self.links
            .get_mut(&id)
            .ok_or(TopologyError::UnknownLink(id))?
            .capacity = capacity;
        Ok(())
    }

    /// Node sequence visited by a route. A one-link route runs from the
    /// first endpoint to the second; longer routes start at the endpoint
    /// of the first link not shared with the second.
    pub fn walk(&self, route: &[LinkId]) -> Result<Vec<NodeId>, TopologyError> {
        let links: Vec<&Link> = route
            .iter()
            .map(|id| self.links.get(id).ok_or(TopologyError::UnknownLink(*id)))
            .collect::<Result<_, _>>()?;
        let first = links.first().ok_or(TopologyError::EmptyRoute)?;
        let [a, b] = first.endpoints;
        let mut at = match links.get(1) {
            Some(next) if next.endpoints.contains(&a) && !next.endpoints.contains(&b) => b,
            _ => a,
        };
        let mut nodes = vec![at];
        for l in links {
            at = match l.endpoints {
                [x, y] if x == at => y,
                [x, y] if y == at => x,
                _ => {
                    let prev = route[nodes.len() - 2];
                    return Err(TopologyError::BrokenRoute(prev, l.id));
                }
            };
            nodes.push(at);
        }
        Ok(nodes)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkLoad {
    pub load_bytes: u64,
    pub transit_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransmitReport {
    /// Totals over all packets, one row per topology link.
    pub links: BTreeMap<LinkId, LinkLoad>,
    /// Processing seconds charged at each node.
    pub nodes: BTreeMap<NodeId, f64>,
    /// Per-packet contribution to each link it crossed.
    pub per_packet: Vec<BTreeMap<LinkId, LinkLoad>>,
}

/// Route each packet over its link sequence. Every link on the route
/// carries the packet's bytes for `size / capacity` seconds; the node at
/// the end of the route is charged `op_count / processing_rate` to run it.
pub fn transmit(
    topo: &Topology,
    routes: &[Vec<LinkId>],
    packets: &[ExprPacket],
) -> Result<TransmitReport, TopologyError> {
    if routes.len() != packets.len() {
        return Err(TopologyError::RouteCount {
            packets: packets.len(),
            routes: routes.len(),
        });
    }
    let mut report = TransmitReport {
        links: topo.links().map(|l| (l.id, LinkLoad::default())).collect(),
        nodes: topo.nodes().map(|n| (n.id, 0.0)).collect(),
        per_packet: Vec::with_capacity(packets.len()),
    };
    for (route, packet) in routes.iter().zip(packets) {
        let walk = topo.walk(route)?;
        let size = packet.size_bytes() as u64;
        let mut mine = BTreeMap::new();
        for id in route {
            let link = &topo.links[id];
            let t = size as f64 / link.capacity;
            let total = report.links.get_mut(id).expect("every link has a row");
            total.load_bytes += size;
            total.transit_s += t;
            let entry: &mut LinkLoad = mine.entry(*id).or_default();
            entry.load_bytes += size;
            entry.transit_s += t;
        }
        let dst = *walk.last().expect("walk has at least two nodes");
        *report.nodes.get_mut(&dst).expect("walk stays in topology") +=
            packet.op_count() as f64 / topo.nodes[&dst].processing_rate;
        report.per_packet.push(mine);
    }
    Ok(report)
}

/// One row per link: `link_id,load_bytes,transit_s`.
pub fn write_link_csv<W: Write>(w: W, loads: &BTreeMap<LinkId, LinkLoad>) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["link_id", "load_bytes", "transit_s"])?;
    for (id, l) in loads {
        out.write_record([
            id.to_string(),
            l.load_bytes.to_string(),
            l.transit_s.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub const PI_CAPACITIES: [f64; 4] = [100.0, 100.0, 1000.0, 1000.0];
pub const PI_PRECISION: usize = 1000;
pub const PI_PROCESSING_RATE: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PiDemo {
    pub algorithmic: ExprPacket,
    pub result: ExprPacket,
    pub report: TransmitReport,
}

/// The 22/7 demonstration: a code packet `#1 / #2` with arguments 22 and 7
/// travels links 1..4, the far node runs it, and the decimal result comes
/// back over links 4..1.
pub fn pi_demo(topo: &Topology, precision: usize) -> Result<PiDemo, PiDemoError> {
    let code = Expr::div(Expr::Arg(0), Expr::Arg(1));
    let algorithmic = ExprPacket::algorithmic(code, vec![22.0, 7.0]);
    let result = evaluate(&algorithmic, precision)?;
    let routes = vec![vec![1, 2, 3, 4], vec![4, 3, 2, 1]];
    let report = transmit(topo, &routes, &[algorithmic.clone(), result.clone()])?;
    Ok(PiDemo {
        algorithmic,
        result,
        report,
    })
}

#[derive(Debug, Error)]
pub enum PiDemoError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}
