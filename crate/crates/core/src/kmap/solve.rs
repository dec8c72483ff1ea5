//! Path costs, insecurity flows and surface export over a [`KMapGraph`].

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num::{BigRational, One, Signed, Zero};

use super::{rational_to_f64, KMapGraph, KmapError};

/// All-pairs minimum path cost; `None` is unreachable.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMatrix {
    cost: Vec<Vec<Option<BigRational>>>,
}

impl PathMatrix {
    pub fn len(&self) -> usize {
        self.cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost.is_empty()
    }

    pub fn get(&self, from: usize, to: usize) -> Option<&BigRational> {
        self.cost[from][to].as_ref()
    }

    pub fn rows(&self) -> &[Vec<Option<BigRational>>] {
        &self.cost
    }
}

/// Floyd–Warshall over exact densities.
pub fn min_complexity_paths(g: &KMapGraph) -> PathMatrix {
    let n = g.len();
    let mut cost: Vec<Vec<Option<BigRational>>> = vec![vec![None; n]; n];
    for (i, row) in cost.iter_mut().enumerate() {
        row[i] = Some(BigRational::zero());
    }
    for (&(u, v), w) in g.edges() {
        cost[u][v] = Some(w.clone());
    }
    #[allow(clippy::needless_range_loop)]
    for k in 0..n {
        for i in 0..n {
            let Some(ik) = cost[i][k].clone() else {
                continue;
            };
            for j in 0..n {
                let Some(kj) = &cost[k][j] else {
                    continue;
                };
                let via = &ik + kj;
                if cost[i][j].as_ref().is_none_or(|cur| via < *cur) {
                    cost[i][j] = Some(via);
                }
            }
        }
    }
    PathMatrix { cost }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub value: BigRational,
    /// Flow on every edge of the graph, keyed by `(from, to)`.
    pub edges: BTreeMap<(usize, usize), BigRational>,
}

/// Edmonds–Karp max-flow from `s` to `t` with capacity `1 / density`.
pub fn max_flow(g: &KMapGraph, s: usize, t: usize) -> Result<FlowResult, KmapError> {
    let n = g.len();
    for ix in [s, t] {
        if ix >= n {
            return Err(KmapError::UnknownNode(format!("#{ix}")));
        }
    }
    if s == t {
        return Err(KmapError::SameEndpoints(g.id(s).into()));
    }
    let mut cap = vec![vec![BigRational::zero(); n]; n];
    let mut adj = vec![Vec::new(); n];
    for (&(u, v), w) in g.edges() {
        cap[u][v] = capacity(w);
        adj[u].push(v);
        adj[v].push(u);
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    // Skew-symmetric: flow[v][u] == -flow[u][v].
    let mut flow = vec![vec![BigRational::zero(); n]; n];
    let mut value = BigRational::zero();
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for &v in &adj[u] {
                if parent[v] == usize::MAX && cap[u][v] > flow[u][v] {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            break;
        }
        let mut bottleneck: Option<BigRational> = None;
        let mut v = t;
        while v != s {
            let u = parent[v];
            let r = &cap[u][v] - &flow[u][v];
            if bottleneck.as_ref().is_none_or(|b| r < *b) {
                bottleneck = Some(r);
            }
            v = u;
        }
        let b = bottleneck.expect("path has at least one edge");
        let mut v = t;
        while v != s {
            let u = parent[v];
            flow[u][v] += &b;
            flow[v][u] -= &b;
            v = u;
        }
        value += b;
    }
    let edges = g
        .edges()
        .keys()
        .map(|&(u, v)| {
            let f = &flow[u][v];
            let f = if f.is_positive() {
                f.clone()
            } else {
                BigRational::zero()
            };
            ((u, v), f)
        })
        .collect();
    Ok(FlowResult { value, edges })
}

/// Max insecurity flow between two named nodes.
pub fn insecurity_flow(g: &KMapGraph, s: &str, t: &str) -> Result<FlowResult, KmapError> {
    let ix = |id: &str| {
        g.index_of(id)
            .ok_or_else(|| KmapError::UnknownNode(id.into()))
    };
    max_flow(g, ix(s)?, ix(t)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairFlow {
    pub from: usize,
    pub to: usize,
    pub value: BigRational,
}

/// Max-flow value for every ordered pair of distinct nodes, each computed
/// on its own.
pub fn pair_flows(g: &KMapGraph) -> Vec<PairFlow> {
    let n = g.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for from in 0..n {
        for to in 0..n {
            if from != to {
                let value = max_flow(g, from, to).expect("indices are in range").value;
                out.push(PairFlow { from, to, value });
            }
        }
    }
    out
}

/// Sum of max-flow values into and out of each node.
pub fn levels_from_pairs(n: usize, pairs: &[PairFlow]) -> Vec<BigRational> {
    let mut level = vec![BigRational::zero(); n];
    for p in pairs {
        level[p.from] += &p.value;
        level[p.to] += &p.value;
    }
    level
}

pub fn insecurity_levels(g: &KMapGraph) -> Vec<BigRational> {
    levels_from_pairs(g.len(), &pair_flows(g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Height {
    Finite(f64),
    Infinite,
}

impl Height {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Height::Finite(h) => Some(*h),
            Height::Infinite => None,
        }
    }

    fn of(cost: Option<&BigRational>) -> Self {
        cost.map_or(Height::Infinite, |c| Height::Finite(rational_to_f64(c)))
    }
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Height::Finite(h) => write!(f, "{h}"),
            Height::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Height {
    type Err = KmapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "inf" {
            return Ok(Height::Infinite);
        }
        s.parse::<f64>()
            .ok()
            .filter(|h| h.is_finite())
            .map(Height::Finite)
            .ok_or_else(|| KmapError::Csv(format!("bad height {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceMode {
    /// Cheapest path cost from START; START itself is infinite.
    PathHeight,
    /// Negated insecurity level, so insecure nodes sit low.
    FlowLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub node: String,
    pub x: f64,
    pub y: f64,
    pub height: Height,
}

/// One sample per node at its layout position.
pub fn export_surface(g: &KMapGraph, mode: SurfaceMode) -> Vec<SurfaceSample> {
    let heights: Vec<Height> = match mode {
        SurfaceMode::PathHeight => {
            let m = min_complexity_paths(g);
            (0..g.len())
                .map(|v| {
                    if v == g.start() {
                        Height::Infinite
                    } else {
                        Height::of(m.get(g.start(), v))
                    }
                })
                .collect()
        }
        SurfaceMode::FlowLevel => insecurity_levels(g)
            .iter()
            .map(|l| Height::Finite(rational_to_f64(&-l)))
            .collect(),
    };
    g.nodes()
        .iter()
        .zip(heights)
        .map(|(n, height)| SurfaceSample {
            node: n.id.clone(),
            x: n.x,
            y: n.y,
            height,
        })
        .collect()
}

/// Header `node,<id>...`; one row per source node; `inf` when unreachable.
pub fn write_matrix_csv<W: Write>(g: &KMapGraph, m: &PathMatrix, w: W) -> Result<(), KmapError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["node".to_string()];
    header.extend(g.nodes().iter().map(|n| n.id.clone()));
    out.write_record(&header)?;
    for (i, row) in m.rows().iter().enumerate() {
        let mut rec = vec![g.id(i).to_string()];
        rec.extend(row.iter().map(|c| Height::of(c.as_ref()).to_string()));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| KmapError::Csv(e.to_string()))
}

/// Node ids and the cost rows written by [`write_matrix_csv`].
pub fn read_matrix_csv<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<Height>>), KmapError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("node") {
        return Err(KmapError::Csv(
            "matrix header must start with `node`".into(),
        ));
    }
    let ids: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.get(0) != ids.get(i).map(String::as_str) {
            return Err(KmapError::Csv(format!("row {} is out of order", i + 1)));
        }
        rows.push(
            rec.iter()
                .skip(1)
                .map(str::parse)
                .collect::<Result<_, _>>()?,
        );
    }
    if rows.len() != ids.len() {
        return Err(KmapError::Csv("matrix is not square".into()));
    }
    Ok((ids, rows))
}

/// Header `from,to,flow`: max-flow value for every ordered pair.
pub fn write_flows_csv<W: Write>(g: &KMapGraph, pairs: &[PairFlow], w: W) -> Result<(), KmapError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["from", "to", "flow"])?;
    for p in pairs {
        out.write_record([
            g.id(p.from),
            g.id(p.to),
            &rational_to_f64(&p.value).to_string(),
        ])?;
    }
    out.flush().map_err(|e| KmapError::Csv(e.to_string()))
}

pub fn read_flows_csv<R: Read>(r: R) -> Result<Vec<(String, String, f64)>, KmapError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|rec| rec.map_err(KmapError::from))
        .collect()
}

/// Header `node,level`.
pub fn write_levels_csv<W: Write>(
    g: &KMapGraph,
    levels: &[BigRational],
    w: W,
) -> Result<(), KmapError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node", "level"])?;
    for (i, l) in levels.iter().enumerate() {
        out.write_record([g.id(i), &rational_to_f64(l).to_string()])?;
    }
    out.flush().map_err(|e| KmapError::Csv(e.to_string()))
}

pub fn read_levels_csv<R: Read>(r: R) -> Result<Vec<(String, f64)>, KmapError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|rec| rec.map_err(KmapError::from))
        .collect()
}

/// Header `node,x,y,height`.
pub fn write_surface_csv<W: Write>(samples: &[SurfaceSample], w: W) -> Result<(), KmapError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["node", "x", "y", "height"])?;
    for s in samples {
        out.write_record([
            s.node.clone(),
            s.x.to_string(),
            s.y.to_string(),
            s.height.to_string(),
        ])?;
    }
    out.flush().map_err(|e| KmapError::Csv(e.to_string()))
}

pub fn read_surface_csv<R: Read>(r: R) -> Result<Vec<SurfaceSample>, KmapError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<(String, f64, f64, String)>() {
        let (node, x, y, h) = rec?;
        out.push(SurfaceSample {
            node,
            x,
            y,
            height: h.parse()?,
        });
    }
    Ok(out)
}

/// `1 / density`, the capacity of an edge.
pub(crate) fn capacity(density: &BigRational) -> BigRational {
    BigRational::one() / density
}

#[cfg(test)]
mod tests {
    use super::super::{build_kmap, EdgeSpec, KNode};
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn graph(n: usize, edges: &[(usize, usize, BigRational)]) -> KMapGraph {
        let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
        let layout = ids
            .iter()
            .enumerate()
            .map(|(i, id)| KNode::new(id.clone(), i as f64, (i * i) as f64))
            .collect();
        let specs = edges
            .iter()
            .map(|(u, v, w)| EdgeSpec::exact(&ids[*u], &ids[*v], w.clone()))
            .collect();
        build_kmap(layout, "n0", specs).unwrap()
    }

    // Every simple path, by depth-first search.
    fn brute_paths(g: &KMapGraph) -> Vec<Vec<Option<BigRational>>> {
        fn go(
            g: &KMapGraph,
            u: usize,
            acc: BigRational,
            seen: &mut Vec<bool>,
            best: &mut Vec<Option<BigRational>>,
        ) {
            if best[u].as_ref().is_none_or(|b| acc < *b) {
                best[u] = Some(acc.clone());
            }
            for (&(a, b), w) in g.edges() {
                if a == u && !seen[b] {
                    seen[b] = true;
                    go(g, b, &acc + w, seen, best);
                    seen[b] = false;
                }
            }
        }
        (0..g.len())
            .map(|s| {
                let mut best = vec![None; g.len()];
                let mut seen = vec![false; g.len()];
                seen[s] = true;
                go(g, s, BigRational::zero(), &mut seen, &mut best);
                best
            })
            .collect()
    }

    // Smallest s-t cut over every vertex subset.
    fn brute_cut(g: &KMapGraph, s: usize, t: usize) -> BigRational {
        let n = g.len();
        let mut best: Option<BigRational> = None;
        for mask in 0u32..(1 << n) {
            if mask & (1 << s) == 0 || mask & (1 << t) != 0 {
                continue;
            }
            let cut = g
                .edges()
                .iter()
                .filter(|((u, v), _)| mask & (1 << u) != 0 && mask & (1 << v) == 0)
                .fold(BigRational::zero(), |acc, (_, w)| acc + capacity(w));
            if best.as_ref().is_none_or(|b| cut < *b) {
                best = Some(cut);
            }
        }
        best.unwrap()
    }

    fn check_flow(g: &KMapGraph, s: usize, t: usize, f: &FlowResult) {
        let mut net = vec![BigRational::zero(); g.len()];
        for (&(u, v), x) in &f.edges {
            assert!(!x.is_negative());
            assert!(*x <= capacity(g.weight(u, v).unwrap()));
            net[u] -= x;
            net[v] += x;
        }
        for (i, n) in net.iter().enumerate() {
            if i == s {
                assert_eq!(*n, -f.value.clone());
            } else if i == t {
                assert_eq!(*n, f.value);
            } else {
                assert!(n.is_zero());
            }
        }
    }

    #[test]
    fn single_edge_paths() {
        let g = graph(2, &[(0, 1, r(7, 10))]);
        let m = min_complexity_paths(&g);
        assert_eq!(m.get(0, 1), Some(&r(7, 10)));
        assert_eq!(m.get(1, 0), None);
        assert_eq!(m.get(0, 0), Some(&r(0, 1)));
        assert_eq!(m.get(1, 1), Some(&r(0, 1)));
    }

    #[test]
    fn flow_examples() {
        let g = graph(2, &[(0, 1, r(1, 2))]);
        assert_eq!(max_flow(&g, 0, 1).unwrap().value, r(2, 1));
        assert_eq!(max_flow(&g, 1, 0).unwrap().value, r(0, 1));
        let series = graph(3, &[(0, 1, r(1, 2)), (1, 2, r(1, 1))]);
        assert_eq!(max_flow(&series, 0, 2).unwrap().value, r(1, 1));
        assert!(matches!(
            max_flow(&g, 0, 0),
            Err(KmapError::SameEndpoints(_))
        ));
        assert!(matches!(max_flow(&g, 0, 9), Err(KmapError::UnknownNode(_))));
        assert!(matches!(
            insecurity_flow(&g, "n0", "zz"),
            Err(KmapError::UnknownNode(_))
        ));
    }

    #[test]
    fn diamond_matches_cut() {
        let g = graph(
            4,
            &[
                (0, 1, r(1, 3)),
                (0, 2, r(2, 5)),
                (1, 3, r(3, 4)),
                (2, 3, r(1, 7)),
                (1, 2, r(1, 1)),
            ],
        );
        let f = insecurity_flow(&g, "n0", "n3").unwrap();
        assert_eq!(f.value, r(4, 3) + r(1, 1) + r(5, 2));
        assert_eq!(f.value, brute_cut(&g, 0, 3));
        check_flow(&g, 0, 3, &f);
    }

    #[test]
    fn antiparallel_edges() {
        let g = graph(3, &[(0, 1, r(1, 1)), (1, 2, r(1, 2)), (2, 1, r(1, 3))]);
        let f = max_flow(&g, 0, 2).unwrap();
        assert_eq!(f.value, r(1, 1));
        check_flow(&g, 0, 2, &f);
    }

    #[test]
    fn levels_and_surface() {
        // START -> a -> b, plus isolated c
        let g = graph(4, &[(0, 1, r(1, 2)), (1, 2, r(1, 4))]);
        let l = insecurity_levels(&g);
        // pairs: 0->1 = 2, 0->2 = 2, 1->2 = 4
        assert_eq!(l, vec![r(4, 1), r(6, 1), r(6, 1), r(0, 1)]);

        let s = export_surface(&g, SurfaceMode::PathHeight);
        let h: Vec<_> = s.iter().map(|x| x.height).collect();
        assert_eq!(
            h,
            vec![
                Height::Infinite,
                Height::Finite(0.5),
                Height::Finite(0.75),
                Height::Infinite
            ]
        );
        let f = export_surface(&g, SurfaceMode::FlowLevel);
        assert_eq!(f[1].height, Height::Finite(-6.0));
        assert_eq!(f[3].height, Height::Finite(0.0));
        assert_eq!((f[2].x, f[2].y), (2.0, 4.0));
    }

    #[test]
    fn csv_roundtrips() {
        let g = graph(3, &[(0, 1, r(1, 3)), (1, 2, r(1, 4))]);
        let m = min_complexity_paths(&g);
        let mut buf = Vec::new();
        write_matrix_csv(&g, &m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("node,n0,n1,n2\nn0,0,"));
        let (ids, rows) = read_matrix_csv(&buf[..]).unwrap();
        assert_eq!(ids, ["n0", "n1", "n2"]);
        assert_eq!(rows[0][2], Height::Finite(rational_to_f64(&r(7, 12))));
        assert_eq!(rows[2][0], Height::Infinite);

        let pairs = pair_flows(&g);
        let mut buf = Vec::new();
        write_flows_csv(&g, &pairs, &mut buf).unwrap();
        let back = read_flows_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), 6);
        assert_eq!(back[0], ("n0".into(), "n1".into(), 3.0));

        let levels = levels_from_pairs(3, &pairs);
        let mut buf = Vec::new();
        write_levels_csv(&g, &levels, &mut buf).unwrap();
        let back = read_levels_csv(&buf[..]).unwrap();
        assert_eq!(back[1], ("n1".into(), 3.0 + 4.0));

        let s = export_surface(&g, SurfaceMode::PathHeight);
        let mut buf = Vec::new();
        write_surface_csv(&s, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .contains("n0,0,0,inf"));
        assert_eq!(read_surface_csv(&buf[..]).unwrap(), s);

        assert!(read_matrix_csv("x,a\na,0\n".as_bytes()).is_err());
        assert!(read_surface_csv("node,x,y,height\na,0,0,NaN\n".as_bytes()).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, BigRational)>)> {
        (2usize..=5).prop_flat_map(|n| {
            let edge = (0..n, 1..n, 1i64..=20, 1i64..=20);
            (Just(n), prop::collection::vec(edge, 0..12)).prop_map(|(n, es)| {
                let mut seen = BTreeMap::new();
                for (u, v, a, b) in es {
                    if u != v {
                        seen.insert((u, v), r(a, b));
                    }
                }
                (n, seen.into_iter().map(|((u, v), w)| (u, v, w)).collect())
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn paths_match_enumeration((n, es) in arb_graph()) {
            let g = graph(n, &es);
            let m = min_complexity_paths(&g);
            prop_assert_eq!(m.rows().to_vec(), brute_paths(&g));
        }

        #[test]
        fn triangle_inequality((n, es) in arb_graph()) {
            let g = graph(n, &es);
            let m = min_complexity_paths(&g);
            for u in 0..n { for v in 0..n { for w in 0..n {
                if let (Some(a), Some(b)) = (m.get(u, v), m.get(v, w)) {
                    let uw = m.get(u, w);
                    prop_assert!(uw.is_some_and(|c| *c <= a + b));
                }
            }}}
        }

        #[test]
        fn flow_equals_min_cut((n, es) in arb_graph()) {
            let g = graph(n, &es);
            for s in 0..n { for t in 0..n {
                if s != t {
                    let f = max_flow(&g, s, t).unwrap();
                    prop_assert_eq!(&f.value, &brute_cut(&g, s, t));
                    check_flow(&g, s, t, &f);
                }
            }}
        }

        #[test]
        fn scaling((n, es) in arb_graph(), c in (1i64..=9, 1i64..=9)) {
            let c = r(c.0, c.1);
            let g = graph(n, &es);
            let scaled: Vec<_> = es.iter().map(|(u, v, w)| (*u, *v, w * &c)).collect();
            let h = graph(n, &scaled);
            let (m, ms) = (min_complexity_paths(&g), min_complexity_paths(&h));
            for u in 0..n { for v in 0..n {
                prop_assert_eq!(m.get(u, v).map(|x| x * &c), ms.get(u, v).cloned());
            }}
            let (l, ls) = (insecurity_levels(&g), insecurity_levels(&h));
            for (a, b) in l.iter().zip(&ls) {
                prop_assert_eq!(a / &c, b.clone());
            }
        }
    }
}
