//! Bodies of the fuzz targets, shared with the corpus replay test.
//!
//! Each function must not panic on any input. Where a decoder accepts an
//! input, re-encoding must reproduce it.

use std::path::Path;

use avnmp::anet::{self, Expr, ExprPacket, Topology};
use avnmp::engine::Scenario;
use avnmp::kmap;
use avnmp::mdl::{decode_packet, ActivePacket};
use avnmp::series;

/// Graphs larger than this skip the all-pairs flow pass.
const MAX_SOLVED_NODES: usize = 8;

pub fn mdl_packet(data: &[u8]) {
    if let Ok(p) = ActivePacket::from_bytes(data) {
        assert_eq!(p.to_bytes(), data);
        let _ = p.hypothesis();
        let _ = decode_packet(&p);
    }
}

pub fn expr_text(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = text.parse::<Expr>() {
        let again: Expr = e.to_string().parse().expect("printed form parses");
        assert_eq!(again.to_bytes(), e.to_bytes());
        let args: Vec<f64> = match e.max_arg() {
            Some(top) => (0..=top).map(|i| f64::from(i) + 1.0).collect(),
            None => Vec::new(),
        };
        let _ = e.eval(&args);
    }
}

pub fn expr_packet(data: &[u8]) {
    if let Ok(p) = ExprPacket::from_bytes(data) {
        assert_eq!(p.to_bytes(), data);
        assert_eq!(p.size_bytes(), data.len());
        let _ = anet::evaluate(&p, 64);
    }
}

pub fn scenario_toml(data: &[u8]) {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = Scenario::from_toml_str(text) {
            assert!(s.validate().is_ok());
        }
    }
}

pub fn topology_toml(data: &[u8]) {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(t) = Topology::from_toml_str(text) {
            let route: Vec<_> = t.links().map(|l| l.id).take(4).collect();
            let _ = t.walk(&route);
        }
    }
}

pub fn kmap_graph(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Trace references resolve nowhere, so only inline densities load.
    if let Ok(g) = kmap::graph_from_toml_str(text, Path::new("/nonexistent")) {
        let m = kmap::min_complexity_paths(&g);
        assert_eq!(m.len(), g.len());
        if g.len() <= MAX_SOLVED_NODES {
            let _ = kmap::export_surface(&g, kmap::SurfaceMode::FlowLevel);
        }
    }
}

pub fn kmap_trace(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tr) = kmap::parse_trace("fuzz", text) {
        let again = kmap::parse_trace("fuzz", &tr.to_text().expect("byte records")).unwrap();
        assert_eq!(again, tr);
        if tr.pairs() > 0 {
            let _ = kmap::trace_density(&tr, tr.pairs().min(16));
        }
    }
}

pub fn series_csv(data: &[u8]) {
    if let Ok(s) = series::read_csv(data) {
        let mut out = Vec::new();
        series::write_csv(&mut out, &s).expect("in-memory write");
        assert_eq!(series::read_csv(&out[..]).unwrap(), s);
    }
}
