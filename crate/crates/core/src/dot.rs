//! Graphviz rendering of the better-or-equal response graph.
//!
//! Sink nodes are filled with one palette color per sink. Other nodes are
//! drawn as wedged pies whose slices are the hitting probabilities toward
//! each sink. Strict improvements are labeled with their CMC weight; ties
//! appear as a pair of opposite edges labeled `0.00`.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::game::{build_cmc, Game, ProfileId, ResponseGraph, SinkEquilibria};

/// ColorBrewer "Paired", 12 classes.
pub const PALETTE: [&str; 12] = [
    "#a6cee3", "#1f78b4", "#b2df8a", "#33a02c", "#fb9a99", "#e31a1c", "#fdbf6f", "#ff7f00",
    "#cab2d6", "#6a3d9a", "#ffff99", "#b15928",
];

pub fn sink_color(k: usize) -> &'static str {
    PALETTE[k % PALETTE.len()]
}

/// `hitting`, when given, must hold one row per profile with one entry per sink.
pub fn export_dot(
    game: &Game,
    sinks: &SinkEquilibria,
    hitting: Option<&[Vec<f64>]>,
    tie_tolerance: f64,
) -> Result<String> {
    let n = game.num_profiles();
    if let Some(rows) = hitting {
        if rows.len() != n {
            return Err(Error::invalid(
                "hitting",
                format!("expected {n} rows, found {}", rows.len()),
            ));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != sinks.len()) {
            return Err(Error::invalid(
                format!("hitting[{i}]"),
                format!("expected {} entries, found {}", sinks.len(), rows[i].len()),
            ));
        }
    }
    let graph = ResponseGraph::build(game, tie_tolerance);
    let cmc = build_cmc(game, tie_tolerance);

    let mut out = String::new();
    out.push_str("digraph response {\n");
    out.push_str("  node [shape=ellipse, fontname=\"Helvetica\"];\n");
    out.push_str("  edge [fontname=\"Helvetica\", fontsize=10];\n");
    for v in (0..n).map(ProfileId) {
        let label = game.label(v);
        let attrs = match (sinks.sink_of(v), hitting) {
            (Some(k), _) => format!("style=filled, fillcolor=\"{}\"", sink_color(k)),
            (None, Some(rows)) => format!("style=wedged, fillcolor=\"{}\"", pie(&rows[v.0])),
            (None, None) => String::new(),
        };
        let sep = if attrs.is_empty() { "" } else { ", " };
        writeln!(out, "  n{} [label=\"{label}\"{sep}{attrs}];", v.0).unwrap();
    }
    for e in &graph.regular_edges {
        let w = cmc
            .regular_out(e.from.0)
            .find(|&(t, _)| t == e.to.0)
            .map(|(_, w)| w)
            .unwrap_or(0.0);
        writeln!(out, "  n{} -> n{} [label=\"{w:.2}\"];", e.from.0, e.to.0).unwrap();
    }
    for t in &graph.tie_edges {
        for (a, b) in [(t.from.0, t.to.0), (t.to.0, t.from.0)] {
            writeln!(out, "  n{a} -> n{b} [label=\"0.00\", style=dashed];").unwrap();
        }
    }
    out.push_str("}\n");
    Ok(out)
}

/// Wedge color list; the last slice takes whatever remains so rounding can
/// never push the total above one.
fn pie(row: &[f64]) -> String {
    let slices: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| (k, p))
        .collect();
    let mut parts = Vec::with_capacity(slices.len());
    for (idx, &(k, p)) in slices.iter().enumerate() {
        if idx + 1 == slices.len() {
            parts.push(sink_color(k).to_string());
        } else {
            parts.push(format!("{};{:.4}", sink_color(k), p));
        }
    }
    if parts.is_empty() {
        return "white".into();
    }
    parts.join(":")
}
