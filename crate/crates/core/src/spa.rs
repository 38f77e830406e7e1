//! Shortest-path baseline: no training data, just the width-spanning path
//! of least tip-to-body gap through the preexisting cracks.

use crate::error::Result;
use crate::geometry::{tip_positions, tip_to_body_distance, Point};
use crate::graph::{CrackGraph, NodePayload};
use crate::scenario::{Crack, FailurePath, Scenario, Side};

/// Complete graph over interior cracks plus the two boundary nodes.
#[derive(Debug, Clone)]
pub struct SpaGraph {
    pub graph: CrackGraph,
    pub left: usize,
    pub right: usize,
    pub width: f64,
}

/// Symmetrized tip-to-body gap between two interior cracks.
pub fn crack_gap(a: &Crack, b: &Crack, scenario: &Scenario) -> Result<f64> {
    let g = &scenario.geometry;
    let (a0, a1) = tip_positions(a)?;
    let (b0, b1) = tip_positions(b)?;
    let ab = tip_to_body_distance(a0, b, g).min(tip_to_body_distance(a1, b, g));
    let ba = tip_to_body_distance(b0, a, g).min(tip_to_body_distance(b1, a, g));
    Ok(ab.min(ba))
}

/// Horizontal gap from the nearer tip of `crack` to a lateral boundary.
pub fn boundary_gap(crack: &Crack, side: Side, scenario: &Scenario) -> Result<f64> {
    let (t0, t1) = tip_positions(crack)?;
    let x = side.x(&scenario.geometry);
    Ok((t0.x - x).abs().min((t1.x - x).abs()))
}

pub fn build_spa_graph(scenario: &Scenario) -> Result<SpaGraph> {
    let mut interior: Vec<&Crack> = scenario.interior().collect();
    interior.sort_by_key(|c| c.id);
    let g = &scenario.geometry;
    let mut graph = CrackGraph::new();
    for c in &interior {
        graph.add_node(c.center, NodePayload::Crack(c.id));
    }
    let left = graph.add_node(Point::new(0.0, g.h / 2.0), NodePayload::Boundary(Side::Left));
    let right = graph.add_node(Point::new(g.w, g.h / 2.0), NodePayload::Boundary(Side::Right));
    for (i, a) in interior.iter().enumerate() {
        for (j, b) in interior.iter().enumerate().skip(i + 1) {
            graph.add_edge(i, j, crack_gap(a, b, scenario)?)?;
        }
        graph.add_edge(left, i, boundary_gap(a, Side::Left, scenario)?)?;
        graph.add_edge(i, right, boundary_gap(a, Side::Right, scenario)?)?;
    }
    graph.add_edge(left, right, g.w)?;
    Ok(SpaGraph {
        graph,
        left,
        right,
        width: g.w,
    })
}

/// Least-weight left-to-right path; interior cracks in path order.
pub fn shortest_failure_path(spa: &SpaGraph) -> (FailurePath, f64) {
    match spa.graph.shortest_path(spa.left, spa.right) {
        Some(p) => {
            let ids = p
                .nodes
                .iter()
                .filter_map(|&n| spa.graph.nodes()[n].payload.crack_id())
                .collect();
            (FailurePath::new(ids, true), p.weight)
        }
        // the direct boundary edge makes this unreachable
        None => (FailurePath::new(Vec::new(), true), spa.width),
    }
}

/// Convenience wrapper: build the graph and solve it.
pub fn predict_spa(scenario: &Scenario) -> Result<(FailurePath, f64)> {
    Ok(shortest_failure_path(&build_spa_graph(scenario)?))
}
