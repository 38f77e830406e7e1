//! Network fracture-process-zone model: overlapping process zones around
//! load-normal cracks define failure zones, and the failure path is the
//! shortest tip-graph path forced through the leading zone.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::Result;
use crate::geometry::{tip_positions, tip_to_body_distance, Point};
use crate::graph::{CrackGraph, NodePayload, WeightedPath};
use crate::scenario::{Crack, FailurePath, Scenario, Side};

/// Process-zone size as a fraction of the summed lengths.
pub const PZ_FRACTION: f64 = 0.3;
/// Weight of the edge joining the two tips of a preexisting crack.
pub const CRACK_EDGE_WEIGHT: f64 = 1e-6;
/// Orientation tolerance for load-normal seed cracks.
pub const SEED_TOLERANCE_DEG: f64 = 1.0;

pub fn pz_size(a: &Crack, b: &Crack) -> f64 {
    PZ_FRACTION * (a.length + b.length)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMetric {
    TipToTip,
    TipToBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NfpzConfig {
    pub gap: GapMetric,
    pub top_k: usize,
}

impl Default for NfpzConfig {
    fn default() -> Self {
        Self {
            gap: GapMetric::TipToTip,
            top_k: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedNeighbor {
    pub seed: usize,
    pub tip: u8,
    pub neighbor: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PzPair {
    pub i: usize,
    pub j: usize,
    pub d12: f64,
    pub tip_gap: f64,
    pub coalesces: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureZone {
    pub members: Vec<usize>,
    pub band: (f64, f64),
    pub total_length: f64,
}

fn is_seed(c: &Crack) -> bool {
    let t = c.theta_deg.rem_euclid(180.0);
    t <= SEED_TOLERANCE_DEG || t >= 180.0 - SEED_TOLERANCE_DEG
}

fn sorted_interior(scenario: &Scenario) -> Vec<&Crack> {
    let mut v: Vec<&Crack> = scenario.interior().collect();
    v.sort_by_key(|c| c.id);
    v
}

/// Nearest other crack (tip-to-body) for each tip of every load-normal
/// crack; ties go to the smaller id.
pub fn seed_and_neighbors(scenario: &Scenario) -> Result<Vec<SeedNeighbor>> {
    let cracks = sorted_interior(scenario);
    let mut out = Vec::new();
    for s in cracks.iter().filter(|c| is_seed(c)) {
        let (t0, t1) = tip_positions(s)?;
        for (tip, p) in [(0u8, t0), (1u8, t1)] {
            let best = cracks
                .iter()
                .filter(|c| c.id != s.id)
                .map(|c| (tip_to_body_distance(p, c, &scenario.geometry), c.id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((distance, neighbor)) = best {
                out.push(SeedNeighbor {
                    seed: s.id,
                    tip,
                    neighbor,
                    distance,
                });
            }
        }
    }
    Ok(out)
}

/// Minimum tip-to-tip distance between two interior cracks.
pub fn tip_gap(a: &Crack, b: &Crack) -> Result<f64> {
    let (a0, a1) = tip_positions(a)?;
    let (b0, b1) = tip_positions(b)?;
    Ok([a0.dist(b0), a0.dist(b1), a1.dist(b0), a1.dist(b1)]
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

fn gap(a: &Crack, b: &Crack, metric: GapMetric, scenario: &Scenario) -> Result<f64> {
    match metric {
        GapMetric::TipToTip => tip_gap(a, b),
        GapMetric::TipToBody => crate::spa::crack_gap(a, b, scenario),
    }
}

/// Distinct (seed, neighbour) pairs with their process-zone test.
pub fn pz_pairs(scenario: &Scenario, metric: GapMetric) -> Result<Vec<PzPair>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for sn in seed_and_neighbors(scenario)? {
        let key = (sn.seed.min(sn.neighbor), sn.seed.max(sn.neighbor));
        if !seen.insert(key) {
            continue;
        }
        let (Some(a), Some(b)) = (scenario.crack(key.0), scenario.crack(key.1)) else {
            continue;
        };
        let d12 = pz_size(a, b);
        let tip_gap = gap(a, b, metric, scenario)?;
        out.push(PzPair {
            i: key.0,
            j: key.1,
            d12,
            tip_gap,
            coalesces: tip_gap <= d12,
        });
    }
    Ok(out)
}

/// Connected components of coalescing pairs, largest total length first
/// (ties by smallest member id).
pub fn coalescence_clusters(scenario: &Scenario, metric: GapMetric) -> Result<Vec<FailureZone>> {
    let cracks = sorted_interior(scenario);
    let index: BTreeMap<usize, usize> = cracks.iter().enumerate().map(|(i, c)| (c.id, i)).collect();
    let mut dsu = DisjointSet::new(cracks.len());
    let mut linked = BTreeSet::new();
    for p in pz_pairs(scenario, metric)?.into_iter().filter(|p| p.coalesces) {
        dsu.union(index[&p.i], index[&p.j]);
        linked.insert(p.i);
        linked.insert(p.j);
    }
    let mut groups: BTreeMap<usize, Vec<&Crack>> = BTreeMap::new();
    for c in &cracks {
        if linked.contains(&c.id) {
            groups.entry(dsu.find(index[&c.id])).or_default().push(c);
        }
    }
    let mut zones: Vec<FailureZone> = groups
        .into_values()
        .map(|members| {
            let pad = members.iter().map(|c| c.length / 2.0).fold(0.0, f64::max);
            let lo = members.iter().map(|c| c.center.y).fold(f64::INFINITY, f64::min);
            let hi = members.iter().map(|c| c.center.y).fold(f64::NEG_INFINITY, f64::max);
            FailureZone {
                members: members.iter().map(|c| c.id).collect(),
                band: (lo - pad, hi + pad),
                total_length: members.iter().map(|c| c.length).sum(),
            }
        })
        .collect();
    zones.sort_by(|a, b| {
        b.total_length
            .total_cmp(&a.total_length)
            .then(a.members[0].cmp(&b.members[0]))
    });
    Ok(zones)
}

/// Tip graph: two nodes per interior crack joined by a near-zero edge,
/// Euclidean gaps between tips of different cracks, horizontal edges to
/// the boundaries, and a direct boundary edge of weight `w`.
#[derive(Debug, Clone)]
pub struct TipGraph {
    pub graph: CrackGraph,
    pub left: usize,
    pub right: usize,
    /// Tip nodes of each crack id.
    pub tips: BTreeMap<usize, [usize; 2]>,
}

pub fn build_tip_graph(scenario: &Scenario) -> Result<TipGraph> {
    let cracks = sorted_interior(scenario);
    let g = &scenario.geometry;
    let mut graph = CrackGraph::new();
    let mut tips = BTreeMap::new();
    let mut positions: Vec<(usize, Point)> = Vec::new();
    for c in &cracks {
        let (t0, t1) = tip_positions(c)?;
        let a = graph.add_node(t0, NodePayload::Tip { crack: c.id, tip: 0 });
        let b = graph.add_node(t1, NodePayload::Tip { crack: c.id, tip: 1 });
        graph.add_edge(a, b, CRACK_EDGE_WEIGHT)?;
        tips.insert(c.id, [a, b]);
        positions.push((a, t0));
        positions.push((b, t1));
    }
    let left = graph.add_node(Point::new(0.0, g.h / 2.0), NodePayload::Boundary(Side::Left));
    let right = graph.add_node(Point::new(g.w, g.h / 2.0), NodePayload::Boundary(Side::Right));
    for (i, &(u, pu)) in positions.iter().enumerate() {
        for &(v, pv) in &positions[i + 1..] {
            if graph.nodes()[u].payload.crack_id() != graph.nodes()[v].payload.crack_id() {
                graph.add_edge(u, v, pu.dist(pv))?;
            }
        }
        graph.add_edge(left, u, pu.x.max(0.0))?;
        graph.add_edge(u, right, (g.w - pu.x).max(0.0))?;
    }
    graph.add_edge(left, right, g.w)?;
    Ok(TipGraph {
        graph,
        left,
        right,
        tips,
    })
}

impl TipGraph {
    /// Interior crack ids visited by a node path, in order.
    pub fn crack_sequence(&self, nodes: &[usize]) -> Vec<usize> {
        let mut ids: Vec<usize> = Vec::new();
        for &n in nodes {
            if let Some(id) = self.graph.nodes()[n].payload.crack_id() {
                if ids.last() != Some(&id) {
                    ids.push(id);
                }
            }
        }
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPath {
    pub path: FailurePath,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfpzPrediction {
    pub zones: Vec<FailureZone>,
    pub paths: Vec<RankedPath>,
    /// No failure zone existed; the unconstrained shortest path was used.
    pub fallback: bool,
}

impl NfpzPrediction {
    pub fn best(&self) -> FailurePath {
        self.paths
            .first()
            .map(|p| p.path.clone())
            .unwrap_or_else(FailurePath::empty)
    }
}

/// Shortest boundary-to-boundary tip path through at least one crack of
/// the top zone. Up to `k` distinct crack sequences are returned, one per
/// forced crack, ranked by weight.
pub fn likely_failure_paths(scenario: &Scenario, zones: &[FailureZone], k: usize) -> Result<NfpzPrediction> {
    let tg = build_tip_graph(scenario)?;
    let to_ranked = |p: WeightedPath| RankedPath {
        path: FailurePath::new(tg.crack_sequence(&p.nodes), true),
        weight: p.weight,
    };
    let Some(top) = zones.first() else {
        let paths = tg
            .graph
            .shortest_path(tg.left, tg.right)
            .map(to_ranked)
            .into_iter()
            .collect();
        return Ok(NfpzPrediction {
            zones: Vec::new(),
            paths,
            fallback: true,
        });
    };
    let mut candidates: Vec<RankedPath> = Vec::new();
    for id in &top.members {
        let waypoints = tg.tips[id];
        if let Some(p) = tg.graph.shortest_path_via_any(tg.left, &waypoints, tg.right) {
            let r = to_ranked(p);
            if !candidates.iter().any(|c| c.path.crack_ids == r.path.crack_ids) {
                candidates.push(r);
            }
        }
    }
    candidates.sort_by(|a, b| a.weight.total_cmp(&b.weight).then(a.path.crack_ids.cmp(&b.path.crack_ids)));
    candidates.truncate(k.max(1));
    Ok(NfpzPrediction {
        zones: zones.to_vec(),
        paths: candidates,
        fallback: false,
    })
}

pub fn predict_nfpz(scenario: &Scenario, config: &NfpzConfig) -> Result<NfpzPrediction> {
    let zones = coalescence_clusters(scenario, config.gap)?;
    likely_failure_paths(scenario, &zones, config.top_k)
}
