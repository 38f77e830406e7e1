//! Weighted undirected graph over crack features, with shortest-path
//! queries used by the path-based models.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodePayload {
    Crack(usize),
    Tip { crack: usize, tip: u8 },
    Boundary(Side),
}

impl NodePayload {
    /// Interior crack carried by this node, if any.
    pub fn crack_id(&self) -> Option<usize> {
        match *self {
            NodePayload::Crack(id) | NodePayload::Tip { crack: id, .. } => Some(id),
            NodePayload::Boundary(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub pos: Point,
    pub payload: NodePayload,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected graph with nonnegative edge weights (metres) and no
/// self-loops. Node ids are dense indices.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CrackGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// A node sequence together with its total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub nodes: Vec<usize>,
    pub weight: f64,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl CrackGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, pos: Point, payload: NodePayload) -> usize {
        let id = self.nodes.len();
        self.nodes.push(GraphNode { id, pos, payload });
        self.adjacency.push(Vec::new());
        id
    }

    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) -> Result<()> {
        if a == b {
            return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
        }
        if a >= self.nodes.len() || b >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!("edge ({a}, {b}) names a missing node")));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "edge ({a}, {b}) has invalid weight {weight}"
            )));
        }
        self.edges.push(Edge { a, b, weight });
        self.adjacency[a].push((b, weight));
        self.adjacency[b].push((a, weight));
        Ok(())
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    /// Minimum weight among parallel edges between `a` and `b`.
    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency[a]
            .iter()
            .filter(|(n, _)| *n == b)
            .map(|(_, w)| *w)
            .reduce(f64::min)
    }

    pub fn find(&self, payload: NodePayload) -> Option<usize> {
        self.nodes.iter().position(|n| n.payload == payload)
    }

    /// Rebuilds adjacency after deserialization.
    pub fn reindex(&mut self) {
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            self.adjacency[e.a].push((e.b, e.weight));
            self.adjacency[e.b].push((e.a, e.weight));
        }
    }

    /// Single-source shortest distances (Dijkstra).
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        self.dijkstra(source, |_| true).0
    }

    fn dijkstra(
        &self,
        source: usize,
        allowed: impl Fn(usize) -> bool,
    ) -> (Vec<f64>, Vec<Option<usize>>) {
        let n = self.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: source,
        });
        while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                if !allowed(v) {
                    continue;
                }
                let nd = d + w;
                let better = nd < dist[v] || (nd == dist[v] && pred[v].is_some_and(|p| u < p));
                if better {
                    dist[v] = nd;
                    pred[v] = Some(u);
                    heap.push(HeapEntry { dist: nd, node: v });
                }
            }
        }
        (dist, pred)
    }

    fn walk_back(pred: &[Option<usize>], source: usize, target: usize) -> Vec<usize> {
        let mut path = vec![target];
        let mut cur = target;
        while cur != source {
            match pred[cur] {
                Some(p) => {
                    path.push(p);
                    cur = p;
                }
                None => break,
            }
        }
        path.reverse();
        path
    }

    /// Minimum-weight path from `source` to `target`. Among optimal paths
    /// the lexicographically smallest node-id sequence is returned.
    pub fn shortest_path(&self, source: usize, target: usize) -> Option<WeightedPath> {
        let from_target = self.distances_from(target);
        let best = from_target[source];
        if !best.is_finite() {
            return None;
        }
        let tol = 1e-12 * best.max(1.0);
        let mut visited = vec![false; self.nodes.len()];
        let mut path = vec![source];
        visited[source] = true;
        let mut cur = source;
        let mut acc = 0.0;
        while cur != target {
            let next = self.adjacency[cur]
                .iter()
                .filter(|(v, w)| !visited[*v] && (acc + w + from_target[*v] - best).abs() <= tol)
                .map(|(v, w)| (*v, *w))
                .min_by_key(|(v, _)| *v);
            match next {
                Some((v, w)) => {
                    acc += w;
                    visited[v] = true;
                    path.push(v);
                    cur = v;
                }
                None => {
                    // zero-weight cycles can strand the greedy walk
                    let (_, pred) = self.dijkstra(source, |_| true);
                    let nodes = Self::walk_back(&pred, source, target);
                    let weight = self.path_weight(&nodes)?;
                    return Some(WeightedPath { nodes, weight });
                }
            }
        }
        let weight = self.path_weight(&path)?;
        Some(WeightedPath {
            nodes: path,
            weight,
        })
    }

    /// Sum of edge weights along consecutive nodes, `None` if an edge is
    /// missing.
    pub fn path_weight(&self, nodes: &[usize]) -> Option<f64> {
        nodes
            .windows(2)
            .map(|w| self.edge_weight(w[0], w[1]))
            .sum::<Option<f64>>()
    }

    /// Minimum-weight simple path from `source` to `target` that visits
    /// `waypoint`.
    ///
    /// The concatenation of the two shortest legs is optimal whenever it is
    /// simple; otherwise the problem is solved exactly as two vertex-disjoint
    /// paths out of the waypoint by min-cost flow.
    pub fn shortest_path_via(
        &self,
        source: usize,
        waypoint: usize,
        target: usize,
    ) -> Option<WeightedPath> {
        if waypoint == source || waypoint == target {
            return self.shortest_path(source, target);
        }
        let first = self.shortest_path(source, waypoint)?;
        let second = self.shortest_path(waypoint, target)?;
        let mut nodes = first.nodes.clone();
        nodes.extend_from_slice(&second.nodes[1..]);
        let mut seen = vec![false; self.nodes.len()];
        if nodes.iter().all(|&n| !std::mem::replace(&mut seen[n], true)) {
            return Some(WeightedPath {
                nodes,
                weight: first.weight + second.weight,
            });
        }
        self.disjoint_legs(source, waypoint, target)
    }

    /// Best over several waypoints of [`Self::shortest_path_via`]; ties keep
    /// the earlier waypoint.
    pub fn shortest_path_via_any(
        &self,
        source: usize,
        waypoints: &[usize],
        target: usize,
    ) -> Option<WeightedPath> {
        let mut best: Option<WeightedPath> = None;
        for &w in waypoints {
            if let Some(p) = self.shortest_path_via(source, w, target) {
                if best.as_ref().is_none_or(|b| p.weight < b.weight) {
                    best = Some(p);
                }
            }
        }
        best
    }

    fn disjoint_legs(&self, source: usize, waypoint: usize, target: usize) -> Option<WeightedPath> {
        let n = self.nodes.len();
        // node v -> in = 2v, out = 2v + 1; sink = 2n
        let sink = 2 * n;
        let mut flow = FlowNetwork::new(2 * n + 1);
        for v in 0..n {
            if v != source && v != target && v != waypoint {
                flow.add_arc(2 * v, 2 * v + 1, 1, 0.0);
            }
        }
        for e in &self.edges {
            for (u, v) in [(e.a, e.b), (e.b, e.a)] {
                if u == source || u == target || v == waypoint {
                    continue;
                }
                flow.add_arc(2 * u + 1, 2 * v, 1, e.weight);
            }
        }
        flow.add_arc(2 * source, sink, 1, 0.0);
        flow.add_arc(2 * target, sink, 1, 0.0);
        let (sent, _) = flow.min_cost_flow(2 * waypoint + 1, sink, 2);
        if sent < 2 {
            return None;
        }
        let mut legs = Vec::new();
        for end in [source, target] {
            legs.push(flow.trace_leg(2 * waypoint + 1, 2 * end)?);
        }
        let mut nodes: Vec<usize> = legs[0].iter().rev().map(|&x| x / 2).collect();
        nodes.dedup();
        let mut second: Vec<usize> = legs[1].iter().map(|&x| x / 2).collect();
        second.dedup();
        nodes.extend_from_slice(&second[1..]);
        let weight = self.path_weight(&nodes)?;
        Some(WeightedPath { nodes, weight })
    }
}

struct Arc {
    to: usize,
    cap: i32,
    cost: f64,
}

struct FlowNetwork {
    arcs: Vec<Arc>,
    out: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        Self {
            arcs: Vec::new(),
            out: vec![Vec::new(); n],
        }
    }

    fn add_arc(&mut self, from: usize, to: usize, cap: i32, cost: f64) {
        self.out[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap, cost });
        self.out[to].push(self.arcs.len());
        self.arcs.push(Arc {
            to: from,
            cap: 0,
            cost: -cost,
        });
    }

    /// Successive shortest paths with Bellman-Ford on the residual graph.
    fn min_cost_flow(&mut self, s: usize, t: usize, want: i32) -> (i32, f64) {
        let n = self.out.len();
        let mut sent = 0;
        let mut total = 0.0;
        while sent < want {
            let mut dist = vec![f64::INFINITY; n];
            let mut via: Vec<Option<usize>> = vec![None; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if !dist[u].is_finite() {
                        continue;
                    }
                    for &a in &self.out[u] {
                        let arc = &self.arcs[a];
                        if arc.cap > 0 && dist[u] + arc.cost < dist[arc.to] - 1e-15 {
                            dist[arc.to] = dist[u] + arc.cost;
                            via[arc.to] = Some(a);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            let mut v = t;
            while v != s {
                let a = via[v].expect("augmenting path");
                self.arcs[a].cap -= 1;
                self.arcs[a ^ 1].cap += 1;
                v = self.arcs[a ^ 1].to;
            }
            sent += 1;
            total += dist[t];
        }
        (sent, total)
    }

    /// Follows saturated forward arcs from `s` until `end` is reached.
    fn trace_leg(&self, s: usize, end: usize) -> Option<Vec<usize>> {
        let mut path = vec![s];
        let mut cur = s;
        let mut steps = 0;
        while cur != end {
            let next = self.out[cur].iter().find(|&&a| {
                a % 2 == 0 && self.arcs[a].cap == 0 && {
                    // a saturated forward arc carries one unit
                    let to = self.arcs[a].to;
                    to == end || self.reaches(to, end)
                }
            })?;
            cur = self.arcs[*next].to;
            path.push(cur);
            steps += 1;
            if steps > self.out.len() {
                return None;
            }
        }
        Some(path)
    }

    fn reaches(&self, from: usize, end: usize) -> bool {
        let mut stack = vec![from];
        let mut seen = vec![false; self.out.len()];
        while let Some(u) = stack.pop() {
            if u == end {
                return true;
            }
            if std::mem::replace(&mut seen[u], true) {
                continue;
            }
            for &a in &self.out[u] {
                if a % 2 == 0 && self.arcs[a].cap == 0 {
                    stack.push(self.arcs[a].to);
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_graph(weights: &[f64]) -> CrackGraph {
        let mut g = CrackGraph::new();
        for i in 0..=weights.len() {
            g.add_node(Point::new(i as f64, 0.0), NodePayload::Crack(i));
        }
        for (i, w) in weights.iter().enumerate() {
            g.add_edge(i, i + 1, *w).unwrap();
        }
        g
    }

    #[test]
    fn rejects_self_loops_and_negative_weights() {
        let mut g = line_graph(&[1.0]);
        assert!(g.add_edge(0, 0, 1.0).is_err());
        assert!(g.add_edge(0, 1, -1.0).is_err());
        assert!(g.add_edge(0, 7, 1.0).is_err());
    }

    #[test]
    fn shortest_path_prefers_lexicographically_smaller_ties() {
        // 0 -> 1 -> 3 and 0 -> 2 -> 3 both weigh 2
        let mut g = CrackGraph::new();
        for i in 0..4 {
            g.add_node(Point::default(), NodePayload::Crack(i));
        }
        g.add_edge(0, 2, 1.0).unwrap();
        g.add_edge(2, 3, 1.0).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        g.add_edge(1, 3, 1.0).unwrap();
        let p = g.shortest_path(0, 3).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 3]);
        assert_eq!(p.weight, 2.0);
    }

    #[test]
    fn unreachable_target() {
        let mut g = line_graph(&[1.0]);
        g.add_node(Point::default(), NodePayload::Crack(9));
        assert!(g.shortest_path(0, 2).is_none());
    }

    #[test]
    fn waypoint_requires_disjoint_legs() {
        // s=0, t=1, waypoint 3 hangs off hub 2; the naive concatenation
        // s-2-3-2-t revisits the hub, so the exact answer detours via 4.
        let mut g = CrackGraph::new();
        for i in 0..5 {
            g.add_node(Point::default(), NodePayload::Crack(i));
        }
        g.add_edge(0, 2, 1.0).unwrap();
        g.add_edge(2, 1, 1.0).unwrap();
        g.add_edge(2, 3, 1.0).unwrap();
        g.add_edge(3, 4, 5.0).unwrap();
        g.add_edge(4, 1, 5.0).unwrap();
        let p = g.shortest_path_via(0, 3, 1).unwrap();
        assert_eq!(p.nodes, vec![0, 2, 3, 4, 1]);
        assert_eq!(p.weight, 12.0);
        // no simple route at all once the detour is removed
        let mut h = CrackGraph::new();
        for i in 0..4 {
            h.add_node(Point::default(), NodePayload::Crack(i));
        }
        h.add_edge(0, 2, 1.0).unwrap();
        h.add_edge(2, 1, 1.0).unwrap();
        h.add_edge(2, 3, 1.0).unwrap();
        assert!(h.shortest_path_via(0, 3, 1).is_none());
    }

    #[test]
    fn waypoint_on_optimal_route_is_free() {
        let g = line_graph(&[1.0, 2.0, 3.0]);
        let p = g.shortest_path_via(0, 2, 3).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2, 3]);
        assert_eq!(p.weight, 6.0);
    }
}
