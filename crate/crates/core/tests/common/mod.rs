//! Independent brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use crackrom::graph::CrackGraph;
use crackrom::mcpic::PairEvent;
use crackrom::oracle::{generate_scenario, Joint, ScenarioSpec};
use crackrom::{Scenario, Side};

/// Minimum weight over all simple `s`-`t` paths that visit at least one node
/// of `required` (any path when empty). Depth-first enumeration; a partial
/// path is cut only once its weight plus `lower_bound(node)` reaches the
/// best complete path, which keeps the search exact for non-negative
/// weights and admissible bounds.
pub fn brute_min_path(
    graph: &CrackGraph,
    s: usize,
    t: usize,
    required: &[usize],
    lower_bound: &dyn Fn(usize) -> f64,
) -> Option<(f64, Vec<usize>)> {
    struct Search<'a> {
        graph: &'a CrackGraph,
        t: usize,
        required: &'a [usize],
        lower_bound: &'a dyn Fn(usize) -> f64,
        on_path: Vec<bool>,
        path: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }
    impl Search<'_> {
        fn go(&mut self, u: usize, w: f64) {
            if let Some((b, _)) = &self.best {
                if w + (self.lower_bound)(u) >= *b {
                    return;
                }
            }
            if u == self.t {
                if self.required.is_empty() || self.path.iter().any(|n| self.required.contains(n)) {
                    self.best = Some((w, self.path.clone()));
                }
                return;
            }
            let mut next: Vec<(usize, f64)> = self.graph.neighbors(u).to_vec();
            next.sort_by(|a, b| a.1.total_cmp(&b.1));
            for (v, ew) in next {
                if self.on_path[v] {
                    continue;
                }
                self.on_path[v] = true;
                self.path.push(v);
                self.go(v, w + ew);
                self.path.pop();
                self.on_path[v] = false;
            }
        }
    }
    let mut search = Search {
        graph,
        t,
        required,
        lower_bound,
        on_path: vec![false; graph.node_count()],
        path: vec![s],
        best: None,
    };
    search.on_path[s] = true;
    search.go(s, 0.0);
    search.best
}

/// Earliest time at which some simple left-to-right path exists whose
/// every event has happened: min over paths of the max event time.
pub fn brute_minimax(events: &[PairEvent]) -> Option<f64> {
    let mut adj: BTreeMap<Joint, Vec<(Joint, f64)>> = BTreeMap::new();
    for e in events {
        adj.entry(e.a).or_default().push((e.b, e.t));
        adj.entry(e.b).or_default().push((e.a, e.t));
    }
    fn go(
        u: Joint,
        bottleneck: f64,
        adj: &BTreeMap<Joint, Vec<(Joint, f64)>>,
        seen: &mut Vec<Joint>,
        best: &mut Option<f64>,
    ) {
        if u == Joint::Boundary(Side::Right) {
            if best.is_none_or(|b| bottleneck < b) {
                *best = Some(bottleneck);
            }
            return;
        }
        for &(v, t) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.contains(&v) {
                continue;
            }
            seen.push(v);
            go(v, bottleneck.max(t), adj, seen, best);
            seen.pop();
        }
    }
    let start = Joint::Boundary(Side::Left);
    let mut best = None;
    go(start, f64::NEG_INFINITY, &adj, &mut vec![start], &mut best);
    best
}

/// Sort-and-sweep union of closed intervals carrying id sets.
pub fn merge_reference(mut items: Vec<(f64, f64, Vec<usize>)>) -> Vec<(f64, f64, Vec<usize>)> {
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, Vec<usize>)> = Vec::new();
    for (lo, hi, ids) in items {
        if let Some(last) = out.last_mut() {
            if lo <= last.1 {
                last.1 = last.1.max(hi);
                last.2.extend(ids);
                last.2.sort_unstable();
                continue;
            }
        }
        out.push((lo, hi, ids));
    }
    out
}

/// Default-style scenario with `n` cracks.
pub fn scenario_with(seed: u64, n: usize) -> Scenario {
    let spec = ScenarioSpec {
        n_cracks: n,
        ..ScenarioSpec::default()
    };
    generate_scenario(seed, &spec).expect("placement succeeds")
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Floyd-Warshall distance from every node to `t`; an admissible bound for
/// [`brute_min_path`].
pub fn distances_to(graph: &CrackGraph, t: usize) -> Vec<f64> {
    let n = graph.node_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
        for &(j, w) in graph.neighbors(i) {
            row[j] = row[j].min(w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    (0..n).map(|i| d[i][t]).collect()
}

/// Outcome of comparing one instance against enumeration.
pub struct PathCheck {
    pub model: f64,
    pub brute: f64,
}

/// SPA weight and brute-force weight on a random instance.
pub fn check_spa(scenario: &Scenario) -> PathCheck {
    let spa = crackrom::spa::build_spa_graph(scenario).unwrap();
    let (_, model) = crackrom::spa::shortest_failure_path(&spa);
    let bound = distances_to(&spa.graph, spa.right);
    let (brute, _) = brute_min_path(&spa.graph, spa.left, spa.right, &[], &|u| bound[u]).unwrap();
    PathCheck { model, brute }
}

/// NFPZ best-path weight and the brute-force minimum over paths forced
/// through some crack of the top zone (or unconstrained without zones).
pub fn check_nfpz(scenario: &Scenario) -> PathCheck {
    use crackrom::nfpz::{build_tip_graph, predict_nfpz, NfpzConfig};
    let pred = predict_nfpz(scenario, &NfpzConfig::default()).unwrap();
    let tg = build_tip_graph(scenario).unwrap();
    let bound = distances_to(&tg.graph, tg.right);
    let lb = |u: usize| bound[u];
    let brute = match pred.zones.first() {
        None => brute_min_path(&tg.graph, tg.left, tg.right, &[], &lb).unwrap().0,
        Some(zone) => {
            let required: Vec<usize> = zone.members.iter().flat_map(|id| tg.tips[id]).collect();
            brute_min_path(&tg.graph, tg.left, tg.right, &required, &lb).unwrap().0
        }
    };
    PathCheck {
        model: pred.paths[0].weight,
        brute,
    }
}

/// Largest relative gap between analytic and central-difference gradients
/// of the mean loss of a random network on random data.
pub fn gradient_check(seed: u64, output: crackrom::ml::Activation, loss: crackrom::ml::Loss) -> f64 {
    use crackrom::ml::FeedforwardNet;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut net = FeedforwardNet::new(9, &crackrom::ml::MCPIC_HIDDEN, output, seed);
    // non-zero biases so every parameter is exercised
    let mut p = net.params();
    for v in p.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    net.set_params(&p);
    let batch: Vec<(Vec<f64>, f64)> = (0..8)
        .map(|_| {
            let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let y = match loss {
                crackrom::ml::Loss::CrossEntropy => f64::from(rng.gen_bool(0.5)),
                crackrom::ml::Loss::Squared => rng.gen_range(-1.0..1.0),
            };
            (x, y)
        })
        .collect();
    let (_, analytic) = net.loss_gradient(&batch, loss);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let mut plus = p.clone();
        plus[i] += h;
        let mut minus = p.clone();
        minus[i] -= h;
        net.set_params(&plus);
        let fp = net.mean_loss(&batch, loss);
        net.set_params(&minus);
        let fm = net.mean_loss(&batch, loss);
        let numeric = (fp - fm) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Rosenbrock valley from the classic start; returns (objective, evals).
pub fn rosenbrock_fit() -> (f64, usize) {
    use crackrom::ml::{lsq_minimize, LsqOptions};
    let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let r = lsq_minimize(f, &[-1.2, 1.0], &[(-5.0, 5.0), (-5.0, 5.0)], &LsqOptions::default()).unwrap();
    (r.objective, r.evaluations)
}

/// Max deviation of a ridge fit from the cubic it interpolates.
pub fn cubic_fit_error() -> f64 {
    let p = |x: f64| 0.5 - 1.25 * x + 0.75 * x * x + 2.0 * x * x * x;
    let xs = [-1.0, 0.25, 1.0, 2.0];
    let samples: Vec<(f64, f64)> = xs.iter().map(|&x| (x, p(x))).collect();
    let m = crackrom::ml::fit_poly_ridge(&samples, 3, 0.0).unwrap();
    (0..=40)
        .map(|k| -1.0 + 3.0 * k as f64 / 40.0)
        .map(|x| (m.predict(x) - p(x)).abs())
        .fold(0.0, f64::max)
}
