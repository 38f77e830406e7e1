//! Ellipse process-zone model. Every crack tip is a node carrying an
//! elliptical process zone sized by a crack growth factor; tips in the
//! high-propensity set either coalesce with a tip that sees them back, or
//! extend by a daughter node.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::geometry::{tip_positions, Point};
use crate::ml::{lsq_minimize, LsqFitResult, LsqOptions, MODEL_FORMAT};
use crate::oracle::SimulationTrace;
use crate::scenario::{FailurePath, Scenario};

pub const GAMMA_START: f64 = 5.0;
pub const GAMMA_END: f64 = 15.0;
/// Floor on the horizontal tip-to-edge distance in the growth factor.
pub const MIN_EDGE_DISTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `P ≥ cutoff`, so a lone or uniform set still grows.
    Inclusive,
    Strict,
}

/// Quadratic form used for the process-zone test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConicForm {
    /// Rotation matrix with opposite-signed cross terms.
    Standard,
    /// Both cross terms positive, as sometimes printed.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpzParams {
    pub format: String,
    /// Multiplier on the 5 → 15 ramp of γ over the horizon.
    pub gamma_slope: f64,
    pub eccentricity: f64,
    /// Daughter spacing `c_L·(1 + a)`.
    pub growth_constant: f64,
    pub dt: f64,
    pub horizon: f64,
    pub threshold: Threshold,
    pub conic: ConicForm,
}

impl Default for EpzParams {
    fn default() -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            gamma_slope: 1.0,
            eccentricity: 0.5,
            growth_constant: 0.01,
            dt: 2e-5,
            horizon: 0.007,
            threshold: Threshold::Inclusive,
            conic: ConicForm::Standard,
        }
    }
}

impl EpzParams {
    /// γ(t) = 5 + 10·s·t/T, capped at 15.
    pub fn gamma(&self, t: f64) -> f64 {
        (GAMMA_START + (GAMMA_END - GAMMA_START) * self.gamma_slope * t / self.horizon).min(GAMMA_END)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpzNode {
    pub id: usize,
    pub pos: Point,
    pub partner: usize,
    pub theta_deg: f64,
    pub active: bool,
    pub lineage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsePZ {
    pub center: Point,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub theta_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeEvent {
    Create {
        step: usize,
        node: usize,
        parent: Option<usize>,
        x: f64,
        y: f64,
    },
    Deactivate {
        step: usize,
        node: usize,
    },
    Coalesce {
        step: usize,
        a: usize,
        b: usize,
    },
    Boundary {
        step: usize,
        node: usize,
        left: bool,
    },
}

/// Evolving tip network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpzState {
    pub nodes: Vec<EpzNode>,
    /// Initial crack ids; lineages index into this.
    pub cracks: Vec<usize>,
    /// Crack-body edges between nodes (parent to daughter, and the two
    /// initial tips).
    pub edges: Vec<(usize, usize)>,
    pub events: Vec<NodeEvent>,
    links: Vec<(usize, usize)>,
    touches: Vec<[bool; 2]>,
    step: usize,
}

impl EpzState {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let mut interior: Vec<_> = scenario.interior().collect();
        interior.sort_by_key(|c| c.id);
        let w = scenario.geometry.w;
        let mut s = EpzState {
            nodes: Vec::new(),
            cracks: interior.iter().map(|c| c.id).collect(),
            edges: Vec::new(),
            events: Vec::new(),
            links: Vec::new(),
            touches: vec![[false; 2]; interior.len()],
            step: 0,
        };
        for (lineage, c) in interior.iter().enumerate() {
            let (t0, t1) = tip_positions(c)?;
            let base = s.nodes.len();
            for (k, p) in [t0, t1].into_iter().enumerate() {
                s.nodes.push(EpzNode {
                    id: base + k,
                    pos: p,
                    partner: base + 1 - k,
                    theta_deg: c.theta_deg.rem_euclid(180.0),
                    active: true,
                    lineage,
                });
                s.events.push(NodeEvent::Create {
                    step: 0,
                    node: base + k,
                    parent: None,
                    x: p.x,
                    y: p.y,
                });
            }
            s.edges.push((base, base + 1));
            for k in [base, base + 1] {
                s.touch_if_on_edge(k, w);
            }
        }
        Ok(s)
    }

    /// Length of the crack edge ending at `node`.
    pub fn crack_length(&self, node: usize) -> f64 {
        let n = &self.nodes[node];
        n.pos.dist(self.nodes[n.partner].pos)
    }

    pub fn active_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.active).map(|n| n.id).collect()
    }

    fn touch_if_on_edge(&mut self, node: usize, w: f64) {
        let x = self.nodes[node].pos.x;
        let lineage = self.nodes[node].lineage;
        for (side, hit) in [(0usize, x <= 0.0), (1usize, x >= w)] {
            if hit {
                self.touches[lineage][side] = true;
                self.events.push(NodeEvent::Boundary {
                    step: self.step,
                    node,
                    left: side == 0,
                });
                if self.nodes[node].active {
                    self.deactivate(node);
                }
            }
        }
    }

    fn deactivate(&mut self, node: usize) {
        if self.nodes[node].active {
            self.nodes[node].active = false;
            self.events.push(NodeEvent::Deactivate {
                step: self.step,
                node,
            });
        }
    }

    fn components(&self) -> DisjointSet {
        let mut dsu = DisjointSet::new(self.cracks.len());
        for &(a, b) in &self.links {
            dsu.union(a, b);
        }
        dsu
    }

    /// Lineages of the first component touching both sides, if any.
    pub fn spanning_component(&self) -> Option<Vec<usize>> {
        let mut dsu = self.components();
        let mut sides: BTreeMap<usize, [bool; 2]> = BTreeMap::new();
        for (l, t) in self.touches.iter().enumerate() {
            let e = sides.entry(dsu.find(l)).or_default();
            e[0] |= t[0];
            e[1] |= t[1];
        }
        let root = sides.iter().find(|(_, t)| t[0] && t[1]).map(|(r, _)| *r)?;
        Some((0..self.cracks.len()).filter(|&l| dsu.find(l) == root).collect())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `C^f = D_y·v·E·√a·cos²θ / (h·w·σ_U·ρ·D_x)` at an active tip.
pub fn crack_growth_factor(node: &EpzNode, a: f64, scenario: &Scenario) -> f64 {
    let g = &scenario.geometry;
    let m = &scenario.material;
    let dy = (g.h - node.pos.y).max(0.0);
    let dx = node.pos.x.min(g.w - node.pos.x).max(MIN_EDGE_DISTANCE);
    let c = node.theta_deg.to_radians().cos();
    dy * m.v * m.young_modulus * a.max(0.0).sqrt() * c * c / (g.h * g.w * m.sigma_u * m.rho * dx)
}

/// Indices whose normalized factor clears the mean of the maximum and the
/// average (also normalized by the maximum).
pub fn active_set(factors: &[f64], threshold: Threshold) -> Vec<usize> {
    let max = factors.iter().copied().fold(0.0, f64::max);
    if factors.is_empty() || max <= 0.0 {
        return Vec::new();
    }
    let mean = factors.iter().sum::<f64>() / factors.len() as f64;
    let cut = 0.5 * (max + mean) / max;
    factors
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            let p = *f / max;
            match threshold {
                Threshold::Inclusive => p >= cut,
                Threshold::Strict => p > cut,
            }
        })
        .map(|(i, _)| i)
        .collect()
}

/// Process zone ahead of the tip, its vertex on the tip and its major axis
/// along the partner-to-tip chord.
pub fn ellipse_for(
    tip: Point,
    partner: Point,
    node_id: usize,
    normalized_factor: f64,
    t: f64,
    params: &EpzParams,
) -> Result<EllipsePZ> {
    let a = tip.dist(partner);
    if a <= 0.0 {
        return Err(Error::DegenerateCrack(node_id));
    }
    let r = normalized_factor * a * params.gamma(t);
    let n = (partner - tip) * (1.0 / a);
    let axis = tip - partner;
    Ok(EllipsePZ {
        center: tip - n * r,
        semi_major: r,
        semi_minor: 2.0 * r * (1.0 - params.eccentricity),
        theta_deg: axis.y.atan2(axis.x).to_degrees(),
    })
}

pub fn in_ellipse(p: Point, e: &EllipsePZ, form: ConicForm) -> bool {
    if e.semi_major <= 0.0 {
        return false;
    }
    let (s, c) = e.theta_deg.to_radians().sin_cos();
    let d = p - e.center;
    let u = d.x * c + d.y * s;
    let v = match form {
        ConicForm::Standard => -d.x * s + d.y * c,
        ConicForm::Printed => d.x * s + d.y * c,
    };
    let minor = e.semi_minor;
    let q = (u / e.semi_major).powi(2)
        + if minor > 0.0 {
            (v / minor).powi(2)
        } else if v.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        };
    q <= 1.0 + 1e-9
}

/// Orientation after a step: toward a detected tip (blended when steep),
/// otherwise halved toward horizontal.
pub fn update_orientation(
    node: Point,
    theta_deg: f64,
    a_self: f64,
    partner: Option<(Point, f64, f64)>,
) -> f64 {
    match partner {
        Some((p, theta_p, a_p)) => {
            let d = p - node;
            let toward = d.y.atan2(d.x).to_degrees().rem_euclid(180.0);
            if toward > 45.0 {
                (a_self * toward + a_p * theta_p) / 2.0
            } else {
                toward
            }
        }
        None => theta_deg / 2.0,
    }
}

/// Advances the network by one macro step at time `t`.
pub fn step_epz(state: &mut EpzState, scenario: &Scenario, t: f64, params: &EpzParams) -> Result<()> {
    state.step += 1;
    let w = scenario.geometry.w;
    let h = scenario.geometry.h;
    let alive = state.active_nodes();
    if alive.is_empty() {
        return Ok(());
    }
    let factors: Vec<f64> = alive
        .iter()
        .map(|&n| crack_growth_factor(&state.nodes[n], state.crack_length(n), scenario))
        .collect();
    let max = factors.iter().copied().fold(0.0, f64::max);
    let chosen = active_set(&factors, params.threshold);
    let mut zones: BTreeMap<usize, EllipsePZ> = BTreeMap::new();
    for (k, &n) in alive.iter().enumerate() {
        let node = state.nodes[n];
        let norm = if max > 0.0 { factors[k] / max } else { 0.0 };
        zones.insert(n, ellipse_for(node.pos, state.nodes[node.partner].pos, n, norm, t, params)?);
    }
    let mut dsu = state.components();
    for &k in &chosen {
        let n = alive[k];
        if !state.nodes[n].active {
            continue;
        }
        let node = state.nodes[n];
        let zone = zones[&n];
        // nearest tip of another fracture inside this zone, ties by id
        let detected = alive
            .iter()
            .copied()
            .filter(|&p| {
                p != n
                    && state.nodes[p].active
                    && dsu.find(state.nodes[p].lineage) != dsu.find(node.lineage)
                    && in_ellipse(state.nodes[p].pos, &zone, params.conic)
            })
            .min_by(|&p, &q| {
                let dp = node.pos.dist(state.nodes[p].pos);
                let dq = node.pos.dist(state.nodes[q].pos);
                dp.total_cmp(&dq).then(p.cmp(&q))
            });
        let step_len = params.growth_constant * (1.0 + state.crack_length(n));
        if let Some(p) = detected {
            let mutual = in_ellipse(node.pos, &zones[&p], params.conic);
            let contact = step_len > 0.0 && node.pos.dist(state.nodes[p].pos) <= step_len;
            if mutual || contact {
                state.deactivate(n);
                state.deactivate(p);
                state.events.push(NodeEvent::Coalesce {
                    step: state.step,
                    a: n,
                    b: p,
                });
                state.links.push((node.lineage, state.nodes[p].lineage));
                dsu.union(node.lineage, state.nodes[p].lineage);
                continue;
            }
        }
        let a = state.crack_length(n);
        let target = detected.map(|p| {
            let q = state.nodes[p];
            (q.pos, q.theta_deg, state.crack_length(p))
        });
        let theta = update_orientation(node.pos, node.theta_deg, a, target).rem_euclid(180.0);
        // tips only grow forward, away from their own crack
        let mut dir = Point::from_angle_deg(theta);
        if dir.dot(node.pos - state.nodes[node.partner].pos) < 0.0 {
            dir = dir * -1.0;
        }
        if step_len <= 0.0 {
            continue;
        }
        let mut pos = node.pos + dir * step_len;
        pos.x = pos.x.clamp(0.0, w);
        pos.y = pos.y.clamp(0.0, h);
        let id = state.nodes.len();
        state.nodes.push(EpzNode {
            id,
            pos,
            partner: node.partner,
            theta_deg: theta,
            active: true,
            lineage: node.lineage,
        });
        state.events.push(NodeEvent::Create {
            step: state.step,
            node: id,
            parent: Some(n),
            x: pos.x,
            y: pos.y,
        });
        state.edges.push((n, id));
        let m = node.partner;
        if state.nodes[m].partner == n {
            state.nodes[m].partner = id;
        }
        state.deactivate(n);
        state.touch_if_on_edge(id, w);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpzPrediction {
    pub failure_time: Option<f64>,
    pub failure_path: FailurePath,
    pub network: EpzState,
}

pub fn predict_epz(scenario: &Scenario, params: &EpzParams) -> Result<EpzPrediction> {
    let mut state = EpzState::new(scenario)?;
    for k in 1..=params.steps() {
        let t = k as f64 * params.dt;
        step_epz(&mut state, scenario, t, params)?;
        if let Some(lineages) = state.spanning_component() {
            let mut ids: Vec<usize> = lineages.iter().map(|&l| state.cracks[l]).collect();
            let cx = |id: usize| scenario.crack(id).map_or(0.0, |c| c.center.x);
            ids.sort_by(|a, b| cx(*a).total_cmp(&cx(*b)).then(a.cmp(b)));
            return Ok(EpzPrediction {
                failure_time: Some(t),
                failure_path: FailurePath::new(ids, true),
                network: state,
            });
        }
    }
    Ok(EpzPrediction {
        failure_time: None,
        failure_path: FailurePath::empty(),
        network: state,
    })
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpzTrainConfig {
    pub initial: EpzParams,
    pub slope_bounds: (f64, f64),
    pub eccentricity_bounds: (f64, f64),
    pub growth_bounds: (f64, f64),
    /// Weight of the path term.
    pub beta: f64,
    pub max_evals: usize,
}

impl Default for EpzTrainConfig {
    fn default() -> Self {
        Self {
            initial: EpzParams::default(),
            slope_bounds: (0.0, 5.0),
            eccentricity_bounds: (0.05, 0.95),
            growth_bounds: (0.001, 0.2),
            beta: 1.0,
            max_evals: 200,
        }
    }
}

/// Mean over failed traces of `((t̂ − t)/T)² + β·(1 − Jaccard)`; a missing
/// prediction counts as failing at the horizon.
pub fn epz_objective(
    data: &[(&Scenario, &SimulationTrace)],
    params: &EpzParams,
    beta: f64,
) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for (scenario, trace) in data {
        let (Some(truth_t), Some(truth_path)) = (trace.failure_time, trace.failure_path.as_ref()) else {
            continue;
        };
        let Ok(pred) = predict_epz(scenario, params) else {
            return f64::INFINITY;
        };
        let t = pred.failure_time.unwrap_or(params.horizon);
        let dt = (t - truth_t) / params.horizon;
        total += dt * dt + beta * (1.0 - jaccard(&pred.failure_path.id_set(), &truth_path.id_set()));
        n += 1;
    }
    if n == 0 {
        f64::INFINITY
    } else {
        total / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpzFit {
    pub params: EpzParams,
    pub initial_objective: f64,
    pub result: LsqFitResult,
}

pub fn train_epz(data: &[(Scenario, SimulationTrace)], config: &EpzTrainConfig) -> Result<EpzFit> {
    let refs: Vec<(&Scenario, &SimulationTrace)> = data
        .iter()
        .filter(|(_, t)| t.failure_time.is_some())
        .map(|(s, t)| (s, t))
        .collect();
    if refs.is_empty() {
        return Err(Error::InsufficientData("no failed training traces".into()));
    }
    let base = config.initial.clone();
    let with = |x: &[f64]| EpzParams {
        gamma_slope: x[0],
        eccentricity: x[1],
        growth_constant: x[2],
        ..base.clone()
    };
    let x0 = [base.gamma_slope, base.eccentricity, base.growth_constant];
    let bounds = [config.slope_bounds, config.eccentricity_bounds, config.growth_bounds];
    let initial_objective = epz_objective(&refs, &base, config.beta);
    let options = LsqOptions {
        max_evals: config.max_evals,
        ..LsqOptions::default()
    };
    let result = lsq_minimize(|x| epz_objective(&refs, &with(x), config.beta), &x0, &bounds, &options)?;
    Ok(EpzFit {
        params: with(&result.best),
        initial_objective,
        result,
    })
}
