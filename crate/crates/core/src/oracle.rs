//! Desk-scale reference simulator.
//!
//! Scenarios are generated by seeded rejection sampling and evolved with a
//! rule-based, Mode I dominated growth law: a linearly ramped nominal stress
//! activates tips once an orientation- and length-scaled threshold is
//! crossed, active tips advance horizontally (or toward a nearby attractor
//! tip), and tips that come within a capture radius of another crack body
//! coalesce with it. The capture radius is `κ·(ℓ₁ + ℓ₂)` on the initial
//! lengths, the same scale as the process-zone size used by the NFPZ model. The run ends when one connected fracture spans the
//! sample width or the horizon is reached.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::geometry::{point_polyline_distance, point_segment_distance, tip_positions, Point};
use crate::scenario::{Crack, FailurePath, MaterialParams, SampleGeometry, Scenario, Side};

/// Parameters for [`generate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub n_cracks: usize,
    pub crack_length: f64,
    pub orientations_deg: Vec<f64>,
    pub geometry: SampleGeometry,
    pub material: MaterialParams,
    /// Clearance between every crack and the sample edges.
    pub margin: f64,
    /// Minimum tip-to-body separation between distinct cracks.
    pub min_separation: f64,
    pub max_attempts: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_cracks: 20,
            crack_length: 0.3,
            orientations_deg: vec![0.0, 60.0, 120.0],
            geometry: SampleGeometry::default(),
            material: MaterialParams::default(),
            margin: 0.1,
            min_separation: 0.05,
            max_attempts: 10_000,
        }
    }
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let cross = |o: Point, p: Point, q: Point| (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Distance between two closed segments.
pub fn segment_distance(a: Point, b: Point, c: Point, d: Point) -> f64 {
    if segments_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Places `n_cracks` non-overlapping cracks uniformly at random and appends
/// the two boundary pseudo-cracks. Deterministic in `seed`.
pub fn generate_scenario(seed: u64, spec: &ScenarioSpec) -> Result<Scenario> {
    spec.geometry.validate()?;
    if spec.orientations_deg.is_empty() {
        return Err(Error::InvalidArgument("orientation set is empty".into()));
    }
    let g = spec.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<Crack> = Vec::with_capacity(spec.n_cracks);
    let mut attempts = 0;
    while placed.len() < spec.n_cracks {
        if attempts >= spec.max_attempts {
            return Err(Error::CannotPlaceCracks {
                attempts,
                placed: placed.len(),
                requested: spec.n_cracks,
            });
        }
        attempts += 1;
        let cx = rng.gen_range(0.0..g.w);
        let cy = rng.gen_range(0.0..g.h);
        let theta = spec.orientations_deg[rng.gen_range(0..spec.orientations_deg.len())];
        let candidate = Crack::interior(placed.len(), Point::new(cx, cy), spec.crack_length, theta);
        let (a, b) = tip_positions(&candidate)?;
        let m = spec.margin;
        let inside = |p: Point| p.x >= m && p.x <= g.w - m && p.y >= m && p.y <= g.h - m;
        if !(inside(a) && inside(b)) {
            continue;
        }
        let clear = placed.iter().all(|other| {
            let (c, d) = tip_positions(other).expect("interior crack");
            segment_distance(a, b, c, d) >= spec.min_separation
        });
        if clear {
            placed.push(candidate);
        }
    }
    Scenario::with_boundaries(seed, g, spec.material, placed)
}

/// Settings of the reference simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Macro time step, s.
    pub dt: f64,
    pub n_steps: usize,
    /// Activation threshold as a fraction of the tensile strength.
    pub onset_calibration: f64,
    /// Tip speed scale, m^(1/2)/s.
    pub growth_rate_constant: f64,
    /// Capture radius as a fraction of the summed crack lengths.
    pub capture_factor: f64,
    pub snapshot_stride: usize,
    /// Length at which the activation threshold is quoted, m.
    pub reference_length: f64,
    /// Base seed for scenario generation.
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dt: 2e-5,
            n_steps: 350,
            onset_calibration: DEFAULT_ONSET_CALIBRATION,
            growth_rate_constant: DEFAULT_GROWTH_RATE,
            capture_factor: 0.3,
            snapshot_stride: 1,
            reference_length: 0.3,
            seed: 0,
        }
    }
}

/// Puts the first activation of a horizontal reference-length crack at the
/// 75th default step (t = 1.5 ms) for the default material and geometry.
pub const DEFAULT_ONSET_CALIBRATION: f64 = 0.282;

/// Tuned with [`calibrate_growth_rate`] so that about 25 of the 35 default
/// validation scenarios fail inside the horizon.
pub const DEFAULT_GROWTH_RATE: f64 = 62.0;

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.n_steps > 0 && self.capture_factor > 0.0) {
            return Err(Error::InvalidArgument(
                "oracle config needs dt > 0, n_steps > 0 and capture_factor > 0".into(),
            ));
        }
        if self.snapshot_stride == 0 || self.reference_length <= 0.0 {
            return Err(Error::InvalidArgument(
                "snapshot_stride and reference_length must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Onset constant that places the first activation of a horizontal
    /// reference-length crack at `t_onset`.
    pub fn onset_for(t_onset: f64, material: &MaterialParams, geometry: &SampleGeometry) -> f64 {
        material.young_modulus * material.v * t_onset / (geometry.h * material.sigma_u)
    }

    /// Short stable digest of the configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Crack or lateral boundary taking part in a coalescence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    Crack(usize),
    Boundary(Side),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalescenceEvent {
    pub step: usize,
    pub t: f64,
    /// Crack whose tip made contact.
    pub crack: usize,
    pub tip: u8,
    pub target: Joint,
    pub distance: f64,
    pub radius: f64,
}

impl CoalescenceEvent {
    pub fn joints(&self) -> (Joint, Joint) {
        (Joint::Crack(self.crack), self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrackSnapshot {
    pub id: usize,
    /// Polyline from tip 0 through the original crack to tip 1.
    pub body: Vec<[f64; 2]>,
    pub length: f64,
    pub tip_theta_deg: [f64; 2],
    pub active: [bool; 2],
}

impl CrackSnapshot {
    pub fn tip(&self, index: u8) -> Point {
        let p = if index == 0 {
            self.body[0]
        } else {
            self.body[self.body.len() - 1]
        };
        Point::new(p[0], p[1])
    }

    pub fn body_points(&self) -> Vec<Point> {
        self.body.iter().map(|p| Point::new(p[0], p[1])).collect()
    }

    pub fn x_extent(&self) -> (f64, f64) {
        self.body
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[0]), hi.max(p[0])))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub damage: f64,
    pub cracks: Vec<CrackSnapshot>,
}

impl Snapshot {
    pub fn crack(&self, id: usize) -> Option<&CrackSnapshot> {
        self.cracks.iter().find(|c| c.id == id)
    }
}

/// Output of [`run_reference`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub seed: u64,
    pub config_hash: String,
    pub horizon: f64,
    pub snapshots: Vec<Snapshot>,
    pub events: Vec<CoalescenceEvent>,
    pub failure_time: Option<f64>,
    pub failure_path: Option<FailurePath>,
}

#[derive(Debug, Clone)]
struct TipSim {
    /// Vertices from the original tip outward; `path[0]` is the original tip.
    path: Vec<Point>,
    dir: Option<Point>,
    active: bool,
    arrested: bool,
}

impl TipSim {
    fn pos(&self) -> Point {
        *self.path.last().expect("non-empty path")
    }

    fn grown(&self) -> f64 {
        self.path.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    fn advance(&mut self, dir: Point, to: Point) {
        let extend = self.path.len() >= 2
            && self
                .dir
                .is_some_and(|d| (d.x - dir.x).abs() < 1e-12 && (d.y - dir.y).abs() < 1e-12);
        if extend {
            *self.path.last_mut().expect("non-empty") = to;
        } else {
            self.path.push(to);
        }
        self.dir = Some(dir);
    }
}

#[derive(Debug, Clone)]
struct CrackSim {
    id: usize,
    theta_deg: f64,
    initial_length: f64,
    tips: [TipSim; 2],
}

impl CrackSim {
    fn length(&self) -> f64 {
        self.initial_length + self.tips[0].grown() + self.tips[1].grown()
    }

    fn body(&self) -> Vec<Point> {
        let mut v: Vec<Point> = self.tips[0].path.iter().rev().copied().collect();
        v.extend(self.tips[1].path.iter().copied());
        v
    }

    fn snapshot(&self) -> CrackSnapshot {
        let theta = |t: &TipSim| match t.dir {
            Some(d) => crate::scenario::normalize_angle_deg(d.y.atan2(d.x).to_degrees()),
            None => self.theta_deg,
        };
        CrackSnapshot {
            id: self.id,
            body: self.body().iter().map(|p| [p.x, p.y]).collect(),
            length: self.length(),
            tip_theta_deg: [theta(&self.tips[0]), theta(&self.tips[1])],
            active: [self.tips[0].active, self.tips[1].active],
        }
    }
}

/// Deviation of a direction from horizontal, in radians within [0, π/2].
fn deviation_from_horizontal(d: Point) -> f64 {
    d.y.abs().atan2(d.x.abs())
}

struct Simulator<'a> {
    scenario: &'a Scenario,
    config: &'a OracleConfig,
    cracks: Vec<CrackSim>,
    /// Crack-to-crack connectivity; drives the growth aggregates.
    fractures: DisjointSet,
    /// Fractures plus the two boundary nodes; decides failure.
    dsu: DisjointSet,
    touches: Vec<[bool; 2]>,
    events: Vec<CoalescenceEvent>,
}

impl<'a> Simulator<'a> {
    fn new(scenario: &'a Scenario, config: &'a OracleConfig) -> Result<Self> {
        let mut interior: Vec<&Crack> = scenario.interior().collect();
        interior.sort_by_key(|c| c.id);
        let cracks = interior
            .iter()
            .map(|c| {
                let (a, b) = tip_positions(c)?;
                let tip = |p| TipSim {
                    path: vec![p],
                    dir: None,
                    active: false,
                    arrested: false,
                };
                Ok(CrackSim {
                    id: c.id,
                    theta_deg: c.theta_deg,
                    initial_length: c.length,
                    tips: [tip(a), tip(b)],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = cracks.len();
        Ok(Self {
            scenario,
            config,
            cracks,
            fractures: DisjointSet::new(n),
            dsu: DisjointSet::new(n + 2),
            touches: vec![[false; 2]; n],
            events: Vec::new(),
        })
    }

    fn left(&self) -> usize {
        self.cracks.len()
    }

    fn right(&self) -> usize {
        self.cracks.len() + 1
    }

    fn failed(&mut self) -> bool {
        let (l, r) = (self.left(), self.right());
        self.dsu.same(l, r)
    }

    fn snapshot(&self, step: usize) -> Snapshot {
        let cracks: Vec<CrackSnapshot> = self.cracks.iter().map(CrackSim::snapshot).collect();
        let damage = self
            .cracks
            .iter()
            .map(|c| c.length() - c.initial_length)
            .sum::<f64>()
            .max(0.0);
        Snapshot {
            step,
            t: step as f64 * self.config.dt,
            damage,
            cracks,
        }
    }

    /// Per-component aggregates: total length, x-range endpoints and the
    /// outermost live tips.
    fn components(&mut self) -> BTreeMap<usize, Component> {
        let mut comps: BTreeMap<usize, Component> = BTreeMap::new();
        for i in 0..self.cracks.len() {
            let root = self.fractures.find(i);
            let crack = &self.cracks[i];
            let entry = comps.entry(root).or_insert_with(Component::empty);
            entry.members += 1;
            entry.length += crack.length();
            for p in crack.body() {
                if p.x < entry.min_point.x {
                    entry.min_point = p;
                }
                if p.x > entry.max_point.x {
                    entry.max_point = p;
                }
            }
            for (j, tip) in crack.tips.iter().enumerate() {
                if tip.arrested {
                    continue;
                }
                let x = tip.pos().x;
                if entry.leftmost.is_none_or(|(_, _, lx)| x < lx) {
                    entry.leftmost = Some((i, j, x));
                }
                if entry.rightmost.is_none_or(|(_, _, rx)| x > rx) {
                    entry.rightmost = Some((i, j, x));
                }
            }
        }
        comps
    }

    fn step(&mut self, step: usize) {
        let t = step as f64 * self.config.dt;
        let m = &self.scenario.material;
        let g = &self.scenario.geometry;
        let sigma = m.young_modulus * m.v * t / g.h;
        let comps = self.components();

        // Only the outermost live tips of a merged fracture keep driving it.
        for i in 0..self.cracks.len() {
            let root = self.fractures.find(i);
            let comp = &comps[&root];
            if comp.members < 2 {
                continue;
            }
            for j in 0..2 {
                let outer = comp.leftmost.is_some_and(|(ci, cj, _)| ci == i && cj == j)
                    || comp.rightmost.is_some_and(|(ci, cj, _)| ci == i && cj == j);
                if !outer {
                    self.cracks[i].tips[j].arrested = true;
                }
            }
        }

        // activation and growth
        let mut moves: Vec<(usize, usize, Point, Point)> = Vec::new();
        for i in 0..self.cracks.len() {
            let root = self.fractures.find(i);
            let comp = &comps[&root];
            for j in 0..2 {
                let tip = &self.cracks[i].tips[j];
                if tip.arrested {
                    continue;
                }
                let deviation = match tip.dir {
                    Some(d) => deviation_from_horizontal(d),
                    None if comp.members > 1 => {
                        deviation_from_horizontal(comp.max_point - comp.min_point)
                    }
                    None => {
                        deviation_from_horizontal(Point::from_angle_deg(self.cracks[i].theta_deg))
                    }
                };
                let orient = deviation.cos().powi(2);
                let driving = orient * (comp.length / self.config.reference_length).sqrt();
                let active = tip.active
                    || sigma * driving >= self.config.onset_calibration * m.sigma_u;
                if !active {
                    continue;
                }
                let dl = self.config.growth_rate_constant * orient * comp.length.sqrt() * self.config.dt;
                if dl <= 0.0 {
                    moves.push((i, j, Point::default(), tip.pos()));
                    continue;
                }
                let pos = tip.pos();
                let dir = self
                    .attractor(i, pos, root)
                    .map(|target| {
                        let d = target - pos;
                        d * (1.0 / d.norm())
                    })
                    .unwrap_or_else(|| {
                        let center = 0.5 * (comp.min_point.x + comp.max_point.x);
                        let sign = if pos.x > center {
                            1.0
                        } else if pos.x < center || j == 0 {
                            -1.0
                        } else {
                            1.0
                        };
                        Point::new(sign, 0.0)
                    });
                let mut to = pos + dir * dl;
                to.x = to.x.clamp(0.0, g.w);
                to.y = to.y.clamp(0.0, g.h);
                moves.push((i, j, dir, to));
            }
        }
        for &(i, j, dir, to) in &moves {
            let tip = &mut self.cracks[i].tips[j];
            tip.active = true;
            if dir != Point::default() {
                tip.advance(dir, to);
            }
        }

        // coalescence
        for &(i, j, _, _) in &moves {
            if self.cracks[i].tips[j].arrested {
                continue;
            }
            self.coalesce(step, t, i, j);
        }
    }

    /// Nearest tip of another fracture within the capture radius.
    fn attractor(&mut self, i: usize, pos: Point, root: usize) -> Option<Point> {
        let li = self.cracks[i].initial_length;
        let mut best: Option<(f64, usize, Point)> = None;
        for k in 0..self.cracks.len() {
            if k == i || self.fractures.find(k) == root {
                continue;
            }
            let lk = self.cracks[k].initial_length;
            let radius = self.config.capture_factor * (li + lk);
            for tip in &self.cracks[k].tips {
                let p = tip.pos();
                let d = p.dist(pos);
                if d > 0.0 && d <= radius && best.is_none_or(|(bd, bk, _)| d < bd || (d == bd && self.cracks[k].id < bk)) {
                    best = Some((d, self.cracks[k].id, p));
                }
            }
        }
        best.map(|(_, _, p)| p)
    }

    fn coalesce(&mut self, step: usize, t: f64, i: usize, j: usize) {
        let g = self.scenario.geometry;
        let kappa = self.config.capture_factor;
        let pos = self.cracks[i].tips[j].pos();
        let li = self.cracks[i].initial_length;
        let root = self.fractures.find(i);
        let touches = self.touches[root];
        // (distance, tie key, target, crack index, radius)
        let mut best: Option<(f64, (u8, usize), Joint, Option<usize>, f64)> = None;
        let mut consider = |d: f64, key: (u8, usize), joint: Joint, idx: Option<usize>, radius: f64| {
            if d <= radius && best.as_ref().is_none_or(|b| (d, key) < (b.0, b.1)) {
                best = Some((d, key, joint, idx, radius));
            }
        };
        if !touches[0] {
            consider(pos.x, (0, 0), Joint::Boundary(Side::Left), None, kappa * li);
        }
        if !touches[1] {
            consider(g.w - pos.x, (0, 1), Joint::Boundary(Side::Right), None, kappa * li);
        }
        for k in 0..self.cracks.len() {
            if k == i || self.fractures.find(k) == root {
                continue;
            }
            let other = &self.cracks[k];
            let d = point_polyline_distance(pos, &other.body());
            consider(d, (1, other.id), Joint::Crack(other.id), Some(k), kappa * (li + other.initial_length));
        }
        let Some((distance, _, target, idx, radius)) = best else {
            return;
        };
        match (target, idx) {
            (Joint::Crack(_), Some(k)) => {
                let merged = [
                    self.touches[root][0] || self.touches[self.fractures.find(k)][0],
                    self.touches[root][1] || self.touches[self.fractures.find(k)][1],
                ];
                self.fractures.union(i, k);
                self.dsu.union(i, k);
                let r = self.fractures.find(i);
                self.touches[r] = merged;
            }
            (Joint::Boundary(side), _) => {
                let (slot, node) = match side {
                    Side::Left => (0, self.left()),
                    Side::Right => (1, self.right()),
                };
                self.touches[root][slot] = true;
                self.dsu.union(i, node);
            }
            _ => unreachable!("crack targets carry an index"),
        }
        self.cracks[i].tips[j].arrested = true;
        self.events.push(CoalescenceEvent {
            step,
            t,
            crack: self.cracks[i].id,
            tip: j as u8,
            target,
            distance,
            radius,
        });
    }
}

#[derive(Debug, Clone)]
struct Component {
    members: usize,
    length: f64,
    min_point: Point,
    max_point: Point,
    leftmost: Option<(usize, usize, f64)>,
    rightmost: Option<(usize, usize, f64)>,
}

impl Component {
    fn empty() -> Self {
        Self {
            members: 0,
            length: 0.0,
            min_point: Point::new(f64::INFINITY, 0.0),
            max_point: Point::new(f64::NEG_INFINITY, 0.0),
            leftmost: None,
            rightmost: None,
        }
    }
}

/// Evolves `scenario` under the reference growth rules.
pub fn run_reference(scenario: &Scenario, config: &OracleConfig) -> Result<SimulationTrace> {
    config.validate()?;
    scenario.validate()?;
    let mut sim = Simulator::new(scenario, config)?;
    let mut snapshots = vec![sim.snapshot(0)];
    let mut failure_time = None;
    for step in 1..=config.n_steps {
        sim.step(step);
        let failed = sim.failed();
        if failed || step % config.snapshot_stride == 0 || step == config.n_steps {
            snapshots.push(sim.snapshot(step));
        }
        if failed {
            failure_time = Some(step as f64 * config.dt);
            break;
        }
    }
    let mut trace = SimulationTrace {
        seed: scenario.seed,
        config_hash: config.hash(),
        horizon: config.horizon(),
        snapshots,
        events: sim.events,
        failure_time,
        failure_path: None,
    };
    if trace.failure_time.is_some() {
        trace.failure_path = trace.spanning_path(scenario);
    }
    Ok(trace)
}

/// `(t, total new crack length)` for every snapshot.
pub fn accumulated_damage(trace: &SimulationTrace) -> Vec<(f64, f64)> {
    trace.snapshots.iter().map(|s| (s.t, s.damage)).collect()
}

impl SimulationTrace {
    /// Time of the first snapshot with nonzero accumulated damage.
    pub fn first_growth_time(&self) -> Option<f64> {
        self.snapshots.iter().find(|s| s.damage > 0.0).map(|s| s.t)
    }

    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("trace has at least one snapshot")
    }

    /// Undirected coalescence links, one per event.
    pub fn links(&self) -> Vec<(Joint, Joint)> {
        self.events.iter().map(CoalescenceEvent::joints).collect()
    }

    /// Link-graph degree of every joint that appears in a link.
    pub fn link_degrees(&self) -> BTreeMap<Joint, usize> {
        let mut deg = BTreeMap::new();
        for (a, b) in self.links() {
            *deg.entry(a).or_insert(0) += 1;
            *deg.entry(b).or_insert(0) += 1;
        }
        deg
    }

    /// Joints connected to `start` through coalescence links.
    pub fn component_of(&self, start: Joint) -> BTreeSet<Joint> {
        let links = self.links();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(a, b) in &links {
                let next = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// Cracks joined to `id` through crack-to-crack links only.
    pub fn fracture_of(&self, id: usize) -> BTreeSet<usize> {
        let pairs: Vec<(usize, usize)> = self
            .links()
            .into_iter()
            .filter_map(|l| match l {
                (Joint::Crack(a), Joint::Crack(b)) => Some((a, b)),
                _ => None,
            })
            .collect();
        let mut seen = BTreeSet::from([id]);
        let mut queue = VecDeque::from([id]);
        while let Some(u) = queue.pop_front() {
            for &(a, b) in &pairs {
                let next = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// True when some crack of the failed fracture carries three or more
    /// coalescence links (boundary links included). False for runs that did
    /// not fail.
    pub fn is_branched(&self) -> bool {
        let Some(first) = self
            .failure_path
            .as_ref()
            .and_then(|p| p.crack_ids.first().copied())
        else {
            return false;
        };
        let fracture = self.fracture_of(first);
        self.link_degrees().iter().any(|(j, d)| {
            *d >= 3 && matches!(j, Joint::Crack(id) if fracture.contains(id))
        })
    }

    /// Interior cracks on the link path from the left to the right boundary.
    pub fn spanning_path(&self, scenario: &Scenario) -> Option<FailurePath> {
        let links = self.links();
        let path = tree_path(
            &links,
            Joint::Boundary(Side::Left),
            Joint::Boundary(Side::Right),
        )?;
        let ids: Vec<usize> = path
            .into_iter()
            .filter_map(|j| match j {
                Joint::Crack(id) => Some(id),
                Joint::Boundary(_) => None,
            })
            .collect();
        let _ = scenario;
        Some(FailurePath::new(ids, true))
    }

    /// Failure path for failed runs; otherwise the fracture component with
    /// the widest horizontal reach (ties by total length), cracks ordered by
    /// centre x.
    pub fn dominant_fracture(&self, scenario: &Scenario) -> FailurePath {
        if let Some(p) = &self.failure_path {
            return p.clone();
        }
        let last = self.final_snapshot();
        let mut best: Option<(f64, f64, Vec<usize>)> = None;
        let mut done: BTreeSet<usize> = BTreeSet::new();
        for c in scenario.interior() {
            if done.contains(&c.id) {
                continue;
            }
            let members: Vec<usize> = self.fracture_of(c.id).into_iter().collect();
            let (mut lo, mut hi, mut len) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for &id in &members {
                done.insert(id);
                if let Some(cs) = last.crack(id) {
                    let (a, b) = cs.x_extent();
                    lo = lo.min(a);
                    hi = hi.max(b);
                    len += cs.length;
                }
            }
            for (a, b) in self.links() {
                if let (Joint::Crack(id), Joint::Boundary(side)) = (a, b) {
                    if members.contains(&id) {
                        match side {
                            Side::Left => lo = lo.min(0.0),
                            Side::Right => hi = hi.max(scenario.geometry.w),
                        }
                    }
                }
            }
            let reach = hi - lo;
            let better = match &best {
                None => true,
                Some((br, bl, _)) => reach > *br || (reach == *br && len > *bl),
            };
            if better {
                best = Some((reach, len, members));
            }
        }
        let Some((_, _, mut members)) = best else {
            return FailurePath::empty();
        };
        let cx = |id: usize| scenario.crack(id).map_or(0.0, |c| c.center.x);
        members.sort_by(|a, b| cx(*a).total_cmp(&cx(*b)).then(a.cmp(b)));
        FailurePath::new(members, false)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = TraceLine::Header {
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            horizon: self.horizon,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.snapshots {
            serde_json::to_writer(&mut out, &TraceLine::Snapshot(s.clone()))?;
            out.write_all(b"\n")?;
        }
        for e in &self.events {
            serde_json::to_writer(&mut out, &TraceLine::Event(e.clone()))?;
            out.write_all(b"\n")?;
        }
        let summary = TraceLine::Summary {
            failure_time: self.failure_time,
            failure_path: self.failure_path.clone(),
        };
        serde_json::to_writer(&mut out, &summary)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut trace = SimulationTrace {
            seed: 0,
            config_hash: String::new(),
            horizon: 0.0,
            snapshots: Vec::new(),
            events: Vec::new(),
            failure_time: None,
            failure_path: None,
        };
        let mut saw_header = false;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<TraceLine>(&line)? {
                TraceLine::Header {
                    seed,
                    config_hash,
                    horizon,
                } => {
                    saw_header = true;
                    trace.seed = seed;
                    trace.config_hash = config_hash;
                    trace.horizon = horizon;
                }
                TraceLine::Snapshot(s) => trace.snapshots.push(s),
                TraceLine::Event(e) => trace.events.push(e),
                TraceLine::Summary {
                    failure_time,
                    failure_path,
                } => {
                    trace.failure_time = failure_time;
                    trace.failure_path = failure_path;
                }
            }
        }
        if !saw_header || trace.snapshots.is_empty() {
            return Err(Error::Format("trace is missing its header or snapshots".into()));
        }
        Ok(trace)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Header {
        seed: u64,
        config_hash: String,
        horizon: f64,
    },
    Snapshot(Snapshot),
    Event(CoalescenceEvent),
    Summary {
        failure_time: Option<f64>,
        failure_path: Option<FailurePath>,
    },
}

/// Joint sequence connecting `from` and `to` in an acyclic link set.
pub fn tree_path(links: &[(Joint, Joint)], from: Joint, to: Joint) -> Option<Vec<Joint>> {
    let mut prev: BTreeMap<Joint, Joint> = BTreeMap::new();
    let mut queue = VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = vec![to];
            let mut cur = to;
            while cur != from {
                cur = prev[&cur];
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        let mut next: Vec<Joint> = links
            .iter()
            .filter_map(|&(a, b)| {
                if a == u {
                    Some(b)
                } else if b == u {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        next.sort();
        for v in next {
            if seen.insert(v) {
                prev.insert(v, u);
                queue.push_back(v);
            }
        }
    }
    None
}

/// Bisects the growth-rate constant until the failed fraction of `scenarios`
/// is as close as possible to `target_fraction`.
pub fn calibrate_growth_rate(
    scenarios: &[Scenario],
    base: &OracleConfig,
    target_fraction: f64,
    bounds: (f64, f64),
    iterations: usize,
) -> Result<(f64, f64)> {
    let fraction = |cg: f64| -> Result<f64> {
        let cfg = OracleConfig {
            growth_rate_constant: cg,
            ..base.clone()
        };
        let mut failed = 0usize;
        for s in scenarios {
            if run_reference(s, &cfg)?.failure_time.is_some() {
                failed += 1;
            }
        }
        Ok(failed as f64 / scenarios.len().max(1) as f64)
    };
    let (mut lo, mut hi) = bounds;
    let mut best = (hi, fraction(hi)?);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let f = fraction(mid)?;
        if (f - target_fraction).abs() < (best.1 - target_fraction).abs() {
            best = (mid, f);
        }
        if f < target_fraction {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}
