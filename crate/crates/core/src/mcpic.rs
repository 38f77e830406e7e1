//! Crack-pair coalescence model: a classifier decides which pairs coalesce,
//! a regressor says when, and the predicted events are replayed through a
//! union-find to find the first left-to-right connection.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::geometry::tip_positions;
use crate::ml::{
    nn_forward, nn_train, Activation, FeedforwardNet, Loss, TrainConfig, MCPIC_HIDDEN,
    MODEL_FORMAT,
};
use crate::oracle::{tree_path, Joint, SimulationTrace};
use crate::scenario::{Crack, FailurePath, MaterialParams, Scenario, Side};

pub const FEATURE_NAMES: [&str; 9] = ["a1", "a2", "theta1", "theta2", "dx", "dy", "k1", "k2", "db"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub a1: f64,
    pub a2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub dx: f64,
    pub dy: f64,
    pub k1: f64,
    pub k2: f64,
    pub db: f64,
}

impl PairFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.a1, self.a2, self.theta1, self.theta2, self.dx, self.dy, self.k1, self.k2,
            self.db,
        ]
    }
}

/// An interior crack paired with another crack or a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrackPair {
    pub id: usize,
    pub first: usize,
    pub second: Joint,
    pub features: PairFeatures,
}

impl CrackPair {
    pub fn joints(&self) -> (Joint, Joint) {
        (Joint::Crack(self.first), self.second)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairLabel {
    pub coalesced: bool,
    pub t_coal: Option<f64>,
}

impl PairLabel {
    pub fn negative() -> Self {
        Self {
            coalesced: false,
            t_coal: None,
        }
    }

    pub fn positive(t: f64) -> Self {
        Self {
            coalesced: true,
            t_coal: Some(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairUniverse {
    /// Interior pairs plus one pair per interior crack and boundary.
    All,
    InteriorOnly,
}

/// How boundary pairs are labelled from a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryLabel {
    /// Positive once the crack's fracture touches the boundary.
    Component,
    /// Positive only when the crack itself reaches the boundary.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McpicConfig {
    pub universe: PairUniverse,
    /// Keep only interior pairs where one crack is among the other's `k`
    /// nearest neighbours (by centre distance).
    pub knn: Option<usize>,
    pub boundary_labels: BoundaryLabel,
    pub classifier: TrainConfig,
    pub regressor: TrainConfig,
    /// Fraction of training scenarios held out to choose the threshold.
    pub holdout_fraction: f64,
    pub seed: u64,
}

/// Slower, longer schedule than the generic default; the pair data are
/// large and noisy.
pub fn mcpic_schedule() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.003,
        epochs: 1000,
        patience: 50,
        ..TrainConfig::default()
    }
}

impl Default for McpicConfig {
    fn default() -> Self {
        Self {
            universe: PairUniverse::All,
            knn: None,
            boundary_labels: BoundaryLabel::Direct,
            classifier: mcpic_schedule(),
            regressor: mcpic_schedule(),
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpicModel {
    pub format: String,
    pub classifier: FeedforwardNet,
    pub regressor: FeedforwardNet,
    pub tau: f64,
    pub horizon: f64,
    pub universe: PairUniverse,
    pub knn: Option<usize>,
}

/// Mode I stress intensity with the ultimate strength as stress scale.
pub fn stress_intensity(crack: &Crack, material: &MaterialParams) -> f64 {
    if !crack.is_interior() || crack.length <= 0.0 {
        return 0.0;
    }
    let c = crack.theta_rad().cos();
    material.sigma_u * c * c * (std::f64::consts::PI * crack.length / 2.0).sqrt()
}

fn boundary_distance(crack: &Crack, side: Side, scenario: &Scenario) -> f64 {
    let x = side.x(&scenario.geometry);
    match tip_positions(crack) {
        Ok((a, b)) => (a.x - x).abs().min((b.x - x).abs()),
        Err(_) => (crack.center.x - x).abs(),
    }
}

fn nearest_boundary_distance(crack: &Crack, scenario: &Scenario) -> f64 {
    boundary_distance(crack, Side::Left, scenario).min(boundary_distance(crack, Side::Right, scenario))
}

pub fn pair_features(a: &Crack, b: &Crack, scenario: &Scenario) -> PairFeatures {
    let m = &scenario.material;
    PairFeatures {
        a1: a.length,
        a2: b.length,
        theta1: a.theta_deg,
        theta2: b.theta_deg,
        dx: (a.center.x - b.center.x).abs(),
        dy: (a.center.y - b.center.y).abs(),
        k1: stress_intensity(a, m),
        k2: stress_intensity(b, m),
        db: nearest_boundary_distance(a, scenario).min(nearest_boundary_distance(b, scenario)),
    }
}

/// Boundary pair: the pseudo-crack has zero length, 90° orientation and no
/// stress intensity; distances are measured to the boundary line.
pub fn boundary_pair_features(a: &Crack, side: Side, scenario: &Scenario) -> PairFeatures {
    PairFeatures {
        a1: a.length,
        a2: 0.0,
        theta1: a.theta_deg,
        theta2: 90.0,
        dx: (a.center.x - side.x(&scenario.geometry)).abs(),
        dy: 0.0,
        k1: stress_intensity(a, &scenario.material),
        k2: 0.0,
        db: boundary_distance(a, side, scenario),
    }
}

/// Interior pairs (smaller id first, ascending), then each interior crack
/// with the left and right boundary.
pub fn enumerate_pairs(scenario: &Scenario, universe: PairUniverse, knn: Option<usize>) -> Vec<CrackPair> {
    let mut interior: Vec<&Crack> = scenario.interior().collect();
    interior.sort_by_key(|c| c.id);
    let keep = knn.map(|k| knn_pairs(&interior, k));
    let mut out = Vec::new();
    for (i, a) in interior.iter().enumerate() {
        for b in &interior[i + 1..] {
            if keep.as_ref().is_some_and(|set| !set.contains(&(a.id, b.id))) {
                continue;
            }
            out.push(CrackPair {
                id: out.len(),
                first: a.id,
                second: Joint::Crack(b.id),
                features: pair_features(a, b, scenario),
            });
        }
    }
    if universe == PairUniverse::All {
        for a in &interior {
            for side in [Side::Left, Side::Right] {
                out.push(CrackPair {
                    id: out.len(),
                    first: a.id,
                    second: Joint::Boundary(side),
                    features: boundary_pair_features(a, side, scenario),
                });
            }
        }
    }
    out
}

fn knn_pairs(interior: &[&Crack], k: usize) -> BTreeSet<(usize, usize)> {
    let mut keep = BTreeSet::new();
    for a in interior {
        let mut others: Vec<(f64, usize)> = interior
            .iter()
            .filter(|b| b.id != a.id)
            .map(|b| (a.center.dist(b.center), b.id))
            .collect();
        others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(_, id) in others.iter().take(k) {
            keep.insert((a.id.min(id), a.id.max(id)));
        }
    }
    keep
}

/// Time at which each crack's fracture first touches each boundary.
fn component_boundary_times(scenario: &Scenario, trace: &SimulationTrace) -> BTreeMap<(usize, Side), f64> {
    let ids: Vec<usize> = scenario.interior().map(|c| c.id).collect();
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut dsu = DisjointSet::new(ids.len());
    let mut touched: BTreeMap<(usize, Side), f64> = BTreeMap::new();
    let mark = |dsu: &mut DisjointSet, touched: &mut BTreeMap<(usize, Side), f64>, member: usize, side: Side, t: f64| {
        let root = dsu.find(member);
        for (k, &id) in ids.iter().enumerate() {
            if dsu.find(k) == root {
                touched.entry((id, side)).or_insert(t);
            }
        }
    };
    for e in &trace.events {
        let Some(&i) = index.get(&e.crack) else { continue };
        match e.target {
            Joint::Boundary(side) => mark(&mut dsu, &mut touched, i, side, e.t),
            Joint::Crack(other) => {
                let Some(&j) = index.get(&other) else { continue };
                let sides: Vec<Side> = [Side::Left, Side::Right]
                    .into_iter()
                    .filter(|&s| touched.contains_key(&(ids[i], s)) || touched.contains_key(&(ids[j], s)))
                    .collect();
                dsu.union(i, j);
                for s in sides {
                    mark(&mut dsu, &mut touched, i, s, e.t);
                }
            }
        }
    }
    touched
}

pub fn label_pairs(
    scenario: &Scenario,
    trace: &SimulationTrace,
    pairs: &[CrackPair],
    mode: BoundaryLabel,
) -> Result<Vec<PairLabel>> {
    if trace.seed != scenario.seed {
        return Err(Error::PairMismatch(format!(
            "trace seed {} does not match scenario seed {}",
            trace.seed, scenario.seed
        )));
    }
    let mut direct: BTreeMap<(Joint, Joint), f64> = BTreeMap::new();
    for e in &trace.events {
        let (a, b) = e.joints();
        let key = if a <= b { (a, b) } else { (b, a) };
        direct.entry(key).or_insert(e.t);
    }
    let component = match mode {
        BoundaryLabel::Component => component_boundary_times(scenario, trace),
        BoundaryLabel::Direct => BTreeMap::new(),
    };
    pairs
        .iter()
        .map(|p| {
            if scenario.crack(p.first).is_none_or(|c| !c.is_interior()) {
                return Err(Error::PairMismatch(format!("crack {} not in scenario", p.first)));
            }
            let t = match (p.second, mode) {
                (Joint::Boundary(side), BoundaryLabel::Component) => {
                    component.get(&(p.first, side)).copied()
                }
                (second, _) => {
                    if let Joint::Crack(id) = second {
                        if scenario.crack(id).is_none() {
                            return Err(Error::PairMismatch(format!("crack {id} not in scenario")));
                        }
                    }
                    let (a, b) = p.joints();
                    let key = if a <= b { (a, b) } else { (b, a) };
                    direct.get(&key).copied()
                }
            };
            Ok(t.map_or_else(PairLabel::negative, PairLabel::positive))
        })
        .collect()
}

/// One labelled pair plus the scenario it came from (for fold splitting).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPair {
    pub group: u64,
    pub features: PairFeatures,
    pub label: PairLabel,
}

pub fn labeled_pairs(
    data: &[(Scenario, SimulationTrace)],
    config: &McpicConfig,
) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    for (scenario, trace) in data {
        let pairs = enumerate_pairs(scenario, config.universe, config.knn);
        let labels = label_pairs(scenario, trace, &pairs, config.boundary_labels)?;
        out.extend(pairs.iter().zip(labels).map(|(p, label)| LabeledPair {
            group: scenario.seed,
            features: p.features,
            label,
        }));
    }
    Ok(out)
}

/// Mean of true-positive and true-negative rates.
pub fn balanced_accuracy(scores: &[f64], labels: &[bool], tau: f64) -> f64 {
    let (mut tp, mut tn, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        if y {
            pos += 1;
            tp += usize::from(s >= tau);
        } else {
            neg += 1;
            tn += usize::from(s < tau);
        }
    }
    let tpr = if pos > 0 { tp as f64 / pos as f64 } else { 1.0 };
    let tnr = if neg > 0 { tn as f64 / neg as f64 } else { 1.0 };
    0.5 * (tpr + tnr)
}

/// Threshold in (0, 1) maximizing balanced accuracy; candidates are the
/// midpoints between distinct sorted scores, ties resolved toward the
/// larger threshold.
pub fn choose_threshold(scores: &[f64], labels: &[bool]) -> f64 {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut candidates = vec![0.5];
    candidates.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    let mut best = (f64::NEG_INFINITY, 0.5);
    for tau in candidates {
        if !(tau > 0.0 && tau < 1.0) {
            continue;
        }
        let acc = balanced_accuracy(scores, labels, tau);
        if acc > best.0 || (acc == best.0 && tau > best.1) {
            best = (acc, tau);
        }
    }
    best.1
}

pub fn train_mcpic(data: &[(Scenario, SimulationTrace)], config: &McpicConfig) -> Result<McpicModel> {
    let rows = labeled_pairs(data, config)?;
    let horizon = data.iter().map(|(_, t)| t.horizon).fold(0.0, f64::max);
    train_from_rows(&rows, horizon, config)
}

/// Trains on pre-labelled rows; `horizon` bounds predicted times.
pub fn train_from_rows(rows: &[LabeledPair], horizon: f64, config: &McpicConfig) -> Result<McpicModel> {
    let positives = rows.iter().filter(|r| r.label.coalesced).count();
    if positives == 0 || positives == rows.len() {
        return Err(Error::DegenerateLabels("both classes are required".into()));
    }
    let groups: BTreeSet<u64> = rows.iter().map(|r| r.group).collect();
    let n_hold = ((groups.len() as f64) * config.holdout_fraction).round() as usize;
    let n_hold = if groups.len() > 1 { n_hold.clamp(1, groups.len() - 1) } else { 0 };
    let held: BTreeSet<u64> = groups.iter().rev().take(n_hold).copied().collect();
    let (fold, fit): (Vec<&LabeledPair>, Vec<&LabeledPair>) = rows.iter().partition(|r| held.contains(&r.group));
    // a fold without both classes cannot score a threshold
    let fold_ok = fold.iter().any(|r| r.label.coalesced) && fold.iter().any(|r| !r.label.coalesced);
    let fit: Vec<&LabeledPair> = if fold_ok { fit } else { rows.iter().collect() };
    if !fit.iter().any(|r| r.label.coalesced) || fit.iter().all(|r| r.label.coalesced) {
        return Err(Error::DegenerateLabels("both classes are required".into()));
    }

    let class_data: Vec<(Vec<f64>, f64)> = fit
        .iter()
        .map(|r| (r.features.to_vec(), if r.label.coalesced { 1.0 } else { 0.0 }))
        .collect();
    let mut classifier = FeedforwardNet::new(9, &MCPIC_HIDDEN, Activation::Logistic, config.seed);
    let class_cfg = TrainConfig {
        seed: config.seed,
        ..config.classifier.clone()
    };
    nn_train(&mut classifier, &class_data, Loss::CrossEntropy, &class_cfg)?;

    let reg_data: Vec<(Vec<f64>, f64)> = fit
        .iter()
        .filter_map(|r| r.label.t_coal.map(|t| (r.features.to_vec(), t)))
        .collect();
    let mut regressor =
        FeedforwardNet::new(9, &MCPIC_HIDDEN, Activation::Identity, config.seed.wrapping_add(1));
    let reg_cfg = TrainConfig {
        seed: config.seed.wrapping_add(1),
        ..config.regressor.clone()
    };
    nn_train(&mut regressor, &reg_data, Loss::Squared, &reg_cfg)?;

    let tau = if fold_ok {
        let scores = fold
            .iter()
            .map(|r| nn_forward(&classifier, &r.features.to_vec()))
            .collect::<Result<Vec<f64>>>()?;
        let labels: Vec<bool> = fold.iter().map(|r| r.label.coalesced).collect();
        choose_threshold(&scores, &labels)
    } else {
        0.5
    };
    Ok(McpicModel {
        format: MODEL_FORMAT.to_string(),
        classifier,
        regressor,
        tau,
        horizon,
        universe: config.universe,
        knn: config.knn,
    })
}

impl McpicModel {
    pub fn score(&self, features: &PairFeatures) -> Result<f64> {
        nn_forward(&self.classifier, &features.to_vec())
    }

    /// Predicted coalescence time, clipped to (0, horizon].
    pub fn time(&self, features: &PairFeatures) -> Result<f64> {
        let t = nn_forward(&self.regressor, &features.to_vec())?;
        Ok(t.clamp(self.horizon * 1e-9, self.horizon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEvent {
    pub a: Joint,
    pub b: Joint,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembly {
    pub failure_time: Option<f64>,
    /// Events that merged two components, in replay order.
    pub forest: Vec<PairEvent>,
    /// Joints on the forest path from the left to the right boundary.
    pub path: Vec<Joint>,
}

/// Replays events in time order (ties by joints) through a union-find and
/// stops when the two boundaries join.
pub fn assemble(events: &[PairEvent]) -> Assembly {
    let mut sorted = events.to_vec();
    sorted.sort_by(|x, y| x.t.total_cmp(&y.t).then((x.a, x.b).cmp(&(y.a, y.b))));
    let left = Joint::Boundary(Side::Left);
    let right = Joint::Boundary(Side::Right);
    let mut index: BTreeMap<Joint, usize> = BTreeMap::from([(left, 0), (right, 1)]);
    for e in &sorted {
        for j in [e.a, e.b] {
            let next = index.len();
            index.entry(j).or_insert(next);
        }
    }
    let mut dsu = DisjointSet::new(index.len());
    let mut forest = Vec::new();
    for e in sorted {
        if dsu.union(index[&e.a], index[&e.b]) {
            forest.push(e);
            if dsu.same(0, 1) {
                let links: Vec<(Joint, Joint)> = forest.iter().map(|f| (f.a, f.b)).collect();
                let path = tree_path(&links, left, right).unwrap_or_default();
                return Assembly {
                    failure_time: Some(e.t),
                    forest,
                    path,
                };
            }
        }
    }
    Assembly {
        failure_time: None,
        forest,
        path: Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McpicPrediction {
    pub failure_time: Option<f64>,
    pub failure_path: FailurePath,
    pub events: Vec<PairEvent>,
}

pub fn predict_failure(scenario: &Scenario, model: &McpicModel) -> Result<McpicPrediction> {
    let pairs = enumerate_pairs(scenario, model.universe, model.knn);
    let mut events = Vec::new();
    for p in &pairs {
        if model.score(&p.features)? >= model.tau {
            let (a, b) = p.joints();
            events.push(PairEvent {
                a,
                b,
                t: model.time(&p.features)?,
            });
        }
    }
    let assembly = assemble(&events);
    let mut ids: Vec<usize> = assembly
        .path
        .iter()
        .filter_map(|j| match j {
            Joint::Crack(id) => Some(*id),
            Joint::Boundary(_) => None,
        })
        .collect();
    let cx = |id: usize| scenario.crack(id).map_or(0.0, |c| c.center.x);
    ids.sort_by(|a, b| cx(*a).total_cmp(&cx(*b)).then(a.cmp(b)));
    Ok(McpicPrediction {
        failure_time: assembly.failure_time,
        failure_path: FailurePath::new(ids, assembly.failure_time.is_some()),
        events,
    })
}

/// Labelled-pair CSV: nine feature columns then `coalesced,t_coal`.
pub fn write_pairs_csv<W: Write>(out: W, rows: &[LabeledPair]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.extend(["coalesced", "t_coal"]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.features.to_vec().iter().map(|v| v.to_string()).collect();
        rec.push(u8::from(r.label.coalesced).to_string());
        rec.push(r.label.t_coal.map(|t| t.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
