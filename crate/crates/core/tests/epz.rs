mod common;

use crackrom::epz::{
    active_set, crack_growth_factor, ellipse_for, in_ellipse, predict_epz, step_epz, train_epz, update_orientation,
    ConicForm, EpzNode, EpzParams, EpzState, EpzTrainConfig, NodeEvent, Threshold,
};
use crackrom::oracle::SimulationTrace;
use crackrom::{Crack, FailurePath, MaterialParams, Point, SampleGeometry, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario_in(geometry: SampleGeometry, cracks: Vec<Crack>) -> Scenario {
    Scenario::with_boundaries(0, geometry, MaterialParams::concrete(), cracks).unwrap()
}

fn node_at(x: f64, y: f64, theta: f64) -> EpzNode {
    EpzNode {
        id: 0,
        pos: Point::new(x, y),
        partner: 1,
        theta_deg: theta,
        active: true,
        lineage: 0,
    }
}

#[test]
fn growth_factor_worked_example() {
    let g = SampleGeometry::new(2.0, 3.0).unwrap();
    let s = scenario_in(g, vec![]);
    // D_y = 1.5, D_x = 1.0
    let c = crack_growth_factor(&node_at(1.0, 1.5, 0.0), 0.3, &s);
    assert!((c - 0.030945).abs() < 1e-5, "{c}");
    assert!(crack_growth_factor(&node_at(1.0, 1.5, 90.0), 0.3, &s).abs() < 1e-18);
    assert_eq!(crack_growth_factor(&node_at(1.0, 3.0, 0.0), 0.3, &s), 0.0);
}

#[test]
fn growth_factor_is_floored_at_the_edges() {
    let s = scenario_in(SampleGeometry::default(), vec![]);
    let at_edge = crack_growth_factor(&node_at(0.0, 1.0, 0.0), 0.3, &s);
    let near = crack_growth_factor(&node_at(1e-3, 1.0, 0.0), 0.3, &s);
    assert!(at_edge.is_finite());
    assert!((at_edge - near).abs() < 1e-12 * near);
}

#[test]
fn gamma_ramp_anchors() {
    let p = EpzParams::default();
    assert_eq!(p.gamma(0.0), 5.0);
    assert_eq!(p.gamma(p.horizon / 2.0), 10.0);
    assert_eq!(p.gamma(p.horizon), 15.0);
    let steep = EpzParams { gamma_slope: 2.0, ..EpzParams::default() };
    assert_eq!(steep.gamma(p.horizon), 15.0);
}

#[test]
fn cutoff_examples() {
    assert_eq!(active_set(&[0.1, 0.2, 0.3], Threshold::Inclusive), vec![2]);
    assert!(active_set(&[0.2, 0.2], Threshold::Strict).is_empty());
    assert_eq!(active_set(&[0.2, 0.2], Threshold::Inclusive), vec![0, 1]);
    assert_eq!(active_set(&[0.4], Threshold::Inclusive), vec![0]);
    assert!(active_set(&[0.0, 0.0], Threshold::Inclusive).is_empty());
}

#[test]
fn radius_is_linear_in_gamma_and_vertex_sits_on_the_tip() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = EpzParams::default();
    for _ in 0..200 {
        let tip = Point::new(rng.gen_range(0.2..1.8), rng.gen_range(0.2..2.8));
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let a = rng.gen_range(0.05..0.6);
        let partner = tip + Point::new(ang.cos(), ang.sin()) * a;
        let c = rng.gen_range(0.01..1.0);
        let e0 = ellipse_for(tip, partner, 0, c, 0.0, &p).unwrap();
        let e1 = ellipse_for(tip, partner, 0, c, p.horizon, &p).unwrap();
        assert!((e0.semi_major - c * a * 5.0).abs() < 1e-12);
        assert!((e1.semi_major / e0.semi_major - 3.0).abs() < 1e-9);
        for e in [e0, e1] {
            assert!(in_ellipse(tip, &e, ConicForm::Standard));
            assert!(!in_ellipse(partner, &e, ConicForm::Standard));
            assert!((e.semi_minor - 2.0 * e.semi_major * (1.0 - p.eccentricity)).abs() < 1e-12);
        }
    }
    let degenerate = ellipse_for(Point::new(1.0, 1.0), Point::new(1.0, 1.0), 7, 1.0, 0.0, &p);
    assert!(matches!(degenerate, Err(crackrom::Error::DegenerateCrack(7))));
}

#[test]
fn ellipse_center_example() {
    // r = 0.5 from normalized factor 1, a = 0.3, γ = 5/3
    let p = EpzParams { gamma_slope: 0.0, ..EpzParams::default() };
    let e = ellipse_for(Point::new(1.0, 1.0), Point::new(0.7, 1.0), 0, 1.0 / 3.0, 0.0, &p).unwrap();
    assert!((e.center.x - 1.5).abs() < 1e-12 && (e.center.y - 1.0).abs() < 1e-12);
}

#[test]
fn orientation_examples_and_damping() {
    let o = Point::new(0.0, 0.0);
    assert_eq!(update_orientation(o, 30.0, 0.3, Some((Point::new(1.0, 0.0), 0.0, 0.3))), 0.0);
    let blended = update_orientation(o, 30.0, 0.3, Some((Point::new(0.0, 1.0), 0.0, 0.3)));
    assert!((blended - 13.5).abs() < 1e-12);
    assert_eq!(update_orientation(o, 60.0, 0.3, None), 30.0);
    for start in [1.0, 45.0, 90.0, 127.9] {
        let mut th = start;
        for _ in 0..7 {
            th = update_orientation(o, th, 0.3, None);
        }
        assert!(th < 1.0, "start {start} -> {th}");
    }
}

#[test]
fn lifecycle_invariants_on_generated_scenarios() {
    let params = EpzParams::default();
    for seed in [150u64, 153, 161] {
        let s = common::scenario_with(seed, 20);
        let mut state = EpzState::new(&s).unwrap();
        let mut components = usize::MAX;
        for k in 1..=params.steps() {
            let before = state.events.len();
            let active_before = state.active_nodes().len();
            step_epz(&mut state, &s, k as f64 * params.dt, &params).unwrap();
            let new = &state.events[before..];
            let created = new.iter().filter(|e| matches!(e, NodeEvent::Create { .. })).count();
            let deact = new.iter().filter(|e| matches!(e, NodeEvent::Deactivate { .. })).count();
            assert_eq!(state.active_nodes().len() + deact, active_before + created);
            let lineages = state.cracks.len();
            let mut dsu = crackrom::dsu::DisjointSet::new(lineages);
            for e in &state.events {
                if let NodeEvent::Coalesce { a, b, .. } = e {
                    dsu.union(state.nodes[*a].lineage, state.nodes[*b].lineage);
                }
            }
            assert!(dsu.components() <= components);
            components = dsu.components();
            if state.spanning_component().is_some() {
                break;
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &state.events {
            if let NodeEvent::Deactivate { node, .. } = e {
                assert!(seen.insert(*node), "node {node} deactivated twice");
            }
        }
        for n in &state.nodes {
            assert!(n.pos.x >= 0.0 && n.pos.x <= s.geometry.w);
            assert!(n.pos.y >= 0.0 && n.pos.y <= s.geometry.h);
            if n.active {
                assert!(state.crack_length(n.id) > 0.0);
            }
        }
    }
}

#[test]
fn collinear_chain_fails_through_all_three_cracks() {
    let s = scenario_in(
        SampleGeometry::default(),
        vec![
            Crack::interior(0, Point::new(0.3, 1.5), 0.5, 0.0),
            Crack::interior(1, Point::new(1.0, 1.5), 0.5, 0.0),
            Crack::interior(2, Point::new(1.7, 1.5), 0.5, 0.0),
        ],
    );
    let params = EpzParams {
        growth_constant: 0.02,
        ..EpzParams::default()
    };
    let pred = predict_epz(&s, &params).unwrap();
    assert_eq!(pred.failure_path.crack_ids, vec![0, 1, 2]);
    let t = pred.failure_time.unwrap();
    assert!(t <= 5.0 * params.dt + 1e-15, "took {t}");
}

#[test]
fn zero_growth_constant_never_fails() {
    let s = common::scenario_with(155, 20);
    let p = EpzParams {
        growth_constant: 0.0,
        ..EpzParams::default()
    };
    let pred = predict_epz(&s, &p).unwrap();
    assert_eq!(pred.failure_time, None);
    assert!(pred.failure_path.is_empty());
}

#[test]
fn network_dump_is_one_json_object_per_line() {
    let s = common::scenario_with(150, 20);
    let pred = predict_epz(&s, &EpzParams::default()).unwrap();
    let mut buf = Vec::new();
    pred.network.write_jsonl(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), pred.network.events.len());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("kind").is_some());
    }
}

fn synthetic_trace(seed: u64, t: f64, path: FailurePath) -> SimulationTrace {
    SimulationTrace {
        seed,
        config_hash: String::new(),
        horizon: 0.007,
        snapshots: Vec::new(),
        events: Vec::new(),
        failure_time: Some(t),
        failure_path: Some(path),
    }
}

#[test]
fn training_recovers_self_generated_failure_times() {
    let truth = EpzParams {
        growth_constant: 0.02,
        ..EpzParams::default()
    };
    let data: Vec<(Scenario, SimulationTrace)> = (150..156u64)
        .filter_map(|seed| {
            let s = common::scenario_with(seed, 20);
            let p = predict_epz(&s, &truth).unwrap();
            let t = p.failure_time?;
            Some((s, synthetic_trace(seed, t, p.failure_path)))
        })
        .collect();
    assert!(data.len() >= 4);
    let config = EpzTrainConfig {
        initial: EpzParams {
            growth_constant: 0.015,
            ..EpzParams::default()
        },
        max_evals: 80,
        ..EpzTrainConfig::default()
    };
    let fit = train_epz(&data, &config).unwrap();
    assert!(fit.result.objective <= fit.initial_objective);
    let mut worst = 0.0f64;
    for (s, tr) in &data {
        let t = predict_epz(s, &fit.params).unwrap().failure_time.unwrap_or(truth.horizon);
        worst = worst.max((t - tr.failure_time.unwrap()).abs());
    }
    assert!(worst < 0.05 * truth.horizon, "worst error {worst}");
    let again = train_epz(&data, &config).unwrap();
    assert_eq!(again.params, fit.params);
}
