use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crackrom::harness::{
    build_dataset, categorize, evaluate, read_dataset, read_models, score, train_models, write_dataset, write_models,
    write_parity, write_report, Category, ModelKind, ModelPrediction, PipelineConfig,
};
use crackrom::ml::TrainConfig;
use crackrom::oracle::{CoalescenceEvent, Joint, SimulationTrace};
use crackrom::{FailurePath, Side};
use sha2::{Digest, Sha256};

fn small_config() -> PipelineConfig {
    let mut c = PipelineConfig {
        n_train: 12,
        n_validation: 6,
        ..PipelineConfig::default()
    };
    c.oracle.seed = 150;
    let quick = TrainConfig {
        epochs: 40,
        ..crackrom::mcpic::mcpic_schedule()
    };
    c.mcpic.classifier = quick.clone();
    c.mcpic.regressor = quick;
    c.epz.max_evals = 15;
    c
}

fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                let h = Sha256::digest(fs::read(&p).unwrap());
                out.insert(rel, h.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}

fn run_pipeline(out: &Path, config: &PipelineConfig) -> crackrom::harness::EvaluationReport {
    let dataset = build_dataset(config).unwrap();
    write_dataset(&dataset, out).unwrap();
    let dataset = read_dataset(out).unwrap();
    let models = train_models(&dataset.train, &dataset.config, &ModelKind::ALL).unwrap();
    write_models(&models, out).unwrap();
    let models = read_models(out).unwrap();
    let report = evaluate(&dataset, &models, &ModelKind::ALL).unwrap();
    write_report(&report, &dataset.validation, out).unwrap();
    report
}

#[test]
fn pipeline_writes_the_file_tree_deterministically() {
    let config = small_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(a.path(), &config);
    let rb = run_pipeline(b.path(), &config);
    assert_eq!(ra.digest().unwrap(), rb.digest().unwrap());
    let (da, db) = (tree_digest(a.path()), tree_digest(b.path()));
    assert_eq!(da, db);

    let count = |prefix: &str, ext: &str| da.keys().filter(|k| k.starts_with(prefix) && k.ends_with(ext)).count();
    assert_eq!(count("scenarios/", ".json"), 18);
    assert_eq!(count("traces/", ".jsonl"), 18);
    assert_eq!(count("report/damage_", ".csv"), 6);
    for f in ["models/op.json", "models/mcpic.json", "models/epz.json", "report/table1.csv", "report/parity.csv", "report/report.json", "dataset.json"] {
        assert!(da.contains_key(f), "missing {f}");
    }

    assert_eq!(ra.category_sizes.values().sum::<usize>(), 6);
    for m in ModelKind::ALL {
        for c in Category::ALL {
            assert!(ra.match_count(m, c) <= ra.category_sizes[&c]);
        }
    }
    let failed = ra.scenarios.iter().filter(|s| s.truth_time.is_some()).count();
    assert_eq!(ra.parity.len(), failed * 3);
    let parity = fs::read_to_string(a.path().join("report/parity.csv")).unwrap();
    assert_eq!(parity.lines().count(), failed * 3 + 1);
    let table = fs::read_to_string(a.path().join("report/table1.csv")).unwrap();
    assert!(table.starts_with("model,failed_unbranched,failed_branched,not_failed,total"));
    for s in &ra.scenarios {
        assert!(s.predictions[&ModelKind::Spa].time.is_none());
        assert!(s.predictions[&ModelKind::Nfpz].time.is_none());
    }
}

fn validation() -> Vec<crackrom::harness::Case> {
    let mut c = small_config();
    c.n_train = 1;
    c.n_validation = 8;
    build_dataset(&c).unwrap().validation
}

#[test]
fn cheat_model_matches_everything_and_empty_model_almost_nothing() {
    let val = validation();
    let cheat: Vec<BTreeMap<ModelKind, ModelPrediction>> = val
        .iter()
        .map(|(s, t)| {
            BTreeMap::from([(
                ModelKind::Mcpic,
                ModelPrediction {
                    path: t.dominant_fracture(s),
                    time: t.failure_time,
                },
            )])
        })
        .collect();
    let r = score(&val, &cheat, &[ModelKind::Mcpic]).unwrap();
    let total: usize = Category::ALL.iter().map(|&c| r.match_count(ModelKind::Mcpic, c)).sum();
    assert_eq!(total, val.len());
    assert!(r.parity.iter().all(|p| p.predicted == Some(p.truth)));

    let empty: Vec<_> = val
        .iter()
        .map(|_| {
            BTreeMap::from([(
                ModelKind::Spa,
                ModelPrediction {
                    path: FailurePath::empty(),
                    time: None,
                },
            )])
        })
        .collect();
    let r = score(&val, &empty, &[ModelKind::Spa]).unwrap();
    let expected = val.iter().filter(|(s, t)| t.dominant_fracture(s).is_empty()).count();
    let total: usize = Category::ALL.iter().map(|&c| r.match_count(ModelKind::Spa, c)).sum();
    assert_eq!(total, expected);
    assert!(r.parity.is_empty());
}

#[test]
fn constant_time_model_gives_a_vertical_parity_band() {
    let val = validation();
    let preds: Vec<_> = val
        .iter()
        .map(|_| {
            BTreeMap::from([(
                ModelKind::Op,
                ModelPrediction {
                    path: FailurePath::empty(),
                    time: Some(0.005),
                },
            )])
        })
        .collect();
    let r = score(&val, &preds, &[ModelKind::Op]).unwrap();
    assert!(r.parity.iter().all(|p| p.predicted == Some(0.005)));
    assert_eq!(r.time_stats[&ModelKind::Op].sd, Some(0.0));
    let mut buf = Vec::new();
    write_parity(&mut buf, &r).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",5.000000e-3")));
}

#[test]
fn missing_predictions_are_reported_as_not_available() {
    let val = validation();
    let preds = vec![BTreeMap::new(); val.len()];
    let r = score(&val, &preds, &[ModelKind::Epz]).unwrap();
    let failed = val.iter().filter(|(_, t)| t.failure_time.is_some()).count();
    assert_eq!(r.time_stats[&ModelKind::Epz].missing, failed);
    let mut buf = Vec::new();
    write_parity(&mut buf, &r).unwrap();
    assert!(String::from_utf8(buf).unwrap().lines().skip(1).all(|l| l.ends_with(",n/a")));
    assert!(score(&val, &preds[1..], &[ModelKind::Epz]).is_err());
}

fn link(crack: usize, target: Joint, t: f64) -> CoalescenceEvent {
    CoalescenceEvent {
        step: 0,
        t,
        crack,
        tip: 0,
        target,
        distance: 0.0,
        radius: 0.1,
    }
}

fn linked_trace(events: Vec<CoalescenceEvent>, failed: bool) -> SimulationTrace {
    let mut t = SimulationTrace {
        seed: 0,
        config_hash: String::new(),
        horizon: 0.007,
        snapshots: Vec::new(),
        events,
        failure_time: failed.then_some(0.004),
        failure_path: None,
    };
    if failed {
        let links = t.links();
        let path = crackrom::oracle::tree_path(&links, Joint::Boundary(Side::Left), Joint::Boundary(Side::Right)).unwrap();
        let ids = path
            .into_iter()
            .filter_map(|j| match j {
                Joint::Crack(id) => Some(id),
                Joint::Boundary(_) => None,
            })
            .collect();
        t.failure_path = Some(FailurePath::new(ids, true));
    }
    t
}

#[test]
fn categories_from_link_degrees() {
    let l = Joint::Boundary(Side::Left);
    let r = Joint::Boundary(Side::Right);
    let chain = vec![link(0, l, 0.001), link(0, Joint::Crack(1), 0.002), link(1, r, 0.004)];
    assert_eq!(categorize(&linked_trace(chain.clone(), true)), Category::FailedUnbranched);
    let mut branched = chain;
    branched.insert(1, link(0, Joint::Crack(2), 0.0015));
    assert_eq!(categorize(&linked_trace(branched.clone(), true)), Category::FailedBranched);
    assert_eq!(categorize(&linked_trace(branched, false)), Category::NotFailed);
}
