//! Generate/train/predict/evaluate pipeline over seeded oracle datasets.
//!
//! On-disk layout under an output directory:
//!
//! ```text
//! dataset.json              split and configuration
//! scenarios/<seed>.json
//! traces/<seed>.jsonl
//! models/{op,mcpic,epz}.json
//! report/{table1.csv, parity.csv, metrics.csv, damage_<seed>.csv, report.json}
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::epz::{predict_epz, train_epz, EpzParams, EpzTrainConfig};
use crate::error::{Error, Result};
use crate::mcpic::{predict_failure, train_mcpic, McpicConfig, McpicModel};
use crate::nfpz::{predict_nfpz, NfpzConfig};
use crate::op::{fit_op, simulate_op, OpConfig, OpModel};
use crate::oracle::{accumulated_damage, generate_scenario, run_reference, OracleConfig, ScenarioSpec, SimulationTrace};
use crate::scenario::{FailurePath, Scenario};
use crate::spa::predict_spa;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Spa,
    Op,
    Mcpic,
    Nfpz,
    Epz,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::Spa, Self::Op, Self::Mcpic, Self::Nfpz, Self::Epz];

    pub fn name(self) -> &'static str {
        match self {
            Self::Spa => "spa",
            Self::Op => "op",
            Self::Mcpic => "mcpic",
            Self::Nfpz => "nfpz",
            Self::Epz => "epz",
        }
    }

    /// SPA and NFPZ only predict a path.
    pub fn predicts_time(self) -> bool {
        matches!(self, Self::Op | Self::Mcpic | Self::Epz)
    }

    pub fn needs_training(self) -> bool {
        self.predicts_time()
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model '{s}'")))
    }
}

/// Parses a comma-separated model list; duplicates collapse.
pub fn parse_models(list: &str) -> Result<Vec<ModelKind>> {
    let mut out: Vec<ModelKind> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty model list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub n_train: usize,
    pub n_validation: usize,
    pub scenario: ScenarioSpec,
    /// `oracle.seed` is the first scenario seed.
    pub oracle: OracleConfig,
    pub op: OpConfig,
    pub mcpic: McpicConfig,
    pub nfpz: NfpzConfig,
    pub epz: EpzTrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_train: 150,
            n_validation: 35,
            scenario: ScenarioSpec::default(),
            oracle: OracleConfig::default(),
            op: OpConfig::default(),
            mcpic: McpicConfig::default(),
            nfpz: NfpzConfig::default(),
            epz: EpzTrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_validation == 0 {
            return Err(Error::InvalidArgument("n_train and n_validation must be positive".into()));
        }
        self.oracle.validate()?;
        self.scenario.geometry.validate()?;
        self.scenario.material.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(s)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn train_seeds(&self) -> Vec<u64> {
        let base = self.oracle.seed;
        (base..base + self.n_train as u64).collect()
    }

    pub fn validation_seeds(&self) -> Vec<u64> {
        let base = self.oracle.seed + self.n_train as u64;
        (base..base + self.n_validation as u64).collect()
    }
}

/// One generated scenario with its reference trace.
pub type Case = (Scenario, SimulationTrace);

#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: PipelineConfig,
    pub train: Vec<Case>,
    pub validation: Vec<Case>,
}

/// Runs `f` on a pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn simulate_seeds(seeds: &[u64], config: &PipelineConfig) -> Result<Vec<Case>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let wrap = |e: Error| Error::Seed {
                seed,
                source: Box::new(e),
            };
            let scenario = generate_scenario(seed, &config.scenario).map_err(wrap)?;
            let trace = run_reference(&scenario, &config.oracle).map_err(wrap)?;
            Ok((scenario, trace))
        })
        .collect()
}

pub fn build_dataset(config: &PipelineConfig) -> Result<Dataset> {
    config.validate()?;
    Ok(Dataset {
        config: config.clone(),
        train: simulate_seeds(&config.train_seeds(), config)?,
        validation: simulate_seeds(&config.validation_seeds(), config)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: PipelineConfig,
    train: Vec<u64>,
    validation: Vec<u64>,
}

fn scenario_path(out: &Path, seed: u64) -> PathBuf {
    out.join("scenarios").join(format!("{seed:04}.json"))
}

fn trace_path(out: &Path, seed: u64) -> PathBuf {
    out.join("traces").join(format!("{seed:04}.jsonl"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_dataset(dataset: &Dataset, out: &Path) -> Result<()> {
    fs::create_dir_all(out.join("scenarios"))?;
    fs::create_dir_all(out.join("traces"))?;
    let all: Vec<&Case> = dataset.train.iter().chain(&dataset.validation).collect();
    all.par_iter().try_for_each(|(scenario, trace)| -> Result<()> {
        fs::write(scenario_path(out, scenario.seed), scenario.to_json()? + "\n")?;
        let mut w = BufWriter::new(File::create(trace_path(out, scenario.seed))?);
        trace.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    })?;
    let manifest = Manifest {
        config: dataset.config.clone(),
        train: dataset.train.iter().map(|(s, _)| s.seed).collect(),
        validation: dataset.validation.iter().map(|(s, _)| s.seed).collect(),
    };
    write_json(&out.join("dataset.json"), &manifest)
}

pub fn read_dataset(out: &Path) -> Result<Dataset> {
    let manifest: Manifest = read_json(&out.join("dataset.json"))?;
    let load = |seeds: &[u64]| -> Result<Vec<Case>> {
        seeds
            .par_iter()
            .map(|&seed| {
                let scenario = Scenario::from_json(&fs::read_to_string(scenario_path(out, seed))?)?;
                let trace = SimulationTrace::read_jsonl(BufReader::new(File::open(trace_path(out, seed))?))?;
                Ok((scenario, trace))
            })
            .collect()
    };
    Ok(Dataset {
        train: load(&manifest.train)?,
        validation: load(&manifest.validation)?,
        config: manifest.config,
    })
}

/// Fitted parameters; untrained models stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainedModels {
    pub op: Option<OpModel>,
    pub mcpic: Option<McpicModel>,
    pub epz: Option<EpzParams>,
}

pub fn train_models(train: &[Case], config: &PipelineConfig, models: &[ModelKind]) -> Result<TrainedModels> {
    let mut out = TrainedModels::default();
    if models.contains(&ModelKind::Op) {
        let traces: Vec<SimulationTrace> = train.iter().map(|(_, t)| t.clone()).collect();
        out.op = Some(fit_op(&traces, &config.op)?);
    }
    if models.contains(&ModelKind::Mcpic) {
        out.mcpic = Some(train_mcpic(train, &config.mcpic)?);
    }
    if models.contains(&ModelKind::Epz) {
        out.epz = Some(train_epz(train, &config.epz)?.params);
    }
    Ok(out)
}

pub fn write_models(models: &TrainedModels, out: &Path) -> Result<()> {
    let dir = out.join("models");
    fs::create_dir_all(&dir)?;
    if let Some(m) = &models.op {
        write_json(&dir.join("op.json"), m)?;
    }
    if let Some(m) = &models.mcpic {
        write_json(&dir.join("mcpic.json"), m)?;
    }
    if let Some(m) = &models.epz {
        write_json(&dir.join("epz.json"), m)?;
    }
    Ok(())
}

/// Loads whichever model files exist.
pub fn read_models(out: &Path) -> Result<TrainedModels> {
    let dir = out.join("models");
    fn opt<T: for<'de> Deserialize<'de>>(p: PathBuf) -> Result<Option<T>> {
        if p.exists() {
            read_json(&p).map(Some)
        } else {
            Ok(None)
        }
    }
    Ok(TrainedModels {
        op: opt(dir.join("op.json"))?,
        mcpic: opt(dir.join("mcpic.json"))?,
        epz: opt(dir.join("epz.json"))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPrediction {
    pub path: FailurePath,
    pub time: Option<f64>,
}

/// Predictions of every requested model that is available; a trained model
/// missing from `models` is skipped.
pub fn predict_all(
    scenario: &Scenario,
    models: &TrainedModels,
    kinds: &[ModelKind],
    nfpz: &NfpzConfig,
) -> Result<BTreeMap<ModelKind, ModelPrediction>> {
    let mut out = BTreeMap::new();
    for &kind in kinds {
        let pred = match kind {
            ModelKind::Spa => Some(ModelPrediction {
                path: predict_spa(scenario)?.0,
                time: None,
            }),
            ModelKind::Nfpz => Some(ModelPrediction {
                path: predict_nfpz(scenario, nfpz)?.best(),
                time: None,
            }),
            ModelKind::Op => models.op.as_ref().map(|m| {
                let p = simulate_op(scenario, m);
                ModelPrediction {
                    path: p.failure_path,
                    time: p.failure_time,
                }
            }),
            ModelKind::Mcpic => match &models.mcpic {
                Some(m) => {
                    let p = predict_failure(scenario, m)?;
                    Some(ModelPrediction {
                        path: p.failure_path,
                        time: p.failure_time,
                    })
                }
                None => None,
            },
            ModelKind::Epz => match &models.epz {
                Some(m) => {
                    let p = predict_epz(scenario, m)?;
                    Some(ModelPrediction {
                        path: p.failure_path,
                        time: p.failure_time,
                    })
                }
                None => None,
            },
        };
        if let Some(p) = pred {
            out.insert(kind, p);
        }
    }
    Ok(out)
}

/// Exact set equality of the interior crack ids.
pub fn exact_match(predicted: &FailurePath, truth: &FailurePath) -> bool {
    predicted.id_set() == truth.id_set()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    FailedUnbranched,
    FailedBranched,
    NotFailed,
}

impl Category {
    pub const ALL: [Category; 3] = [Self::FailedUnbranched, Self::FailedBranched, Self::NotFailed];

    pub fn name(self) -> &'static str {
        match self {
            Self::FailedUnbranched => "failed_unbranched",
            Self::FailedBranched => "failed_branched",
            Self::NotFailed => "not_failed",
        }
    }
}

pub fn categorize(trace: &SimulationTrace) -> Category {
    if trace.failure_time.is_none() {
        Category::NotFailed
    } else if trace.is_branched() {
        Category::FailedBranched
    } else {
        Category::FailedUnbranched
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub path: Vec<usize>,
    pub time: Option<f64>,
    pub exact_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub seed: u64,
    pub category: Category,
    pub truth_path: Vec<usize>,
    pub truth_time: Option<f64>,
    pub predictions: BTreeMap<ModelKind, PredictionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRecord {
    pub seed: u64,
    pub model: ModelKind,
    pub truth: f64,
    pub predicted: Option<f64>,
}

/// Statistics of the predicted times over the failed validation cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStats {
    pub n: usize,
    pub missing: usize,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub sd: Option<f64>,
}

impl TimeStats {
    pub fn of(values: &[Option<f64>]) -> Self {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let n = present.len();
        let (mean, sd) = if n == 0 {
            (None, None)
        } else {
            let m = present.iter().sum::<f64>() / n as f64;
            let var = present.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / n as f64;
            (Some(m), Some(var.sqrt()))
        };
        Self {
            n,
            missing: values.len() - n,
            mean,
            sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub models: Vec<ModelKind>,
    pub category_sizes: BTreeMap<Category, usize>,
    /// Exact-match counts per model and category.
    pub matches: BTreeMap<ModelKind, BTreeMap<Category, usize>>,
    pub truth_times: TimeStats,
    pub time_stats: BTreeMap<ModelKind, TimeStats>,
    pub parity: Vec<ParityRecord>,
    pub scenarios: Vec<ScenarioRecord>,
}

impl EvaluationReport {
    pub fn match_count(&self, model: ModelKind, category: Category) -> usize {
        self.matches
            .get(&model)
            .and_then(|m| m.get(&category))
            .copied()
            .unwrap_or(0)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// Scores per-scenario predictions against the oracle truth. `predictions`
/// is aligned with `validation`.
pub fn score(
    validation: &[Case],
    predictions: &[BTreeMap<ModelKind, ModelPrediction>],
    models: &[ModelKind],
) -> Result<EvaluationReport> {
    if predictions.len() != validation.len() {
        return Err(Error::DimensionMismatch {
            expected: validation.len(),
            got: predictions.len(),
        });
    }
    let mut category_sizes: BTreeMap<Category, usize> = Category::ALL.iter().map(|&c| (c, 0)).collect();
    let mut matches: BTreeMap<ModelKind, BTreeMap<Category, usize>> = models
        .iter()
        .map(|&m| (m, Category::ALL.iter().map(|&c| (c, 0)).collect()))
        .collect();
    let mut scenarios = Vec::with_capacity(validation.len());
    let mut parity = Vec::new();
    let mut truth_times = Vec::new();
    for ((scenario, trace), preds) in validation.iter().zip(predictions) {
        let category = categorize(trace);
        *category_sizes.entry(category).or_default() += 1;
        let truth = trace.dominant_fracture(scenario);
        let mut records = BTreeMap::new();
        for &m in models {
            let Some(p) = preds.get(&m) else {
                continue;
            };
            let hit = exact_match(&p.path, &truth);
            if hit {
                *matches.entry(m).or_default().entry(category).or_default() += 1;
            }
            records.insert(
                m,
                PredictionRecord {
                    path: p.path.crack_ids.clone(),
                    time: p.time,
                    exact_match: hit,
                },
            );
        }
        if let Some(t) = trace.failure_time {
            truth_times.push(Some(t));
            for &m in models.iter().filter(|m| m.predicts_time()) {
                parity.push(ParityRecord {
                    seed: scenario.seed,
                    model: m,
                    truth: t,
                    predicted: preds.get(&m).and_then(|p| p.time),
                });
            }
        }
        scenarios.push(ScenarioRecord {
            seed: scenario.seed,
            category,
            truth_path: truth.crack_ids,
            truth_time: trace.failure_time,
            predictions: records,
        });
    }
    let time_stats = models
        .iter()
        .filter(|m| m.predicts_time())
        .map(|&m| {
            let values: Vec<Option<f64>> = parity.iter().filter(|r| r.model == m).map(|r| r.predicted).collect();
            (m, TimeStats::of(&values))
        })
        .collect();
    Ok(EvaluationReport {
        models: models.to_vec(),
        category_sizes,
        matches,
        truth_times: TimeStats::of(&truth_times),
        time_stats,
        parity,
        scenarios,
    })
}

pub fn predict_validation(
    validation: &[Case],
    models: &TrainedModels,
    kinds: &[ModelKind],
    nfpz: &NfpzConfig,
) -> Result<Vec<BTreeMap<ModelKind, ModelPrediction>>> {
    validation
        .par_iter()
        .map(|(scenario, _)| predict_all(scenario, models, kinds, nfpz))
        .collect()
}

pub fn evaluate(dataset: &Dataset, models: &TrainedModels, kinds: &[ModelKind]) -> Result<EvaluationReport> {
    let predictions = predict_validation(&dataset.validation, models, kinds, &dataset.config.nfpz)?;
    score(&dataset.validation, &predictions, kinds)
}

fn fmt_time(t: Option<f64>) -> String {
    t.map_or_else(|| "n/a".to_string(), |t| format!("{t:.6e}"))
}

/// Table-1 style counts: one row per model, `n/a` for models absent from
/// the report.
pub fn write_table1<W: Write>(out: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["model".to_string()];
    header.extend(Category::ALL.iter().map(|c| c.name().to_string()));
    header.push("total".into());
    w.write_record(&header)?;
    let mut sizes = vec!["cases".to_string()];
    sizes.extend(Category::ALL.iter().map(|c| report.category_sizes[c].to_string()));
    sizes.push(report.scenarios.len().to_string());
    w.write_record(&sizes)?;
    for m in ModelKind::ALL {
        let mut row = vec![m.name().to_string()];
        if report.models.contains(&m) {
            let counts: Vec<usize> = Category::ALL.iter().map(|&c| report.match_count(m, c)).collect();
            row.extend(counts.iter().map(usize::to_string));
            row.push(counts.iter().sum::<usize>().to_string());
        } else {
            row.extend(std::iter::repeat_n("n/a".to_string(), Category::ALL.len() + 1));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_parity<W: Write>(out: W, report: &EvaluationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "model", "truth", "predicted"])?;
    for r in &report.parity {
        w.write_record([
            r.seed.to_string(),
            r.model.name().to_string(),
            fmt_time(Some(r.truth)),
            fmt_time(r.predicted),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per scenario and model; SPA and NFPZ times are `n/a`.
pub fn write_metrics<W: Write>(out: W, report: &EvaluationReport) -> Result<()> {
    let ids = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "category",
        "model",
        "exact_match",
        "predicted_path",
        "truth_path",
        "predicted_time",
        "truth_time",
    ])?;
    for s in &report.scenarios {
        for m in &report.models {
            let (hit, path, time) = match s.predictions.get(m) {
                Some(p) => (p.exact_match.to_string(), ids(&p.path), fmt_time(p.time)),
                None => ("n/a".into(), "n/a".into(), "n/a".into()),
            };
            w.write_record([
                s.seed.to_string(),
                s.category.name().to_string(),
                m.name().to_string(),
                hit,
                path,
                ids(&s.truth_path),
                time,
                fmt_time(s.truth_time),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_damage<W: Write>(out: W, trace: &SimulationTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "damage"])?;
    for (t, d) in accumulated_damage(trace) {
        w.write_record([format!("{t:.6e}"), format!("{d:.9e}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(report: &EvaluationReport, validation: &[Case], out: &Path) -> Result<()> {
    let dir = out.join("report");
    fs::create_dir_all(&dir)?;
    write_table1(File::create(dir.join("table1.csv"))?, report)?;
    write_parity(File::create(dir.join("parity.csv"))?, report)?;
    write_metrics(File::create(dir.join("metrics.csv"))?, report)?;
    for (_, trace) in validation {
        write_damage(File::create(dir.join(format!("damage_{:04}.csv", trace.seed)))?, trace)?;
    }
    write_json(&dir.join("report.json"), report)
}

pub fn read_report(out: &Path) -> Result<EvaluationReport> {
    read_json(&out.join("report").join("report.json"))
}

/// Plain-text summary of match counts and time statistics.
pub fn summary(report: &EvaluationReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("{:<8}", "model"));
    for c in Category::ALL {
        s.push_str(&format!(" {:>17}", format!("{} ({})", c.name(), report.category_sizes[&c])));
    }
    s.push('\n');
    for m in &report.models {
        s.push_str(&format!("{:<8}", m.name()));
        for c in Category::ALL {
            s.push_str(&format!(" {:>17}", report.match_count(*m, c)));
        }
        s.push('\n');
    }
    s.push_str(&format!(
        "failure time: truth mean {} sd {}\n",
        fmt_time(report.truth_times.mean),
        fmt_time(report.truth_times.sd)
    ));
    for (m, st) in &report.time_stats {
        s.push_str(&format!(
            "{:<8} mean {} sd {} missing {}\n",
            m.name(),
            fmt_time(st.mean),
            fmt_time(st.sd),
            st.missing
        ));
    }
    s
}
