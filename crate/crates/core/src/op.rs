//! Orthogonal-projection model: cracks reduced to horizontal intervals that
//! grow at a learned rate da(a) until one merged interval spans the sample.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{horizontal_projection, Interval};
use crate::ml::{fit_poly_ridge, PolyRidgeModel, MODEL_FORMAT};
use crate::oracle::SimulationTrace;
use crate::scenario::{FailurePath, Scenario};

/// Floor for projected lengths so that vertical cracks stay in the domain
/// of the regression.
pub const MIN_PROJECTED_LENGTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSample {
    pub a: f64,
    pub da: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpModel {
    pub format: String,
    pub pir: PolyRidgeModel,
    /// Learned onset delay.
    pub t0: f64,
    /// Snapshot interval the rate was learned on.
    pub dt: f64,
    pub horizon: f64,
    /// Range of projected lengths seen in training; inputs are clamped to it.
    pub a_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpPrediction {
    pub failure_time: Option<f64>,
    pub failure_path: FailurePath,
    pub band_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpConfig {
    pub degree: usize,
    pub lambda: f64,
}

impl Default for OpConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            lambda: 1e-3,
        }
    }
}

/// One sample per tip and consecutive snapshot pair, from the first growth
/// snapshot of each trace onward.
pub fn extract_growth_samples(traces: &[SimulationTrace]) -> Vec<GrowthSample> {
    let mut out = Vec::new();
    for trace in traces {
        let Some(onset) = trace.snapshots.iter().position(|s| s.damage > 0.0) else {
            continue;
        };
        // the pair ending at the first growth snapshot carries the first advance
        for pair in trace.snapshots[onset.saturating_sub(1)..].windows(2) {
            let (before, after) = (&pair[0], &pair[1]);
            for c in &before.cracks {
                let Some(next) = after.crack(c.id) else {
                    continue;
                };
                let (lo, hi) = c.x_extent();
                let a = (hi - lo).max(MIN_PROJECTED_LENGTH);
                for tip in 0..2u8 {
                    let da = (next.tip(tip).x - c.tip(tip).x).abs();
                    out.push(GrowthSample { a, da });
                }
            }
        }
    }
    out
}

pub fn fit_op(traces: &[SimulationTrace], config: &OpConfig) -> Result<OpModel> {
    let samples = extract_growth_samples(traces);
    if samples.is_empty() {
        return Err(Error::InsufficientData("no growth samples in training traces".into()));
    }
    let xy: Vec<(f64, f64)> = samples.iter().map(|s| (s.a, s.da)).collect();
    let pir = fit_poly_ridge(&xy, config.degree, config.lambda)?;
    let onsets: Vec<f64> = traces.iter().filter_map(|t| t.first_growth_time()).collect();
    let t0 = onsets.iter().sum::<f64>() / onsets.len() as f64;
    let dt = traces
        .iter()
        .find_map(|t| t.snapshots.get(1).map(|s| s.t - t.snapshots[0].t))
        .ok_or_else(|| Error::InsufficientData("traces need two snapshots".into()))?;
    let horizon = traces.iter().map(|t| t.horizon).fold(0.0, f64::max);
    let a_range = samples.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| {
        (lo.min(s.a), hi.max(s.a))
    });
    Ok(OpModel {
        format: MODEL_FORMAT.to_string(),
        pir,
        t0,
        dt,
        horizon,
        a_range,
    })
}

impl OpModel {
    /// Tip advance per snapshot interval for an interval of length `a`.
    pub fn predict_da(&self, a: f64) -> f64 {
        let a = a.clamp(self.a_range.0, self.a_range.1);
        self.pir.predict(a).max(0.0)
    }
}

#[derive(Debug, Clone)]
struct Span {
    interval: Interval,
    ids: BTreeSet<usize>,
}

fn merge_spans(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort_by(|a, b| a.interval.lo.total_cmp(&b.interval.lo));
    let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
    for s in spans {
        match merged.last_mut() {
            Some(last) if s.interval.lo <= last.interval.hi => {
                last.interval.hi = last.interval.hi.max(s.interval.hi);
                last.ids.extend(s.ids);
            }
            _ => merged.push(s),
        }
    }
    merged
}

/// Grows every interval endpoint outward by `rate(len)` per step.
pub fn simulate_intervals(
    scenario: &Scenario,
    rate: impl Fn(f64) -> f64,
    t0: f64,
    dt: f64,
    horizon: f64,
) -> OpPrediction {
    let w = scenario.geometry.w;
    let mut spans = merge_spans(
        scenario
            .interior()
            .map(|c| Span {
                interval: horizontal_projection(c),
                ids: BTreeSet::from([c.id]),
            })
            .collect(),
    );
    let spanning = |spans: &[Span]| {
        spans
            .iter()
            .find(|s| s.interval.lo <= 0.0 && s.interval.hi >= w)
            .map(|s| s.ids.clone())
    };
    let mut t = t0;
    let mut hit = spanning(&spans);
    while hit.is_none() && t + dt <= horizon + 1e-12 * horizon.max(1.0) {
        t += dt;
        for s in &mut spans {
            let da = rate(s.interval.len().max(MIN_PROJECTED_LENGTH));
            s.interval.lo = (s.interval.lo - da).max(0.0);
            s.interval.hi = (s.interval.hi + da).min(w);
        }
        spans = merge_spans(spans);
        hit = spanning(&spans);
    }
    match hit {
        Some(ids) => finish(scenario, ids, Some(t)),
        None => {
            // widest interval as the reported band
            let widest = spans
                .iter()
                .max_by(|a, b| a.interval.len().total_cmp(&b.interval.len()))
                .map(|s| s.ids.clone())
                .unwrap_or_default();
            finish(scenario, widest, None)
        }
    }
}

fn finish(scenario: &Scenario, ids: BTreeSet<usize>, failure_time: Option<f64>) -> OpPrediction {
    let mut members: Vec<_> = ids.iter().filter_map(|&id| scenario.crack(id)).collect();
    members.sort_by(|a, b| a.center.x.total_cmp(&b.center.x).then(a.id.cmp(&b.id)));
    let total: f64 = members.iter().map(|c| c.length).sum();
    let band_y = if total > 0.0 {
        members.iter().map(|c| c.length * c.center.y).sum::<f64>() / total
    } else if !members.is_empty() {
        members.iter().map(|c| c.center.y).sum::<f64>() / members.len() as f64
    } else {
        scenario.geometry.h / 2.0
    };
    OpPrediction {
        failure_time,
        failure_path: FailurePath::new(
            members.iter().map(|c| c.id).collect(),
            failure_time.is_some(),
        ),
        band_y,
    }
}

pub fn simulate_op(scenario: &Scenario, model: &OpModel) -> OpPrediction {
    simulate_intervals(scenario, |a| model.predict_da(a), model.t0, model.dt, model.horizon)
}
