//! Browser bindings: generate a stream, trace a predictor over it, and scan a
//! parameter grid over a small corpus. Every export returns JSON.

use crowdclose::evaluation::{evaluate, OutcomeMatrix};
use crowdclose::predictors::trace;
use crowdclose::stream_model::{
    classify_pattern, trend_curve, DEFAULT_PLATEAU_WINDOW, DEFAULT_SLIGHT_RISE_CAP,
};
use crowdclose::synth::{generate_corpus, generate_worlds, CategoryMix, World};
use crowdclose::{BugId, Method, Pattern, PredictorConfig, TaskStream};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
pub struct SimulatedStream {
    pub task_id: String,
    pub category: String,
    pub pool_size: usize,
    pub labels: Vec<Option<BugId>>,
    pub curve: Vec<usize>,
    pub classified: String,
    pub turning_point: Option<usize>,
}

#[derive(Serialize)]
pub struct TraceStep {
    pub report: usize,
    pub detected: usize,
    pub estimate: Option<f64>,
}

#[derive(Serialize)]
pub struct PredictionTrace {
    pub method: String,
    pub parameter: f64,
    pub steps: Vec<TraceStep>,
    pub close_index: Option<usize>,
    pub pct_bug: f64,
    pub pct_reduced_cost: f64,
    pub f1: f64,
}

#[derive(Serialize)]
pub struct ScanPoint {
    pub parameter: f64,
    pub pct_bug: f64,
    pub pct_reduced_cost: f64,
    pub f1: f64,
}

/// One stream of `kind`: a pattern name (`rise-stay`, ...) or a world (`m0`, `mh`, `mt`).
pub fn simulate_stream(kind: &str, seed: u64) -> Result<SimulatedStream, String> {
    let corpus = match kind.parse::<Pattern>() {
        Ok(p) => generate_corpus(CategoryMix::only(p), 1, seed),
        Err(_) => {
            let world: World = kind
                .parse()
                .map_err(|_| format!("unknown stream kind `{kind}`"))?;
            generate_worlds(world, 1, seed)
        }
    }
    .map_err(|e| e.to_string())?;
    let stream = &corpus.streams[0];
    let truth = &corpus.truths[0];
    let curve = trend_curve(stream).map_err(|e| e.to_string())?;
    let class = classify_pattern(stream, DEFAULT_PLATEAU_WINDOW, DEFAULT_SLIGHT_RISE_CAP)
        .map_err(|e| e.to_string())?;
    Ok(SimulatedStream {
        task_id: truth.task_id.clone(),
        category: truth.category.clone(),
        pool_size: truth.pool_size,
        labels: stream.reports().iter().map(|r| r.bug_id).collect(),
        curve: curve.values().to_vec(),
        classified: class.pattern.to_string(),
        turning_point: class.turning_point,
    })
}

/// Runs one predictor over a label list and records every step up to the close.
pub fn trace_labels(
    labels: &[Option<BugId>],
    method: &str,
    parameter: f64,
    target_fraction: f64,
) -> Result<PredictionTrace, String> {
    let method: Method = method.parse().map_err(|e| format!("{e}"))?;
    let stream =
        TaskStream::from_labels("demo", labels.iter().copied()).map_err(|e| e.to_string())?;
    let config = PredictorConfig::new(method, parameter).with_target_fraction(target_fraction);
    let rows = trace(&stream, &config).map_err(|e| e.to_string())?;
    let outcome = evaluate(&stream, &config).map_err(|e| e.to_string())?;
    let closed = rows.last().is_some_and(|r| r.decision.is_close());
    Ok(PredictionTrace {
        method: method.to_string(),
        parameter,
        steps: rows
            .iter()
            .map(|r| TraceStep {
                report: r.report_index,
                detected: r.detected,
                estimate: r.estimate,
            })
            .collect(),
        close_index: closed.then_some(outcome.close_index),
        pct_bug: outcome.pct_bug,
        pct_reduced_cost: outcome.pct_reduced_cost,
        f1: outcome.f1,
    })
}

/// Median metrics of `method` at every default grid value over a
/// `tasks`-stream corpus with the field category mix.
pub fn scan_corpus(method: &str, tasks: usize, seed: u64) -> Result<Vec<ScanPoint>, String> {
    let method: Method = method.parse().map_err(|e| format!("{e}"))?;
    let corpus = generate_corpus(CategoryMix::PAPER, tasks, seed).map_err(|e| e.to_string())?;
    let matrix = OutcomeMatrix::compute(&corpus.streams, method, &method.default_grid(), 1.0)
        .map_err(|e| e.to_string())?;
    Ok(matrix
        .scan_all()
        .rows
        .iter()
        .map(|r| ScanPoint {
            parameter: r.parameter,
            pct_bug: r.median.pct_bug,
            pct_reduced_cost: r.median.pct_reduced_cost,
            f1: r.median.f1,
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate(kind: &str, seed: u64) -> Result<String, JsError> {
    to_js(simulate_stream(kind, seed))
}

/// `labels_json` is an array of bug ids with `null` for bug-free reports.
#[wasm_bindgen]
pub fn predict(
    labels_json: &str,
    method: &str,
    parameter: f64,
    target_fraction: f64,
) -> Result<String, JsError> {
    let labels: Vec<Option<BugId>> =
        serde_json::from_str(labels_json).map_err(|e| JsError::new(&e.to_string()))?;
    to_js(trace_labels(&labels, method, parameter, target_fraction))
}

#[wasm_bindgen]
pub fn scan(method: &str, tasks: usize, seed: u64) -> Result<String, JsError> {
    to_js(scan_corpus(method, tasks, seed))
}
