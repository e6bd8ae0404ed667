//! End-to-end tuning and comparison runs over a task corpus.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::evaluation::{
    aggregate, cross_validate_matrix, mann_whitney_u, CvOptions, EvalError, Outcome, OutcomeMatrix,
    ParamScan, Summary, TuneResult,
};
use crate::io::PairwiseTest;
use crate::predictors::Method;
use crate::stream_model::TaskStream;
use crate::synth::{generate_corpus, CategoryMix, Corpus, SynthError};

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("need at least two outcome sets to compare")]
    NothingToCompare,
    #[error("task sets of `{a}` and `{b}` differ: missing from `{a}`: [{}]; missing from `{b}`: [{}]",
        .missing_in_a.join(", "), .missing_in_b.join(", "))]
    MismatchedTasks {
        a: String,
        b: String,
        missing_in_a: Vec<String>,
        missing_in_b: Vec<String>,
    },
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// The metrics compared pairwise, with their CSV names.
/// Reads one metric from an outcome.
pub type MetricFn = fn(&Outcome) -> f64;

pub const METRICS: [(&str, MetricFn); 3] = [
    ("pct_bug", |o| o.pct_bug),
    ("pct_reduced_cost", |o| o.pct_reduced_cost),
    ("f1", |o| o.f1),
];

/// Outcomes of one method (or one file) under a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledOutcomes {
    pub label: String,
    pub outcomes: Vec<Outcome>,
}

/// Two-sided Mann-Whitney p-values for every pair of outcome sets and every
/// metric. All sets must cover the same tasks.
pub fn compare(groups: &[LabelledOutcomes]) -> Result<Vec<PairwiseTest>> {
    if groups.len() < 2 {
        return Err(ProtocolError::NothingToCompare);
    }
    let ids: Vec<BTreeSet<&str>> = groups
        .iter()
        .map(|g| g.outcomes.iter().map(|o| o.task_id.as_str()).collect())
        .collect();
    let mut tests = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b) = (&groups[i], &groups[j]);
            if ids[i] != ids[j] {
                return Err(ProtocolError::MismatchedTasks {
                    a: a.label.clone(),
                    b: b.label.clone(),
                    missing_in_a: ids[j].difference(&ids[i]).map(|s| s.to_string()).collect(),
                    missing_in_b: ids[i].difference(&ids[j]).map(|s| s.to_string()).collect(),
                });
            }
            for (name, get) in METRICS {
                let x: Vec<f64> = a.outcomes.iter().map(get).collect();
                let y: Vec<f64> = b.outcomes.iter().map(get).collect();
                tests.push(PairwiseTest {
                    method_a: a.label.clone(),
                    method_b: b.label.clone(),
                    metric: name.to_string(),
                    p_value: mann_whitney_u(&x, &y)?,
                });
            }
        }
    }
    Ok(tests)
}

/// Labels outcome sets by method; a label already taken gets `#2`, `#3`, ...
pub fn label_by_method(sets: Vec<Vec<Outcome>>) -> Vec<LabelledOutcomes> {
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    sets.into_iter()
        .map(|outcomes| {
            let base = outcomes
                .first()
                .map_or_else(|| "empty".to_string(), |o| o.method.to_string());
            let n = used.entry(base.clone()).or_insert(0);
            *n += 1;
            let label = if *n == 1 { base } else { format!("{base}#{n}") };
            LabelledOutcomes { label, outcomes }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub tasks: usize,
    pub seed: u64,
    pub mix: CategoryMix,
    pub methods: Vec<Method>,
    /// Grid overrides; methods not listed use their default grid.
    pub grids: BTreeMap<Method, Vec<f64>>,
    pub cv: CvOptions,
    pub target_fraction: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            tasks: 218,
            seed: 1,
            mix: CategoryMix::PAPER,
            methods: Method::ALL.to_vec(),
            grids: BTreeMap::new(),
            cv: CvOptions {
                seed: 1,
                ..CvOptions::default()
            },
            target_fraction: 1.0,
        }
    }
}

impl ProtocolConfig {
    pub fn grid(&self, method: Method) -> Vec<f64> {
        self.grids
            .get(&method)
            .cloned()
            .unwrap_or_else(|| method.default_grid())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub scan: ParamScan,
    pub tune: TuneResult,
    /// Per-task outcomes at the modal tuned parameter.
    pub outcomes: Vec<Outcome>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolReport {
    pub methods: Vec<MethodReport>,
    pub pairwise: Vec<PairwiseTest>,
}

impl ProtocolReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }
}

/// Scan, tune, evaluate at the modal parameter and summarize one method.
pub fn run_method(
    tasks: &[TaskStream],
    method: Method,
    grid: &[f64],
    cv: &CvOptions,
    target_fraction: f64,
) -> Result<MethodReport> {
    let matrix = OutcomeMatrix::compute(tasks, method, grid, target_fraction)?;
    let scan = matrix.scan_all();
    let tune = cross_validate_matrix(&matrix, cv)?;
    let j = grid
        .iter()
        .position(|&p| p == tune.modal)
        .expect("modal value comes from the grid");
    let outcomes = matrix.outcomes_at(j);
    let summary = aggregate(&outcomes)?;
    Ok(MethodReport {
        method,
        scan,
        tune,
        outcomes,
        summary,
    })
}

/// Runs every configured method on `tasks` and compares them pairwise.
pub fn run_on(tasks: &[TaskStream], config: &ProtocolConfig) -> Result<ProtocolReport> {
    let methods = config
        .methods
        .iter()
        .map(|&m| {
            run_method(
                tasks,
                m,
                &config.grid(m),
                &config.cv,
                config.target_fraction,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let groups: Vec<LabelledOutcomes> = methods
        .iter()
        .map(|r| LabelledOutcomes {
            label: r.method.to_string(),
            outcomes: r.outcomes.clone(),
        })
        .collect();
    let pairwise = if groups.len() >= 2 {
        compare(&groups)?
    } else {
        Vec::new()
    };
    Ok(ProtocolReport { methods, pairwise })
}

/// Generates the corpus from `config` and runs the protocol on it.
pub fn run(config: &ProtocolConfig) -> Result<(Corpus, ProtocolReport)> {
    let corpus = generate_corpus(config.mix, config.tasks, config.seed)?;
    let report = run_on(&corpus.streams, config)?;
    Ok((corpus, report))
}
