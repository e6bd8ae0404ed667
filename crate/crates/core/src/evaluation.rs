//! Measurement and tuning protocol.
//!
//! Per-run metrics compare a predicted close point with what actually happened
//! in the full historical stream: the share of its unique bugs already found
//! (`pct_bug`) and the share of its reports that would not have been paid for
//! (`pct_reduced_cost`), plus their harmonic mean.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictors::{run_to_close, Method, PredictorConfig, PredictorError};
use crate::stream_model::{accumulated_bugs, TaskStream};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no tasks given")]
    NoTasks,
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("parameter grid must be strictly increasing")]
    UnsortedGrid,
    #[error("need at least {folds} tasks for {folds}-fold cross validation, have {have}")]
    TooFewTasks { folds: usize, have: usize },
    #[error("folds must be >= 2, got {0}")]
    InvalidFolds(usize),
    #[error("repeats must be >= 1")]
    ZeroRepeats,
    #[error("empty sample")]
    EmptySample,
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub task_id: String,
    pub method: Method,
    pub parameter: f64,
    pub close_index: usize,
    pub pct_bug: f64,
    pub pct_reduced_cost: f64,
    pub f1: f64,
}

/// The three metrics of one run, or their medians over a task set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pct_bug: f64,
    pub pct_reduced_cost: f64,
    pub f1: f64,
}

impl Metrics {
    /// Metrics of closing `stream` after `close_index` reports.
    pub fn at_close(stream: &TaskStream, close_index: usize) -> Self {
        let total = stream.total_unique_bugs();
        let found = accumulated_bugs(stream, close_index).expect("close index within stream");
        let pct_bug = if total == 0 {
            1.0
        } else {
            found as f64 / total as f64
        };
        let pct_reduced_cost = 1.0 - close_index as f64 / stream.len() as f64;
        Self {
            pct_bug,
            pct_reduced_cost,
            f1: harmonic_mean(pct_bug, pct_reduced_cost),
        }
    }
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Runs the predictor over the stream; a predictor that never fires closes at the last report.
pub fn evaluate(stream: &TaskStream, config: &PredictorConfig) -> Result<Outcome> {
    let close_index = run_to_close(stream, config)?.unwrap_or(stream.len());
    let m = Metrics::at_close(stream, close_index);
    Ok(Outcome {
        task_id: stream.task_id().to_string(),
        method: config.method,
        parameter: config.parameter,
        close_index,
        pct_bug: m.pct_bug,
        pct_reduced_cost: m.pct_reduced_cost,
        f1: m.f1,
    })
}

/// Median with the mean-of-central-pair convention for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn median_metrics<'a>(outcomes: impl Iterator<Item = &'a Outcome>) -> Metrics {
    let (mut b, mut c, mut f) = (Vec::new(), Vec::new(), Vec::new());
    for o in outcomes {
        b.push(o.pct_bug);
        c.push(o.pct_reduced_cost);
        f.push(o.f1);
    }
    Metrics {
        pct_bug: median(&b).unwrap_or(f64::NAN),
        pct_reduced_cost: median(&c).unwrap_or(f64::NAN),
        f1: median(&f).unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub parameter: f64,
    pub median: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamScan {
    pub method: Method,
    pub rows: Vec<ScanRow>,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if grid
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less))
    {
        return Err(EvalError::UnsortedGrid);
    }
    Ok(())
}

/// Outcomes of every task under every grid value, computed once and reused
/// by scans over task subsets.
#[derive(Debug, Clone)]
pub struct OutcomeMatrix {
    method: Method,
    grid: Vec<f64>,
    /// `rows[task][param]`
    rows: Vec<Vec<Outcome>>,
}

impl OutcomeMatrix {
    pub fn compute(
        tasks: &[TaskStream],
        method: Method,
        grid: &[f64],
        target_fraction: f64,
    ) -> Result<Self> {
        if tasks.is_empty() {
            return Err(EvalError::NoTasks);
        }
        check_grid(grid)?;
        let configs: Vec<PredictorConfig> = grid
            .iter()
            .map(|&p| PredictorConfig::new(method, p).with_target_fraction(target_fraction))
            .collect();
        for c in &configs {
            c.validate()?;
        }
        let per_task = |task: &TaskStream| -> Result<Vec<Outcome>> {
            configs.iter().map(|c| evaluate(task, c)).collect()
        };
        #[cfg(feature = "parallel")]
        let rows = tasks.par_iter().map(per_task).collect::<Result<Vec<_>>>()?;
        #[cfg(not(feature = "parallel"))]
        let rows = tasks.iter().map(per_task).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            method,
            grid: grid.to_vec(),
            rows,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn task_count(&self) -> usize {
        self.rows.len()
    }

    pub fn outcomes_for_task(&self, task: usize) -> &[Outcome] {
        &self.rows[task]
    }

    /// All tasks' outcomes at grid position `param`.
    pub fn outcomes_at(&self, param: usize) -> Vec<Outcome> {
        self.rows.iter().map(|r| r[param].clone()).collect()
    }

    /// Per-parameter medians over the given task indices.
    pub fn scan_subset(&self, tasks: &[usize]) -> ParamScan {
        let rows = self
            .grid
            .iter()
            .enumerate()
            .map(|(j, &parameter)| ScanRow {
                parameter,
                median: median_metrics(tasks.iter().map(|&i| &self.rows[i][j])),
            })
            .collect();
        ParamScan {
            method: self.method,
            rows,
        }
    }

    pub fn scan_all(&self) -> ParamScan {
        let all: Vec<usize> = (0..self.rows.len()).collect();
        self.scan_subset(&all)
    }
}

/// Median performance of every grid value over all tasks.
pub fn scan(tasks: &[TaskStream], method: Method, grid: &[f64]) -> Result<ParamScan> {
    Ok(OutcomeMatrix::compute(tasks, method, grid, 1.0)?.scan_all())
}

pub const DEFAULT_MIN_BUG: f64 = 0.90;
pub const DEFAULT_MIN_COST: f64 = 0.30;

/// Picks the grid value with the highest median F1 among those meeting both
/// minimums, or over the whole grid when none does. Ties go to the smaller value.
pub fn select_optimal(scan: &ParamScan, min_bug: f64, min_cost: f64) -> Option<f64> {
    let argmax = |rows: &mut dyn Iterator<Item = &ScanRow>| {
        let mut best: Option<&ScanRow> = None;
        for r in rows {
            if best.is_none_or(|b| r.median.f1 > b.median.f1) {
                best = Some(r);
            }
        }
        best.map(|r| r.parameter)
    };
    let mut admissible = scan
        .rows
        .iter()
        .filter(|r| r.median.pct_bug >= min_bug && r.median.pct_reduced_cost >= min_cost);
    argmax(&mut admissible).or_else(|| argmax(&mut scan.rows.iter()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub min_bug: f64,
    pub min_cost: f64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 3,
            repeats: 1000,
            seed: 0,
            min_bug: DEFAULT_MIN_BUG,
            min_cost: DEFAULT_MIN_COST,
        }
    }
}

/// One tuning round: the parameter chosen on the training folds and the
/// medians it achieved on the held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection {
    pub repeat: usize,
    pub fold: usize,
    pub parameter: f64,
    pub test_tasks: Vec<usize>,
    pub test_median: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub method: Method,
    pub selections: Vec<FoldSelection>,
    /// `(parameter, frequency)` for every selected value, in grid order.
    pub histogram: Vec<(f64, usize)>,
    /// Most frequent selection; ties go to the smaller value.
    pub modal: f64,
}

/// Splits `0..n` (already shuffled) into `folds` contiguous parts whose sizes differ by at most one.
pub fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds)
        .map(|i| (i * n / folds, (i + 1) * n / folds))
        .collect()
}

/// Repeated k-fold cross validation over a precomputed outcome matrix.
pub fn cross_validate_matrix(matrix: &OutcomeMatrix, opts: &CvOptions) -> Result<TuneResult> {
    if opts.folds < 2 {
        return Err(EvalError::InvalidFolds(opts.folds));
    }
    if opts.repeats == 0 {
        return Err(EvalError::ZeroRepeats);
    }
    let n = matrix.task_count();
    if n < opts.folds {
        return Err(EvalError::TooFewTasks {
            folds: opts.folds,
            have: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut selections = Vec::with_capacity(opts.folds * opts.repeats);
    for repeat in 0..opts.repeats {
        order.sort_unstable();
        order.shuffle(&mut rng);
        let bounds = fold_bounds(n, opts.folds);
        for (fold, &(lo, hi)) in bounds.iter().enumerate() {
            let test: Vec<usize> = order[lo..hi].to_vec();
            let train: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            let scan = matrix.scan_subset(&train);
            let parameter =
                select_optimal(&scan, opts.min_bug, opts.min_cost).expect("grid is non-empty");
            let j = matrix
                .grid
                .iter()
                .position(|&p| p == parameter)
                .expect("selected value comes from the grid");
            let test_median = median_metrics(test.iter().map(|&i| &matrix.rows[i][j]));
            selections.push(FoldSelection {
                repeat,
                fold,
                parameter,
                test_tasks: test,
                test_median,
            });
        }
    }
    let mut counts = vec![0usize; matrix.grid.len()];
    for s in &selections {
        let j = matrix.grid.iter().position(|&p| p == s.parameter).unwrap();
        counts[j] += 1;
    }
    let histogram: Vec<(f64, usize)> = matrix
        .grid
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(&p, &c)| (p, c))
        .collect();
    let modal = histogram
        .iter()
        .fold(None::<(f64, usize)>, |best, &(p, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((p, c)),
        })
        .map(|(p, _)| p)
        .expect("at least one selection");
    Ok(TuneResult {
        method: matrix.method,
        selections,
        histogram,
        modal,
    })
}

pub fn cross_validate(
    tasks: &[TaskStream],
    method: Method,
    grid: &[f64],
    opts: &CvOptions,
) -> Result<TuneResult> {
    if opts.folds >= 2 && tasks.len() < opts.folds {
        return Err(EvalError::TooFewTasks {
            folds: opts.folds,
            have: tasks.len(),
        });
    }
    let matrix = OutcomeMatrix::compute(tasks, method, grid, 1.0)?;
    cross_validate_matrix(&matrix, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub median: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pct_bug: MetricSummary,
    pub pct_reduced_cost: MetricSummary,
    pub f1: MetricSummary,
}

pub fn aggregate(outcomes: &[Outcome]) -> Result<Summary> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptySample);
    }
    let summarize = |get: fn(&Outcome) -> f64| {
        let v: Vec<f64> = outcomes.iter().map(get).collect();
        MetricSummary {
            median: median(&v).unwrap(),
            std: population_std(&v).unwrap(),
        }
    };
    Ok(Summary {
        pct_bug: summarize(|o| o.pct_bug),
        pct_reduced_cost: summarize(|o| o.pct_reduced_cost),
        f1: summarize(|o| o.f1),
    })
}

/// Largest combined sample size handled by exact enumeration is 8 + 8.
pub const EXACT_LIMIT: usize = 8;

/// Two-sided Mann-Whitney U test p-value.
///
/// Samples of at most [`EXACT_LIMIT`] values each use the exact permutation
/// distribution of the (mid-)rank sum; larger ones use the normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(EvalError::EmptySample);
    }
    if x.len() <= EXACT_LIMIT && y.len() <= EXACT_LIMIT {
        Ok(mann_whitney_exact(x, y))
    } else {
        Ok(mann_whitney_normal(x, y))
    }
}

/// Midranks of the pooled sample, `x` first.
fn pooled_ranks(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

fn u_statistic(rank_sum: f64, n: usize) -> f64 {
    rank_sum - (n * (n + 1)) as f64 / 2.0
}

pub fn mann_whitney_exact(x: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (x.len(), y.len());
    let (ranks, _) = pooled_ranks(x, y);
    let mu = (n * m) as f64 / 2.0;
    let observed = (u_statistic(ranks[..n].iter().sum(), n) - mu).abs();
    let total = n + m;
    let (mut hits, mut count) = (0u64, 0u64);
    for mask in 0u32..(1u32 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let sum: f64 = (0..total)
            .filter(|&k| mask & (1 << k) != 0)
            .map(|k| ranks[k])
            .sum();
        count += 1;
        if (u_statistic(sum, n) - mu).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / count as f64
}

pub fn mann_whitney_normal(x: &[f64], y: &[f64]) -> f64 {
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (ranks, ties) = pooled_ranks(x, y);
    let u = u_statistic(ranks[..x.len()].iter().sum(), x.len());
    let mu = n * m / 2.0;
    let total = n + m;
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum::<f64>()
        / (total * (total - 1.0));
    let var = n * m / 12.0 * ((total + 1.0) - tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    statrs::function::erf::erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// Per-task outcome rows grouped by method.
pub fn by_method(outcomes: &[Outcome]) -> BTreeMap<Method, Vec<&Outcome>> {
    let mut map: BTreeMap<Method, Vec<&Outcome>> = BTreeMap::new();
    for o in outcomes {
        map.entry(o.method).or_default().push(o);
    }
    map
}
