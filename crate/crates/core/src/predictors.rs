//! Streaming stopping rules.
//!
//! A [`Predictor`] consumes one report at a time and answers Continue until its
//! criterion first holds, at which point it answers Close with the index of the
//! report just consumed and refuses further input.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture_stats::CaptureTable;
use crate::estimators::{self, CaptureEstimator, JackknifeOrder, RayleighInputs};
use crate::stream_model::{BugId, Report, TaskStream};

#[derive(Debug, Error, PartialEq)]
pub enum PredictorError {
    #[error(
        "unknown method `{0}` (expected one of: trend, peak, knee, m0, mth, mhjk, mhch, mtch)"
    )]
    UnknownMethod(String),
    #[error("invalid {name} for {method}: {value}")]
    InvalidParameter {
        method: Method,
        name: &'static str,
        value: f64,
    },
    #[error("target fraction must lie in (0, 1], got {0}")]
    InvalidTargetFraction(f64),
    #[error("predictor already closed at report {0}")]
    AlreadyClosed(usize),
    #[error("expected report index {expected}, got {found}")]
    OutOfOrder { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, PredictorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Trend,
    Peak,
    Knee,
    M0,
    Mth,
    MhJk,
    MhCh,
    MtCh,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Trend,
        Method::Peak,
        Method::Knee,
        Method::M0,
        Method::Mth,
        Method::MhJk,
        Method::MhCh,
        Method::MtCh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Trend => "trend",
            Method::Peak => "peak",
            Method::Knee => "knee",
            Method::M0 => "m0",
            Method::Mth => "mth",
            Method::MhJk => "mhjk",
            Method::MhCh => "mhch",
            Method::MtCh => "mtch",
        }
    }

    pub fn parameter_name(self) -> &'static str {
        match self {
            Method::Trend => "stableThres",
            Method::Peak => "stepSize",
            Method::Knee => "kneeThres",
            _ => "capSize",
        }
    }

    /// Whether the parameter must be a positive integer.
    pub fn integer_parameter(self) -> bool {
        self != Method::Knee
    }

    /// Whether the method produces a total-bug estimate the target fraction applies to.
    pub fn uses_estimate(self) -> bool {
        !matches!(self, Method::Trend | Method::Knee)
    }

    /// 100 candidate parameter values: 1..=100 for integer parameters,
    /// 0.1..=10.0 in steps of 0.1 for the knee threshold.
    pub fn default_grid(self) -> Vec<f64> {
        if self.integer_parameter() {
            (1..=100).map(f64::from).collect()
        } else {
            (1..=100).map(|k| f64::from(k) / 10.0).collect()
        }
    }

    fn capture_estimator(self) -> Option<CaptureEstimator> {
        match self {
            Method::M0 => Some(CaptureEstimator::M0),
            Method::Mth => Some(CaptureEstimator::Mth),
            Method::MhJk => Some(CaptureEstimator::MhJk(JackknifeOrder::First)),
            Method::MhCh => Some(CaptureEstimator::MhCh),
            Method::MtCh => Some(CaptureEstimator::MtCh),
            Method::Trend | Method::Peak | Method::Knee => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PredictorError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == lower)
            .ok_or_else(|| PredictorError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub method: Method,
    pub parameter: f64,
    /// Close once this fraction of the estimated total has been found.
    pub target_fraction: f64,
}

impl PredictorConfig {
    pub fn new(method: Method, parameter: f64) -> Self {
        Self {
            method,
            parameter,
            target_fraction: 1.0,
        }
    }

    pub fn with_target_fraction(mut self, fraction: f64) -> Self {
        self.target_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.parameter;
        let bad = !p.is_finite()
            || p <= 0.0
            || (self.method.integer_parameter() && (p.fract() != 0.0 || p > u32::MAX as f64));
        if bad {
            return Err(PredictorError::InvalidParameter {
                method: self.method,
                name: self.method.parameter_name(),
                value: p,
            });
        }
        if !(self.target_fraction > 0.0 && self.target_fraction <= 1.0) {
            return Err(PredictorError::InvalidTargetFraction(self.target_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Continue,
    Close { at_index: usize },
}

impl Decision {
    pub fn is_close(self) -> bool {
        matches!(self, Decision::Close { .. })
    }
}

#[derive(Debug, Clone)]
enum MethodState {
    Trend {
        threshold: usize,
        quiet: usize,
    },
    Peak {
        step: usize,
        in_unit: usize,
        per_unit: Vec<usize>,
        frozen: Option<f64>,
        dead: bool,
    },
    Knee {
        threshold: f64,
        curve: Vec<usize>,
    },
    Capture {
        estimator: CaptureEstimator,
        table: CaptureTable,
        buffer: Vec<Report>,
    },
}

/// Incremental state of one stopping rule over one stream.
#[derive(Debug, Clone)]
pub struct Predictor {
    config: PredictorConfig,
    seen: HashSet<BugId>,
    consumed: usize,
    estimate: Option<f64>,
    closed_at: Option<usize>,
    state: MethodState,
}

impl Predictor {
    pub fn new(config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        let int_param = config.parameter as usize;
        let state = match config.method {
            Method::Trend => MethodState::Trend {
                threshold: int_param,
                quiet: 0,
            },
            Method::Peak => MethodState::Peak {
                step: int_param,
                in_unit: 0,
                per_unit: Vec::new(),
                frozen: None,
                dead: false,
            },
            Method::Knee => MethodState::Knee {
                threshold: config.parameter,
                curve: Vec::new(),
            },
            m => MethodState::Capture {
                estimator: m.capture_estimator().expect("capture method"),
                table: CaptureTable::new(int_param).expect("validated capSize"),
                buffer: Vec::with_capacity(int_param),
            },
        };
        Ok(Self {
            config,
            seen: HashSet::new(),
            consumed: 0,
            estimate: None,
            closed_at: None,
            state,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    /// Distinct bugs seen so far.
    pub fn detected(&self) -> usize {
        self.seen.len()
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Latest total-bug estimate, if the method has produced a defined one.
    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    pub fn closed_at(&self) -> Option<usize> {
        self.closed_at
    }

    pub fn step(&mut self, report: &Report) -> Result<Decision> {
        if let Some(at) = self.closed_at {
            return Err(PredictorError::AlreadyClosed(at));
        }
        if report.index != self.consumed + 1 {
            return Err(PredictorError::OutOfOrder {
                expected: self.consumed + 1,
                found: report.index,
            });
        }
        self.consumed += 1;
        let is_new = report.bug_id.is_some_and(|b| self.seen.insert(b));
        let d = self.seen.len();
        let fraction = self.config.target_fraction;

        let close = match &mut self.state {
            MethodState::Trend { threshold, quiet } => {
                if is_new {
                    *quiet = 0;
                } else {
                    *quiet += 1;
                }
                *quiet >= *threshold
            }
            MethodState::Peak {
                step,
                in_unit,
                per_unit,
                frozen,
                dead,
            } => {
                if is_new {
                    *in_unit += 1;
                }
                if self.consumed.is_multiple_of(*step) {
                    per_unit.push(std::mem::take(in_unit));
                    if frozen.is_none() && !*dead {
                        if let Some((_, n_hat)) = peak_estimate(per_unit) {
                            if per_unit[0] == 0 {
                                *dead = true;
                            } else {
                                *frozen = Some(n_hat);
                                self.estimate = Some(n_hat);
                            }
                        }
                    }
                }
                frozen.is_some_and(|n_hat| reached(d, fraction, n_hat))
            }
            MethodState::Knee { threshold, curve } => {
                curve.push(d);
                knee_ratio(curve).is_some_and(|r| r > *threshold)
            }
            MethodState::Capture {
                estimator,
                table,
                buffer,
            } => {
                buffer.push(*report);
                if buffer.len() < table.cap_size() {
                    false
                } else {
                    table
                        .ingest_capture(buffer)
                        .expect("buffer holds one full capture");
                    buffer.clear();
                    if table.t() < 2 {
                        false
                    } else {
                        self.estimate = estimator
                            .estimate(table)
                            .expect("at least two captures")
                            .value();
                        self.estimate
                            .is_some_and(|n_hat| reached(d, fraction, n_hat))
                    }
                }
            }
        };

        if close {
            self.closed_at = Some(report.index);
            Ok(Decision::Close {
                at_index: report.index,
            })
        } else {
            Ok(Decision::Continue)
        }
    }
}

/// `D ≥ fraction·N̂`, with a relative slack for floating-point noise in the product.
fn reached(d: usize, fraction: f64, n_hat: f64) -> bool {
    let target = fraction * n_hat;
    d as f64 >= target - 1e-9 * target.abs().max(1.0)
}

/// Peak unit `t_m` and Rayleigh total from per-unit new-bug counts, taken at
/// the first unit whose count is lower than the one before; `None` while the
/// counts never decline.
pub fn peak_estimate(per_unit: &[usize]) -> Option<(usize, f64)> {
    let t_m = per_unit.windows(2).position(|w| w[1] < w[0])? + 1;
    let n_hat = estimators::rayleigh_total(RayleighInputs {
        t_m,
        f1: per_unit[0],
    })
    .expect("t_m >= 1")
    .value()
    .expect("rayleigh total is always defined");
    Some((t_m, n_hat))
}

/// Slope ratio around the knee of a cumulative curve (`curve[k - 1]` is the
/// value after `k` reports).
///
/// The knee is the interior point farthest from the chord joining the first and
/// last points, ties going to the earliest. The rise after the knee is counted
/// as one more than observed, so a flat tail yields a ratio that grows with its
/// length instead of jumping to infinity. Returns `None` before three points exist.
pub fn knee_ratio(curve: &[usize]) -> Option<f64> {
    let n = curve.len();
    if n < 3 {
        return None;
    }
    let first = curve[0] as i64;
    let rise = curve[n - 1] as i64 - first;
    let run = (n - 1) as i64;
    let mut best = 1usize;
    let mut best_dist = -1i64;
    for (k, &v) in curve.iter().enumerate().take(n - 1).skip(1) {
        // perpendicular distance up to the constant chord length
        let dist = (rise * k as i64 - run * (v as i64 - first)).abs();
        if dist > best_dist {
            best_dist = dist;
            best = k;
        }
    }
    let knee = curve[best] as f64;
    let before = (knee - first as f64) / best as f64;
    let after = (curve[n - 1] as f64 - knee + 1.0) / (n - 1 - best) as f64;
    Some(before / after)
}

/// Feeds the stream through a fresh predictor; the close index, or `None` if
/// the criterion never fires.
pub fn run_to_close(stream: &TaskStream, config: &PredictorConfig) -> Result<Option<usize>> {
    let mut p = Predictor::new(*config)?;
    for r in stream.reports() {
        if let Decision::Close { at_index } = p.step(r)? {
            return Ok(Some(at_index));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub report_index: usize,
    pub detected: usize,
    pub estimate: Option<f64>,
    pub decision: Decision,
}

/// One row per consumed report, ending at the close (or the stream end).
pub fn trace(stream: &TaskStream, config: &PredictorConfig) -> Result<Vec<TraceRow>> {
    let mut p = Predictor::new(*config)?;
    let mut rows = Vec::new();
    for r in stream.reports() {
        let decision = p.step(r)?;
        rows.push(TraceRow {
            report_index: r.index,
            detected: p.detected(),
            estimate: p.estimate(),
            decision,
        });
        if decision.is_close() {
            break;
        }
    }
    Ok(rows)
}

/// Renders trace rows as `report_index,D,estimate,decision`.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("report_index,D,estimate,decision\n");
    for row in rows {
        let estimate = row.estimate.map(|e| format!("{e}")).unwrap_or_default();
        let decision = if row.decision.is_close() {
            "close"
        } else {
            "continue"
        };
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.report_index, row.detected, estimate, decision
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream_model::{trend_curve, TaskStream};
    use proptest::prelude::*;

    fn stream(labels: &[Option<u32>]) -> TaskStream {
        TaskStream::from_labels("t", labels.iter().copied()).unwrap()
    }

    fn decisions(labels: &[Option<u32>], config: PredictorConfig) -> Vec<Decision> {
        let mut p = Predictor::new(config).unwrap();
        stream(labels)
            .reports()
            .iter()
            .map(|r| p.step(r).unwrap())
            .collect()
    }

    #[test]
    fn trend_counter_trace() {
        let d = decisions(
            &[Some(1), Some(1), None, None],
            PredictorConfig::new(Method::Trend, 3.0),
        );
        use Decision::*;
        assert_eq!(d, vec![Continue, Continue, Continue, Close { at_index: 4 }]);

        let all_new: Vec<_> = (1..=10).map(Some).collect();
        let s = stream(&all_new);
        assert_eq!(
            run_to_close(&s, &PredictorConfig::new(Method::Trend, 3.0)).unwrap(),
            None
        );

        let s = stream(&[Some(1), None, None, Some(2)]);
        assert_eq!(
            run_to_close(&s, &PredictorConfig::new(Method::Trend, 2.0)).unwrap(),
            Some(3)
        );
    }

    #[test]
    fn step_after_close_is_an_error() {
        let mut p = Predictor::new(PredictorConfig::new(Method::Trend, 1.0)).unwrap();
        assert_eq!(
            p.step(&Report::new(1, None)).unwrap(),
            Decision::Close { at_index: 1 }
        );
        assert_eq!(
            p.step(&Report::new(2, None)),
            Err(PredictorError::AlreadyClosed(1))
        );
    }

    #[test]
    fn out_of_order_reports_rejected() {
        let mut p = Predictor::new(PredictorConfig::new(Method::Trend, 5.0)).unwrap();
        assert_eq!(
            p.step(&Report::new(2, None)),
            Err(PredictorError::OutOfOrder {
                expected: 1,
                found: 2
            })
        );
    }

    #[test]
    fn m0_closes_on_full_recapture() {
        let labels = [Some(1), Some(2), Some(3), Some(2), Some(3), None];
        let mut p = Predictor::new(PredictorConfig::new(Method::M0, 3.0)).unwrap();
        let s = stream(&labels);
        let mut out = Vec::new();
        for r in s.reports() {
            out.push(p.step(r).unwrap());
        }
        assert!(out[..5].iter().all(|d| !d.is_close()));
        assert_eq!(out[5], Decision::Close { at_index: 6 });
        assert_eq!(p.estimate(), Some(3.0));
        assert_eq!(p.detected(), 3);
    }

    #[test]
    fn knee_straight_line_never_fires() {
        // every point lies on the chord: knee at report 2, before 1, after 4/3
        assert_eq!(knee_ratio(&[1, 2, 3, 4, 5]), Some(0.75));
        let s = stream(&[Some(1), Some(2), Some(3), Some(4), Some(5)]);
        assert_eq!(
            run_to_close(&s, &PredictorConfig::new(Method::Knee, 2.0)).unwrap(),
            None
        );
    }

    #[test]
    fn knee_ratio_cases() {
        assert_eq!(knee_ratio(&[1, 2]), None);
        assert_eq!(knee_ratio(&[0, 0, 0]), Some(0.0));
        // chord (1,1)-(6,3): the corner at report 3 is farthest; before 1, after 1/3
        assert_eq!(knee_ratio(&[1, 2, 3, 3, 3, 3]), Some(3.0));
        // knee at report 3: before = (4-1)/2, after = (5-4+1)/3
        let r = knee_ratio(&[1, 3, 4, 4, 4, 5]).unwrap();
        assert!((r - 2.25).abs() < 1e-12, "{r}");
    }

    #[test]
    fn peak_estimate_from_unit_counts() {
        // decline at unit 3, so t_m = 2 and C = 8
        let (t_m, n) = peak_estimate(&[4, 6, 3]).unwrap();
        assert_eq!(t_m, 2);
        assert!((n - 18.130_375_249_069_22).abs() < 1e-9, "{n}");
        assert_eq!(peak_estimate(&[1, 2, 3]), None);
        assert_eq!(peak_estimate(&[5]), None);
        assert_eq!(peak_estimate(&[0, 1, 0]), Some((2, 0.0)));
    }

    #[test]
    fn knee_needs_longer_plateau_for_higher_threshold() {
        // ten new bugs then nothing: after L flat reports the ratio is L
        let mut labels: Vec<Option<u32>> = (1..=10).map(Some).collect();
        labels.extend(std::iter::repeat_n(None, 30));
        let s = stream(&labels);
        let close = |t: f64| run_to_close(&s, &PredictorConfig::new(Method::Knee, t)).unwrap();
        assert_eq!(close(2.5), Some(13));
        assert_eq!(close(7.5), Some(18));
        assert_eq!(close(40.0), None);
    }

    #[test]
    fn peak_freezes_rayleigh_estimate() {
        // stepSize 2: units carry 2, 2, 1 new bugs, so the first decline is unit 3
        // and t_m = 2, giving N = 8·e^(1/8)·2/2
        let labels = [
            Some(1),
            Some(2),
            Some(3),
            Some(4),
            Some(5),
            Some(1),
            Some(6),
            Some(7),
            Some(8),
            Some(9),
            Some(10),
            None,
        ];
        let s = stream(&labels);
        let rows = trace(&s, &PredictorConfig::new(Method::Peak, 2.0)).unwrap();
        let n_hat = 8.0 * (0.125f64).exp();
        assert_eq!(rows[5].estimate, Some(n_hat));
        assert!(rows[..4].iter().all(|r| r.estimate.is_none()));
        // D reaches 9.066 at report 11 (D = 10)
        assert_eq!(rows.len(), 11);
        assert!(rows[10].decision.is_close());
    }

    #[test]
    fn peak_without_first_unit_bugs_never_closes() {
        let labels = [None, None, Some(1), Some(2), Some(3), None, None, None];
        let s = stream(&labels);
        assert_eq!(
            run_to_close(&s, &PredictorConfig::new(Method::Peak, 2.0)).unwrap(),
            None
        );
    }

    #[test]
    fn config_validation() {
        assert!(Predictor::new(PredictorConfig::new(Method::Trend, 0.0)).is_err());
        assert!(Predictor::new(PredictorConfig::new(Method::M0, 2.5)).is_err());
        assert!(Predictor::new(PredictorConfig::new(Method::Knee, 2.5)).is_ok());
        assert!(Predictor::new(PredictorConfig::new(Method::Knee, -1.0)).is_err());
        assert!(
            Predictor::new(PredictorConfig::new(Method::M0, 3.0).with_target_fraction(0.0))
                .is_err()
        );
        assert!(
            Predictor::new(PredictorConfig::new(Method::M0, 3.0).with_target_fraction(1.5))
                .is_err()
        );
    }

    #[test]
    fn method_names_parse() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("MhJK".parse::<Method>().unwrap(), Method::MhJk);
        assert!(matches!(
            "jackknife".parse::<Method>(),
            Err(PredictorError::UnknownMethod(_))
        ));
    }

    #[test]
    fn trace_csv_format() {
        let s = stream(&[Some(1), Some(2), Some(1), None]);
        let rows = trace(&s, &PredictorConfig::new(Method::M0, 2.0)).unwrap();
        assert_eq!(
            trace_csv(&rows),
            "report_index,D,estimate,decision\n1,1,,continue\n2,2,,continue\n3,2,,continue\n4,2,2,close\n"
        );
    }

    fn trend_oracle(s: &TaskStream, threshold: usize) -> Option<usize> {
        let c = trend_curve(s).unwrap();
        (threshold..=s.len()).find(|&k| c.at(k) == c.at(k - threshold))
    }

    fn labels_strategy() -> impl Strategy<Value = Vec<Option<u32>>> {
        prop::collection::vec(prop::option::weighted(0.5, 1u32..25), 1..150)
    }

    proptest! {
        #[test]
        fn trend_matches_whole_curve_scan(labels in labels_strategy(), thres in 1usize..15) {
            let s = TaskStream::from_labels("p", labels).unwrap();
            let got = run_to_close(&s, &PredictorConfig::new(Method::Trend, thres as f64)).unwrap();
            prop_assert_eq!(got, trend_oracle(&s, thres));
        }

        #[test]
        fn trend_monotone_in_threshold(labels in labels_strategy(), thres in 1usize..15) {
            let s = TaskStream::from_labels("p", labels).unwrap();
            let close = |t: usize| run_to_close(&s, &PredictorConfig::new(Method::Trend, t as f64))
                .unwrap()
                .unwrap_or(usize::MAX);
            prop_assert!(close(thres) <= close(thres + 1));
        }

        #[test]
        fn closing_ignores_the_future(
            labels in labels_strategy(),
            extra in prop::collection::vec(prop::option::of(1u32..40), 0..40),
            method_idx in 0usize..8,
            param in 1usize..12,
        ) {
            let method = Method::ALL[method_idx];
            let cfg = PredictorConfig::new(method, param as f64);
            let s = TaskStream::from_labels("p", labels.clone()).unwrap();
            if let Some(at) = run_to_close(&s, &cfg).unwrap() {
                let mut longer = labels[..at].to_vec();
                longer.extend(extra);
                let s2 = TaskStream::from_labels("p", longer).unwrap();
                prop_assert_eq!(run_to_close(&s2, &cfg).unwrap(), Some(at));
                if method.capture_estimator().is_some() {
                    prop_assert_eq!(at % param, 0);
                }
            }
        }
    }
}
