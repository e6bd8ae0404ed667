//! Deciding when to close a crowdtesting task from its stream of reports.
//!
//! A task is a chronological stream of reports, each either a duplicate-free
//! bug id or nothing. Predictors consume the stream one report at a time and
//! signal when enough bugs have probably been found. Evaluation tools scan
//! predictor parameters over many tasks, tune them by cross validation and
//! compare methods.

pub mod capture_stats;
pub mod estimators;
pub mod evaluation;
pub mod io;
pub mod predictors;
pub mod protocol;
pub mod stream_model;
pub mod synth;

pub use capture_stats::{CaptureTable, FrequencyCounts};
pub use estimators::{CaptureEstimator, Estimate};
pub use evaluation::{Metrics, Outcome, OutcomeMatrix, ParamScan};
pub use predictors::{Decision, Method, Predictor, PredictorConfig};
pub use stream_model::{BugId, Pattern, Report, TaskStream, TrendCurve};
