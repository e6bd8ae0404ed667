//! Total-bug population estimators.
//!
//! One estimator comes from the Rayleigh defect-arrival model, the rest from
//! capture-recapture statistics. All are pure; degenerate inputs yield
//! [`Estimate::Undefined`] rather than an error, while contract violations
//! (impossible inputs) are errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture_stats::{CaptureTable, FrequencyCounts};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimateError {
    #[error("peak unit index must be >= 1")]
    InvalidPeak,
    #[error("recaptured count m={m} exceeds min(n1={n1}, n2={n2})")]
    InconsistentRecapture { n1: usize, n2: usize, m: usize },
    #[error("need at least {need} captures, have {have}")]
    InsufficientCaptures { need: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, EstimateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UndefinedReason {
    ZeroDivision,
    InsufficientData,
    NoPeak,
    ConditionsUnmet,
}

/// Estimated total number of bugs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Estimate {
    Value(f64),
    Undefined(UndefinedReason),
}

impl Estimate {
    pub fn value(self) -> Option<f64> {
        match self {
            Estimate::Value(v) => Some(v),
            Estimate::Undefined(_) => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Estimate::Value(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RayleighInputs {
    /// Unit index at which the per-unit arrival count peaks.
    pub t_m: usize,
    /// New bugs in the first unit.
    pub f1: usize,
}

/// Rayleigh total with the fitting point fixed at the first unit:
/// `C = 2·t_m²`, `N = C·e^(1/C)·f(1)/2`.
pub fn rayleigh_total(inputs: RayleighInputs) -> Result<Estimate> {
    if inputs.t_m < 1 {
        return Err(EstimateError::InvalidPeak);
    }
    let c = 2.0 * (inputs.t_m as f64).powi(2);
    let t = 1.0_f64;
    let n = c * (t * t / c).exp() * inputs.f1 as f64 / (2.0 * t);
    Ok(Estimate::Value(n))
}

/// Two-round Lincoln-Petersen: `n1·n2/m`, or `n1 + n2` when nothing was recaptured.
pub fn m0_total(n1: usize, n2: usize, m: usize) -> Result<Estimate> {
    if m > n1.min(n2) {
        return Err(EstimateError::InconsistentRecapture { n1, n2, m });
    }
    let n = if m == 0 {
        (n1 + n2) as f64
    } else {
        (n1 as f64) * (n2 as f64) / m as f64
    };
    Ok(Estimate::Value(n))
}

/// Sample-coverage estimator allowing heterogeneity in both bugs and captures.
pub fn mth_total(counts: &FrequencyCounts, table: &CaptureTable) -> Result<Estimate> {
    let t = table.t();
    if t < 2 {
        return Err(EstimateError::InsufficientCaptures { need: 2, have: t });
    }
    let d = counts.distinct() as f64;
    let f1 = counts.f(1) as f64;
    let detections = counts.total_detections() as f64;
    if detections == 0.0 {
        return Ok(Estimate::Undefined(UndefinedReason::InsufficientData));
    }
    let coverage = 1.0 - f1 / detections;
    if coverage <= 0.0 {
        return Ok(Estimate::Undefined(UndefinedReason::ZeroDivision));
    }
    let repeat_pairs: f64 = counts
        .f_values()
        .iter()
        .enumerate()
        .map(|(i, &fk)| {
            let k = (i + 1) as f64;
            k * (k - 1.0) * fk as f64
        })
        .sum();
    // Σ_{j<k} n_j·n_k = ((Σ n)² − Σ n²) / 2
    let sum_n: f64 = table.n().iter().map(|&x| x as f64).sum();
    let sum_sq: f64 = table.n().iter().map(|&x| (x as f64).powi(2)).sum();
    let cross = (sum_n * sum_n - sum_sq) / 2.0;
    let gamma_sq = if cross == 0.0 {
        0.0
    } else {
        ((d / coverage) * repeat_pairs / (2.0 * cross) - 1.0).max(0.0)
    };
    Ok(Estimate::Value(d / coverage + f1 / coverage * gamma_sq))
}

/// Jackknife orders available to the Mh jackknife estimator.
///
/// Only the first-order form is implemented; higher orders and the test that
/// chooses between them slot in here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JackknifeOrder {
    #[default]
    First,
}

impl JackknifeOrder {
    pub fn estimate(self, counts: &FrequencyCounts, t: usize, d: usize) -> Result<Estimate> {
        match self {
            JackknifeOrder::First => mhjk_total(counts, t, d),
        }
    }
}

/// First-order jackknife: `D + (t−1)/t · f1`.
pub fn mhjk_total(counts: &FrequencyCounts, t: usize, d: usize) -> Result<Estimate> {
    if t < 1 {
        return Err(EstimateError::InsufficientCaptures { need: 1, have: t });
    }
    let t = t as f64;
    Ok(Estimate::Value(
        d as f64 + (t - 1.0) / t * counts.f(1) as f64,
    ))
}

/// Chao's Mh estimator, using the bias-corrected form when its validity
/// conditions hold.
pub fn mhch_total(counts: &FrequencyCounts, t: usize, d: usize) -> Result<Estimate> {
    if t < 1 {
        return Err(EstimateError::InsufficientCaptures { need: 1, have: t });
    }
    let (f1, f2, f3) = (counts.f(1), counts.f(2), counts.f(3));
    if f1 == 0 {
        return Ok(Estimate::Value(d as f64));
    }
    if f2 == 0 {
        return Ok(Estimate::Undefined(UndefinedReason::ZeroDivision));
    }
    let (tf, f1f, f2f, f3f) = (t as f64, f1 as f64, f2 as f64, f3 as f64);
    let base = f1f * f1f / (2.0 * f2f);
    // integer comparisons keep the condition checks exact
    let corrected = t * f1 > 2 * f2 && t * f2 > 3 * f3 && 3 * f1 * f2 > 2 * f2 * f2;
    let n = if corrected {
        d as f64 + base * (1.0 - 2.0 * f2f / (tf * f1f)) / (1.0 - 3.0 * f3f / (tf * f2f))
    } else {
        d as f64 + base
    };
    Ok(Estimate::Value(n))
}

/// Chao's Mt estimator: `D + Σ_{i<j} Z_i·Z_j / (f2 + 1)`.
pub fn mtch_total(counts: &FrequencyCounts, d: usize) -> Result<Estimate> {
    let z = counts.singletons_per_capture();
    if z.len() < 2 {
        return Err(EstimateError::InsufficientCaptures {
            need: 2,
            have: z.len(),
        });
    }
    let sum: f64 = z.iter().map(|&x| x as f64).sum();
    let sum_sq: f64 = z.iter().map(|&x| (x as f64).powi(2)).sum();
    let pairs = (sum * sum - sum_sq) / 2.0;
    Ok(Estimate::Value(
        d as f64 + pairs / (counts.f(2) as f64 + 1.0),
    ))
}

/// The capture-recapture estimators a predictor can run at each capture boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaptureEstimator {
    M0,
    Mth,
    MhJk(JackknifeOrder),
    MhCh,
    MtCh,
}

impl CaptureEstimator {
    pub fn estimate(self, table: &CaptureTable) -> Result<Estimate> {
        let t = table.t();
        if t < 2 {
            return Err(EstimateError::InsufficientCaptures { need: 2, have: t });
        }
        let counts = || {
            table
                .frequency_counts()
                .expect("table has at least two captures")
        };
        match self {
            CaptureEstimator::M0 => {
                let (n1, n2, m) = table
                    .two_round_split()
                    .expect("table has at least two captures");
                m0_total(n1, n2, m)
            }
            CaptureEstimator::Mth => mth_total(&counts(), table),
            CaptureEstimator::MhJk(order) => order.estimate(&counts(), t, table.d()),
            CaptureEstimator::MhCh => mhch_total(&counts(), t, table.d()),
            CaptureEstimator::MtCh => mtch_total(&counts(), table.d()),
        }
    }
}
