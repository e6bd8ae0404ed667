//! Report streams, bug trends and the trend-shape taxonomy.
//!
//! A crowdtesting task is reduced to the ordered sequence of its reports. Each
//! report either carries no bug or names the bug it describes; the first report
//! naming a bug is the unique detection, later ones are duplicates.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of one underlying bug. Positive.
pub type BugId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("stream `{0}` has no reports")]
    Empty(String),
    #[error("prefix length {k} out of range for a stream of {len} reports")]
    OutOfRange { k: usize, len: usize },
    #[error("task `{task}`: expected report index {expected}, found {found}")]
    BadIndex {
        task: String,
        expected: usize,
        found: usize,
    },
    #[error("task `{task}`: bug id 0 is reserved")]
    ZeroBugId { task: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, StreamError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    /// 1-based arrival position.
    pub index: usize,
    pub bug_id: Option<BugId>,
}

impl Report {
    pub fn new(index: usize, bug_id: Option<BugId>) -> Self {
        Self { index, bug_id }
    }
}

/// One task's chronological report history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStream {
    task_id: String,
    reports: Vec<Report>,
}

impl TaskStream {
    /// Builds a stream from bug labels in arrival order, assigning indices 1..=n.
    pub fn from_labels<I>(task_id: impl Into<String>, labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = Option<BugId>>,
    {
        let reports = labels
            .into_iter()
            .enumerate()
            .map(|(i, bug_id)| Report::new(i + 1, bug_id))
            .collect();
        Self::from_reports(task_id, reports)
    }

    /// Builds a stream from explicit reports, checking that indices run 1..=n.
    pub fn from_reports(task_id: impl Into<String>, reports: Vec<Report>) -> Result<Self> {
        let task_id = task_id.into();
        if reports.is_empty() {
            return Err(StreamError::Empty(task_id));
        }
        for (i, r) in reports.iter().enumerate() {
            if r.index != i + 1 {
                return Err(StreamError::BadIndex {
                    task: task_id,
                    expected: i + 1,
                    found: r.index,
                });
            }
            if r.bug_id == Some(0) {
                return Err(StreamError::ZeroBugId { task: task_id });
            }
        }
        Ok(Self { task_id, reports })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    /// Always false for a constructed stream; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn total_unique_bugs(&self) -> usize {
        self.reports
            .iter()
            .filter_map(|r| r.bug_id)
            .collect::<HashSet<_>>()
            .len()
    }

    /// A copy truncated to the first `len` reports.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(StreamError::OutOfRange {
                k: len,
                len: self.len(),
            });
        }
        Ok(Self {
            task_id: self.task_id.clone(),
            reports: self.reports[..len].to_vec(),
        })
    }
}

/// Number of distinct bugs among reports `1..=k`.
pub fn accumulated_bugs(stream: &TaskStream, k: usize) -> Result<usize> {
    if k > stream.len() {
        return Err(StreamError::OutOfRange {
            k,
            len: stream.len(),
        });
    }
    Ok(stream.reports[..k]
        .iter()
        .filter_map(|r| r.bug_id)
        .collect::<HashSet<_>>()
        .len())
}

/// Cumulative unique-bug counts; `values()[k - 1]` is the count after `k` reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrendCurve {
    values: Vec<usize>,
}

impl TrendCurve {
    /// Wraps raw values, which must be non-decreasing.
    pub fn from_values(values: Vec<usize>) -> Result<Self> {
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(StreamError::InvalidParameter(
                "trend values must be non-decreasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value after `k` reports (1-based). `at(0)` is 0.
    pub fn at(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.values[k - 1]
        }
    }

    pub fn last(&self) -> usize {
        self.values.last().copied().unwrap_or(0)
    }
}

pub fn trend_curve(stream: &TaskStream) -> Result<TrendCurve> {
    if stream.is_empty() {
        return Err(StreamError::Empty(stream.task_id.clone()));
    }
    let mut seen = HashSet::new();
    let values = stream
        .reports
        .iter()
        .map(|r| {
            if let Some(b) = r.bug_id {
                seen.insert(b);
            }
            seen.len()
        })
        .collect();
    Ok(TrendCurve { values })
}

/// Smallest index `i` such that the curve is constant over `i..=i + window`.
pub fn turning_point(curve: &TrendCurve, window: usize) -> Result<Option<usize>> {
    if window == 0 {
        return Err(StreamError::InvalidParameter("window must be >= 1".into()));
    }
    let v = curve.values();
    if v.len() <= window {
        return Ok(None);
    }
    // run = number of consecutive equal values ending at position j (0-based)
    let mut run = 1usize;
    for j in 1..v.len() {
        if v[j] == v[j - 1] {
            run += 1;
        } else {
            run = 1;
        }
        if run > window {
            return Ok(Some(j + 1 - window));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pattern {
    RiseStay,
    RiseStayRise,
    RiseStaySlightRise,
}

impl Pattern {
    pub const ALL: [Pattern; 3] = [
        Pattern::RiseStay,
        Pattern::RiseStayRise,
        Pattern::RiseStaySlightRise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::RiseStay => "rise-stay",
            Pattern::RiseStayRise => "rise-stay-rise",
            Pattern::RiseStaySlightRise => "rise-stay-slight-rise",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = StreamError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rise-stay" | "risestay" => Ok(Pattern::RiseStay),
            "rise-stay-rise" | "risestayrise" => Ok(Pattern::RiseStayRise),
            "rise-stay-slight-rise" | "risestayslightrise" => Ok(Pattern::RiseStaySlightRise),
            other => Err(StreamError::InvalidParameter(format!(
                "unknown pattern `{other}` (expected rise-stay, rise-stay-rise or rise-stay-slight-rise)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCategory {
    pub pattern: Pattern,
    pub turning_point: Option<usize>,
}

pub const DEFAULT_PLATEAU_WINDOW: usize = 20;
pub const DEFAULT_SLIGHT_RISE_CAP: f64 = 0.15;

/// Assigns a stream to one of the three trend shapes.
///
/// With a turning point `t`, the share of bugs still to come after `t` decides
/// the shape: none is rise-stay, up to `slight_rise_cap` is slight rise, more is
/// rise-stay-rise. Without one, a curve still rising over its final window is
/// rise-stay-rise and anything else rise-stay.
pub fn classify_pattern(
    stream: &TaskStream,
    window: usize,
    slight_rise_cap: f64,
) -> Result<PatternCategory> {
    if !(slight_rise_cap > 0.0 && slight_rise_cap < 1.0) {
        return Err(StreamError::InvalidParameter(format!(
            "slight_rise_cap must lie in (0, 1), got {slight_rise_cap}"
        )));
    }
    let curve = trend_curve(stream)?;
    let total = curve.last();
    let tp = turning_point(&curve, window)?;
    if total == 0 {
        return Ok(PatternCategory {
            pattern: Pattern::RiseStay,
            turning_point: Some(1),
        });
    }
    let pattern = match tp {
        None => {
            let n = curve.len();
            let start = n.saturating_sub(window).max(1);
            if curve.at(n) > curve.at(start) {
                Pattern::RiseStayRise
            } else {
                Pattern::RiseStay
            }
        }
        Some(t) => {
            let remaining = (total - curve.at(t)) as f64 / total as f64;
            if remaining == 0.0 {
                Pattern::RiseStay
            } else if remaining <= slight_rise_cap {
                Pattern::RiseStaySlightRise
            } else {
                Pattern::RiseStayRise
            }
        }
    };
    Ok(PatternCategory {
        pattern,
        turning_point: tp,
    })
}
