//! Capture-recapture bookkeeping shared by the population estimators.
//!
//! Every `cap_size` consecutive reports form one capture (detection occasion).
//! Within a capture a bug is either present or absent; repeated reports of the
//! same bug inside one capture count once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::stream_model::{BugId, Report};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CaptureError {
    #[error("capture size must be >= 1")]
    ZeroCapSize,
    #[error("capture holds {got} reports, expected {expected}")]
    WrongCaptureLength { got: usize, expected: usize },
    #[error("no captures recorded yet")]
    EmptyTable,
    #[error("need at least {need} captures, have {have}")]
    InsufficientCaptures { need: usize, have: usize },
}

pub type Result<T> = std::result::Result<T, CaptureError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureTable {
    cap_size: usize,
    /// Sorted 1-based capture indices per bug.
    detections: BTreeMap<BugId, Vec<usize>>,
    /// Distinct bugs present in each capture.
    n: Vec<usize>,
}

impl CaptureTable {
    pub fn new(cap_size: usize) -> Result<Self> {
        if cap_size == 0 {
            return Err(CaptureError::ZeroCapSize);
        }
        Ok(Self {
            cap_size,
            detections: BTreeMap::new(),
            n: Vec::new(),
        })
    }

    /// Table over every complete capture of `reports`; a trailing partial
    /// capture is dropped.
    pub fn from_reports(reports: &[Report], cap_size: usize) -> Result<Self> {
        let mut table = Self::new(cap_size)?;
        for chunk in reports.chunks_exact(cap_size) {
            table.ingest_capture(chunk)?;
        }
        Ok(table)
    }

    pub fn ingest_capture(&mut self, reports: &[Report]) -> Result<()> {
        if reports.len() != self.cap_size {
            return Err(CaptureError::WrongCaptureLength {
                got: reports.len(),
                expected: self.cap_size,
            });
        }
        let capture = self.n.len() + 1;
        let present: BTreeSet<BugId> = reports.iter().filter_map(|r| r.bug_id).collect();
        for &bug in &present {
            self.detections.entry(bug).or_default().push(capture);
        }
        self.n.push(present.len());
        Ok(())
    }

    pub fn cap_size(&self) -> usize {
        self.cap_size
    }

    /// Completed captures.
    pub fn t(&self) -> usize {
        self.n.len()
    }

    /// Distinct bugs over all captures.
    pub fn d(&self) -> usize {
        self.detections.len()
    }

    /// Per-capture distinct-bug counts `n_1..n_t`.
    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn detections(&self) -> &BTreeMap<BugId, Vec<usize>> {
        &self.detections
    }

    pub fn frequency_counts(&self) -> Result<FrequencyCounts> {
        let t = self.t();
        if t == 0 {
            return Err(CaptureError::EmptyTable);
        }
        let mut f = vec![0usize; t];
        let mut z = vec![0usize; t];
        for caps in self.detections.values() {
            f[caps.len() - 1] += 1;
            if caps.len() == 1 {
                z[caps[0] - 1] += 1;
            }
        }
        Ok(FrequencyCounts { f, z })
    }

    /// Splits the table into the newest capture (second round) and all earlier
    /// captures (first round). Returns `(n1, n2, m)`.
    pub fn two_round_split(&self) -> Result<(usize, usize, usize)> {
        let t = self.t();
        if t < 2 {
            return Err(CaptureError::InsufficientCaptures { need: 2, have: t });
        }
        let (mut n1, mut m) = (0, 0);
        for caps in self.detections.values() {
            let in_first = caps[0] < t;
            let in_last = caps[caps.len() - 1] == t;
            if in_first {
                n1 += 1;
                if in_last {
                    m += 1;
                }
            }
        }
        Ok((n1, self.n[t - 1], m))
    }

    /// 0/1 detection matrix as CSV: `bug_id,capture_1..capture_t`.
    pub fn detection_csv(&self) -> String {
        let t = self.t();
        let mut out = String::from("bug_id");
        for j in 1..=t {
            let _ = write!(out, ",capture_{j}");
        }
        out.push('\n');
        for (bug, caps) in &self.detections {
            let _ = write!(out, "{bug}");
            let mut it = caps.iter().peekable();
            for j in 1..=t {
                let hit = it.peek() == Some(&&j);
                if hit {
                    it.next();
                }
                out.push_str(if hit { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        out
    }
}

/// `f_k` (bugs seen in exactly `k` captures) and `Z_i` (bugs seen only in capture `i`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyCounts {
    f: Vec<usize>,
    z: Vec<usize>,
}

impl FrequencyCounts {
    /// Builds counts directly; `f[k - 1]` is `f_k` and `z[i - 1]` is `Z_i`.
    pub fn new(f: Vec<usize>, z: Vec<usize>) -> Self {
        Self { f, z }
    }

    /// `f_k`, zero outside `1..=t`.
    pub fn f(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.f.get(k - 1).copied().unwrap_or(0)
        }
    }

    pub fn f_values(&self) -> &[usize] {
        &self.f
    }

    pub fn singletons_per_capture(&self) -> &[usize] {
        &self.z
    }

    /// Σ f_k, the number of distinct bugs.
    pub fn distinct(&self) -> usize {
        self.f.iter().sum()
    }

    /// Σ k·f_k, the total number of (bug, capture) detections.
    pub fn total_detections(&self) -> usize {
        self.f.iter().enumerate().map(|(i, &fk)| (i + 1) * fk).sum()
    }
}
