//! CSV and JSON file formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so output is
//! byte-identical for identical inputs.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{Outcome, ParamScan, Summary, TuneResult};
use crate::predictors::Method;
use crate::stream_model::{Report, StreamError, TaskStream};
use crate::synth::{CategoryMix, Corpus, GroundTruth};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
    #[error("task `{task}`: {source}")]
    Stream { task: String, source: StreamError },
}

pub type Result<T> = std::result::Result<T, IoError>;

fn format_err(record: &csv::StringRecord, message: String) -> IoError {
    IoError::Format {
        line: record.position().map_or(0, |p| p.line()),
        message,
    }
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(IoError::Format {
            line: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(())
}

pub const STREAM_HEADER: [&str; 3] = ["task_id", "report_index", "bug_id"];

/// Writes `task_id,report_index,bug_id` rows; bug-free reports leave `bug_id` empty.
pub fn write_streams(out: impl Write, streams: &[TaskStream]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STREAM_HEADER)?;
    for s in streams {
        for r in s.reports() {
            let bug = r.bug_id.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([s.task_id(), &r.index.to_string(), &bug])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a report-stream CSV. Rows of one task must be contiguous and numbered
/// `1, 2, 3, ...`; anything else is rejected.
pub fn read_streams(input: impl Read) -> Result<Vec<TaskStream>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    check_header(&mut reader, &STREAM_HEADER)?;
    let mut streams = Vec::new();
    let mut seen = BTreeSet::new();
    let mut current: Option<(String, Vec<Report>)> = None;
    let finish = |task: String, reports: Vec<Report>| {
        TaskStream::from_reports(task.clone(), reports)
            .map_err(|source| IoError::Stream { task, source })
    };
    for record in reader.records() {
        let record = record?;
        let task = record[0].to_string();
        let index: usize = record[1]
            .parse()
            .map_err(|_| format_err(&record, format!("bad report_index `{}`", &record[1])))?;
        let bug = match &record[2] {
            "" => None,
            b => Some(
                b.parse()
                    .map_err(|_| format_err(&record, format!("bad bug_id `{b}`")))?,
            ),
        };
        if current.as_ref().is_none_or(|(t, _)| *t != task) {
            if !seen.insert(task.clone()) {
                return Err(format_err(
                    &record,
                    format!("rows of task `{task}` are not contiguous"),
                ));
            }
            if let Some((t, reports)) = current.take() {
                streams.push(finish(t, reports)?);
            }
            current = Some((task.clone(), Vec::new()));
        }
        let reports = &mut current.as_mut().unwrap().1;
        let expected = reports.len() + 1;
        if index != expected {
            let what = if index < expected {
                "duplicate"
            } else {
                "out-of-order"
            };
            return Err(format_err(
                &record,
                format!("{what} report_index {index} in task `{task}`, expected {expected}"),
            ));
        }
        reports.push(Report::new(index, bug));
    }
    if let Some((t, reports)) = current {
        streams.push(finish(t, reports)?);
    }
    Ok(streams)
}

/// Ground truth of a generated corpus, kept apart from the stream CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetadata {
    pub seed: u64,
    pub mix: Option<CategoryMix>,
    pub generator: String,
    pub tasks: Vec<GroundTruth>,
}

impl CorpusMetadata {
    pub fn new(corpus: &Corpus, mix: Option<CategoryMix>) -> Self {
        Self {
            seed: corpus.seed,
            mix,
            generator: "chacha8".into(),
            tasks: corpus.truths.clone(),
        }
    }
}

pub fn write_metadata(out: impl Write, meta: &CorpusMetadata) -> Result<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, meta)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_metadata(input: impl Read) -> Result<CorpusMetadata> {
    Ok(serde_json::from_reader(input)?)
}

pub const OUTCOME_HEADER: [&str; 7] = [
    "task_id",
    "method",
    "parameter",
    "close_index",
    "pct_bug",
    "pct_reduced_cost",
    "f1",
];

pub fn write_outcomes(out: impl Write, outcomes: &[Outcome]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OUTCOME_HEADER)?;
    for o in outcomes {
        w.write_record([
            o.task_id.clone(),
            o.method.to_string(),
            o.parameter.to_string(),
            o.close_index.to_string(),
            o.pct_bug.to_string(),
            o.pct_reduced_cost.to_string(),
            o.f1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_outcomes(input: impl Read) -> Result<Vec<Outcome>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    check_header(&mut reader, &OUTCOME_HEADER)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let num = |i: usize| -> Result<f64> {
            record[i].parse().map_err(|_| {
                format_err(
                    &record,
                    format!("bad {} `{}`", OUTCOME_HEADER[i], &record[i]),
                )
            })
        };
        let method: Method = record[1]
            .parse()
            .map_err(|e| format_err(&record, format!("{e}")))?;
        let close_index = record[3]
            .parse()
            .map_err(|_| format_err(&record, format!("bad close_index `{}`", &record[3])))?;
        out.push(Outcome {
            task_id: record[0].to_string(),
            method,
            parameter: num(2)?,
            close_index,
            pct_bug: num(4)?,
            pct_reduced_cost: num(5)?,
            f1: num(6)?,
        });
    }
    Ok(out)
}

pub fn write_scans(out: impl Write, scans: &[ParamScan]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "parameter", "med_bug", "med_cost", "med_f1"])?;
    for s in scans {
        for r in &s.rows {
            w.write_record([
                s.method.to_string(),
                r.parameter.to_string(),
                r.median.pct_bug.to_string(),
                r.median.pct_reduced_cost.to_string(),
                r.median.f1.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_histograms(out: impl Write, tunes: &[TuneResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "parameter", "frequency"])?;
    for t in tunes {
        for (p, c) in &t.histogram {
            w.write_record([t.method.to_string(), p.to_string(), c.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `method,parameter,metric,median,std`, three rows per summary.
pub fn write_summaries(out: impl Write, summaries: &[(Method, f64, Summary)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "parameter", "metric", "median", "std"])?;
    for (method, parameter, s) in summaries {
        for (name, m) in [
            ("pct_bug", s.pct_bug),
            ("pct_reduced_cost", s.pct_reduced_cost),
            ("f1", s.f1),
        ] {
            w.write_record([
                method.to_string(),
                parameter.to_string(),
                name.to_string(),
                m.median.to_string(),
                m.std.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One Mann-Whitney comparison between two labelled outcome sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub method_a: String,
    pub method_b: String,
    pub metric: String,
    pub p_value: f64,
}

pub fn write_pairwise(out: impl Write, tests: &[PairwiseTest]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method_a", "method_b", "metric", "p_value"])?;
    for t in tests {
        w.write_record([&t.method_a, &t.method_b, &t.metric, &t.p_value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
