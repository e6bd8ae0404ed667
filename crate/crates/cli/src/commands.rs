use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{Context, Result};
use crowdclose::evaluation::{
    aggregate, cross_validate_matrix, evaluate, CvOptions, OutcomeMatrix,
};
use crowdclose::io::{
    read_outcomes, read_streams, write_histograms, write_metadata, write_outcomes, write_pairwise,
    write_scans, write_streams, write_summaries, CorpusMetadata,
};
use crowdclose::predictors::{trace, trace_csv};
use crowdclose::protocol::{self, compare as compare_sets, label_by_method, ProtocolConfig};
use crowdclose::synth::{generate_corpus, generate_worlds, CategoryMix, Corpus};
use crowdclose::{Method, Outcome, PredictorConfig, TaskStream};

use crate::config::write_resolved;
use crate::{
    grid, CompareArgs, CvArgs, GridArgs, PredictArgs, ProtocolArgs, ScanArgs, SimulateArgs,
    TuneArgs, UsageError,
};

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

fn load_streams(path: &Path) -> Result<Vec<TaskStream>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let streams =
        read_streams(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    if streams.is_empty() {
        anyhow::bail!("{} holds no tasks", path.display());
    }
    Ok(streams)
}

fn write_corpus(dir: &Path, corpus: &Corpus, mix: Option<CategoryMix>) -> Result<()> {
    write_streams(create(dir, "streams.csv")?, &corpus.streams)?;
    write_metadata(
        create(dir, "metadata.json")?,
        &CorpusMetadata::new(corpus, mix),
    )?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let count = a.tasks as usize;
    let (corpus, mix) = match (a.pattern, a.world, a.mix) {
        (Some(p), _, _) => {
            let mix = CategoryMix::only(p);
            (generate_corpus(mix, count, a.seed)?, Some(mix))
        }
        (_, Some(w), _) => (generate_worlds(w, count, a.seed)?, None),
        (_, _, mix) => {
            let mix = mix.unwrap_or(CategoryMix::PAPER);
            (generate_corpus(mix, count, a.seed)?, Some(mix))
        }
    };
    out_dir(&a.out)?;
    write_corpus(&a.out, &corpus, mix)?;
    write_resolved(&a.out, "simulate", a)?;
    eprintln!("wrote {} tasks to {}", corpus.len(), a.out.display());
    Ok(())
}

/// Keeps trace file names portable whatever the task id holds.
fn file_stem(task_id: &str) -> String {
    task_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let config = PredictorConfig::new(a.method, a.param).with_target_fraction(a.target_fraction);
    config.validate().map_err(|e| usage(e.to_string()))?;
    let streams = load_streams(&a.input)?;
    out_dir(&a.out)?;
    let outcomes = streams
        .iter()
        .map(|s| evaluate(s, &config))
        .collect::<Result<Vec<_>, _>>()?;
    write_outcomes(create(&a.out, "outcomes.csv")?, &outcomes)?;
    if a.trace {
        for s in &streams {
            let rows = trace(s, &config)?;
            let name = format!("trace_{}.csv", file_stem(s.task_id()));
            fs::write(a.out.join(name), trace_csv(&rows))?;
        }
    }
    write_resolved(&a.out, "predict", a)?;
    eprintln!("evaluated {} tasks with {}", outcomes.len(), a.method);
    Ok(())
}

fn grids(methods: &[Method], specs: &[String]) -> Result<BTreeMap<Method, Vec<f64>>> {
    grid::resolve(methods, specs).map_err(usage)
}

fn matrices(a: &GridArgs, streams: &[TaskStream]) -> Result<Vec<OutcomeMatrix>> {
    let grids = grids(&a.methods, &a.grids)?;
    a.methods
        .iter()
        .map(|m| {
            OutcomeMatrix::compute(streams, *m, &grids[m], a.target_fraction)
                .map_err(|e| usage(e.to_string()))
        })
        .collect()
}

pub fn scan(a: &ScanArgs) -> Result<()> {
    let streams = load_streams(&a.grid.input)?;
    let matrices = matrices(&a.grid, &streams)?;
    out_dir(&a.out)?;
    let scans: Vec<_> = matrices.iter().map(OutcomeMatrix::scan_all).collect();
    write_scans(create(&a.out, "scan.csv")?, &scans)?;
    let outcomes: Vec<Outcome> = matrices
        .iter()
        .flat_map(|m| (0..m.grid().len()).flat_map(move |j| m.outcomes_at(j)))
        .collect();
    write_outcomes(create(&a.out, "outcomes.csv")?, &outcomes)?;
    write_resolved(&a.out, "scan", a)?;
    eprintln!(
        "scanned {} methods over {} tasks",
        scans.len(),
        streams.len()
    );
    Ok(())
}

fn cv_options(cv: &CvArgs, tasks: usize) -> Result<CvOptions> {
    let folds = cv.folds as usize;
    if tasks < folds {
        return Err(usage(format!(
            "{folds} folds need at least {folds} tasks, have {tasks}"
        )));
    }
    Ok(CvOptions {
        folds,
        repeats: cv.repeats as usize,
        seed: cv.cv_seed,
        min_bug: cv.min_bug,
        min_cost: cv.min_cost,
    })
}

pub fn tune(a: &TuneArgs) -> Result<()> {
    let streams = load_streams(&a.grid.input)?;
    let opts = cv_options(&a.cv, streams.len())?;
    let matrices = matrices(&a.grid, &streams)?;
    let out = &a.out;
    out_dir(out)?;
    let mut scans = Vec::new();
    let mut tunes = Vec::new();
    let mut outcomes = Vec::new();
    let mut summaries = Vec::new();
    for m in &matrices {
        let t = cross_validate_matrix(m, &opts)?;
        let j = m
            .grid()
            .iter()
            .position(|&p| p == t.modal)
            .expect("modal value comes from the grid");
        let at_modal = m.outcomes_at(j);
        summaries.push((m.method(), t.modal, aggregate(&at_modal)?));
        outcomes.extend(at_modal);
        scans.push(m.scan_all());
        tunes.push(t);
    }
    write_scans(create(out, "scan.csv")?, &scans)?;
    write_histograms(create(out, "histogram.csv")?, &tunes)?;
    write_outcomes(create(out, "outcomes.csv")?, &outcomes)?;
    write_summaries(create(out, "summary.csv")?, &summaries)?;
    write_resolved(out, "tune", a)?;
    for t in &tunes {
        eprintln!("{}: modal parameter {}", t.method, t.modal);
    }
    Ok(())
}

/// Each file's outcomes split by method, in order of first appearance.
fn split_by_method(outcomes: Vec<Outcome>) -> Vec<Vec<Outcome>> {
    let mut order: Vec<Method> = Vec::new();
    let mut groups: BTreeMap<Method, Vec<Outcome>> = BTreeMap::new();
    for o in outcomes {
        if !order.contains(&o.method) {
            order.push(o.method);
        }
        groups.entry(o.method).or_default().push(o);
    }
    order
        .into_iter()
        .map(|m| groups.remove(&m).unwrap())
        .collect()
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let mut sets = Vec::new();
    for path in &a.outcomes {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let outcomes = read_outcomes(BufReader::new(f))
            .with_context(|| format!("reading {}", path.display()))?;
        sets.extend(split_by_method(outcomes));
    }
    let groups = label_by_method(sets);
    let tests = compare_sets(&groups)?;
    out_dir(&a.out)?;
    write_pairwise(create(&a.out, "pairwise.csv")?, &tests)?;
    write_resolved(&a.out, "compare", a)?;
    eprintln!("{} comparisons", tests.len());
    Ok(())
}

pub fn paper_protocol(a: &ProtocolArgs) -> Result<()> {
    let methods = if a.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        a.methods.clone()
    };
    let config = ProtocolConfig {
        tasks: a.tasks as usize,
        seed: a.seed,
        mix: a.mix,
        grids: grids(&methods, &a.grids)?,
        methods,
        cv: cv_options(&a.cv, a.tasks as usize)?,
        target_fraction: a.target_fraction,
    };
    let (corpus, report) = protocol::run(&config)?;
    out_dir(&a.out)?;
    write_corpus(&a.out, &corpus, Some(a.mix))?;
    let scans: Vec<_> = report.methods.iter().map(|r| r.scan.clone()).collect();
    let tunes: Vec<_> = report.methods.iter().map(|r| r.tune.clone()).collect();
    let outcomes: Vec<Outcome> = report
        .methods
        .iter()
        .flat_map(|r| r.outcomes.clone())
        .collect();
    let summaries: Vec<_> = report
        .methods
        .iter()
        .map(|r| (r.method, r.tune.modal, r.summary))
        .collect();
    write_scans(create(&a.out, "scan.csv")?, &scans)?;
    write_histograms(create(&a.out, "histogram.csv")?, &tunes)?;
    write_outcomes(create(&a.out, "outcomes.csv")?, &outcomes)?;
    write_summaries(create(&a.out, "summary.csv")?, &summaries)?;
    write_pairwise(create(&a.out, "pairwise.csv")?, &report.pairwise)?;
    write_resolved(&a.out, "paper-protocol", a)?;
    for r in &report.methods {
        eprintln!(
            "{:<6} modal {:<5} median bug {:.3} cost {:.3} f1 {:.3}",
            r.method.as_str(),
            r.tune.modal,
            r.summary.pct_bug.median,
            r.summary.pct_reduced_cost.median,
            r.summary.f1.median
        );
    }
    Ok(())
}
