//! Seeded synthetic report streams with known bug pools.
//!
//! Each report independently carries a bug with probability `bug_report_rate`
//! (scaled by the current worker's skill in the Mt world); a carried bug is
//! drawn from the active pool with probability proportional to its weight.
//! All randomness comes from ChaCha8 seeded with a `u64`, so a config and seed
//! always produce the same stream.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream_model::{BugId, Pattern, TaskStream};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("invalid category mix: {0}")]
    InvalidMix(String),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Capture-recapture model worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum World {
    /// Every bug equally detectable, every worker equally capable.
    M0,
    /// Bugs differ in detectability.
    Mh,
    /// Workers differ in capability.
    Mt,
}

impl World {
    pub fn as_str(self) -> &'static str {
        match self {
            World::M0 => "m0-world",
            World::Mh => "mh-world",
            World::Mt => "mt-world",
        }
    }
}

impl fmt::Display for World {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for World {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_end_matches("-world") {
            "m0" => Ok(World::M0),
            "mh" => Ok(World::Mh),
            "mt" => Ok(World::Mt),
            _ => Err(SynthError::InvalidConfig(format!(
                "unknown world `{s}` (expected m0, mh or mt)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StreamKind {
    Pattern(Pattern),
    World(World),
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamKind::Pattern(p) => f.write_str(p.as_str()),
            StreamKind::World(w) => f.write_str(w.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Detectability {
    /// Equal weights.
    Uniform,
    /// A share of highly detectable bugs among many rare ones.
    TwoPoint {
        high_share: f64,
        high_weight: f64,
        low_weight: f64,
    },
    /// Equal bug weights; the chance a report carries a bug is scaled by a
    /// skill multiplier drawn uniformly from `[low, high]` for each block of
    /// `session_len` consecutive reports.
    WorkerSkill {
        session_len: usize,
        low: f64,
        high: f64,
    },
}

/// Bugs that only become reachable from report `unlock_at` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondPool {
    pub size: usize,
    pub unlock_at: usize,
    pub weight: f64,
}

/// Rarely reported bugs active from the start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPool {
    pub size: usize,
    pub weight: f64,
}

/// Rarely reported bugs that stop being reachable before report `until`,
/// leaving one-off reports in the rising phase only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyPool {
    pub size: usize,
    pub until: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: StreamKind,
    pub n_reports: usize,
    /// Size of the main pool (bug ids `1..=pool_size`).
    pub pool_size: usize,
    pub bug_report_rate: f64,
    pub detectability: Detectability,
    pub second_pool: Option<SecondPool>,
    pub tail_pool: Option<TailPool>,
    pub early_pool: Option<EarlyPool>,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Main-pool-only config with uniform weights.
    pub fn basic(
        kind: StreamKind,
        n_reports: usize,
        pool_size: usize,
        rate: f64,
        seed: u64,
    ) -> Self {
        Self {
            kind,
            n_reports,
            pool_size,
            bug_report_rate: rate,
            detectability: Detectability::Uniform,
            second_pool: None,
            tail_pool: None,
            early_pool: None,
            seed,
        }
    }

    /// All pools together: the true number of distinct bugs.
    pub fn total_pool(&self) -> usize {
        self.pool_size
            + self.second_pool.map_or(0, |p| p.size)
            + self.tail_pool.map_or(0, |p| p.size)
            + self.early_pool.map_or(0, |p| p.size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.n_reports == 0 {
            return bad("n_reports must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.bug_report_rate) {
            return bad("bug_report_rate must lie in [0, 1]");
        }
        match self.detectability {
            Detectability::Uniform => {}
            Detectability::TwoPoint {
                high_share,
                high_weight,
                low_weight,
            } => {
                if !(0.0..=1.0).contains(&high_share) {
                    return bad("high_share must lie in [0, 1]");
                }
                if !(high_weight > 0.0 && low_weight > 0.0) {
                    return bad("weights must be > 0");
                }
            }
            Detectability::WorkerSkill {
                session_len,
                low,
                high,
            } => {
                if session_len == 0 {
                    return bad("session_len must be >= 1");
                }
                if !(low >= 0.0 && high >= low) {
                    return bad("skill range must satisfy 0 <= low <= high");
                }
            }
        }
        if let Some(p) = self.second_pool {
            if p.weight.is_nan() || p.weight <= 0.0 {
                return bad("second pool weight must be > 0");
            }
            if p.unlock_at == 0 {
                return bad("second pool unlock index is 1-based");
            }
        }
        if let Some(p) = self.tail_pool {
            if p.weight.is_nan() || p.weight <= 0.0 {
                return bad("tail pool weight must be > 0");
            }
        }
        if let Some(p) = self.early_pool {
            if p.weight.is_nan() || p.weight <= 0.0 {
                return bad("early pool weight must be > 0");
            }
        }
        Ok(())
    }
}

/// Out-of-band facts about a generated stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub task_id: String,
    pub category: String,
    pub pool_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStream {
    pub stream: TaskStream,
    pub truth: GroundTruth,
}

/// One bug with the report range `[from, until)` in which it can be drawn.
struct Entry {
    id: BugId,
    weight: f64,
    from: usize,
    until: usize,
}

/// Active bugs with a running weight total, sampled by inverse CDF.
struct Pool {
    ids: Vec<BugId>,
    cumulative: Vec<f64>,
}

impl Pool {
    fn active_at(entries: &[Entry], index: usize) -> Self {
        let mut ids = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for e in entries
            .iter()
            .filter(|e| e.from <= index && index < e.until)
        {
            total += e.weight;
            ids.push(e.id);
            cumulative.push(total);
        }
        Self { ids, cumulative }
    }

    fn draw(&self, rng: &mut impl Rng) -> Option<BugId> {
        let total = *self.cumulative.last()?;
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        Some(self.ids[i.min(self.ids.len() - 1)])
    }
}

/// Bug ids are numbered main pool first, then tail, early and second pools.
fn entries(config: &GeneratorConfig) -> Vec<Entry> {
    let mut out = Vec::with_capacity(config.total_pool());
    let mut push = |weight: f64, from: usize, until: usize| {
        let id = out.len() as BugId + 1;
        out.push(Entry {
            id,
            weight,
            from,
            until,
        });
    };
    let main = config.pool_size;
    let high = match config.detectability {
        Detectability::TwoPoint { high_share, .. } => (high_share * main as f64).round() as usize,
        _ => 0,
    };
    for i in 0..main {
        let w = match config.detectability {
            Detectability::TwoPoint {
                high_weight,
                low_weight,
                ..
            } => {
                if i < high {
                    high_weight
                } else {
                    low_weight
                }
            }
            _ => 1.0,
        };
        push(w, 1, usize::MAX);
    }
    if let Some(p) = config.tail_pool {
        (0..p.size).for_each(|_| push(p.weight, 1, usize::MAX));
    }
    if let Some(p) = config.early_pool {
        (0..p.size).for_each(|_| push(p.weight, 1, p.until));
    }
    if let Some(p) = config.second_pool {
        (0..p.size).for_each(|_| push(p.weight, p.unlock_at, usize::MAX));
    }
    out
}

pub fn generate(config: &GeneratorConfig, task_id: &str) -> Result<GeneratedStream> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let entries = entries(config);
    let changes: BTreeSet<usize> = entries.iter().flat_map(|e| [e.from, e.until]).collect();
    let mut pool = Pool::active_at(&entries, 1);
    let mut skill = 1.0;
    let mut labels = Vec::with_capacity(config.n_reports);
    for index in 1..=config.n_reports {
        if index > 1 && changes.contains(&index) {
            pool = Pool::active_at(&entries, index);
        }
        if let Detectability::WorkerSkill {
            session_len,
            low,
            high,
        } = config.detectability
        {
            if (index - 1) % session_len == 0 {
                skill = low + (high - low) * rng.random::<f64>();
            }
        }
        let rate = (config.bug_report_rate * skill).min(1.0);
        let label = if rng.random::<f64>() < rate {
            pool.draw(&mut rng)
        } else {
            None
        };
        labels.push(label);
    }
    let stream =
        TaskStream::from_labels(task_id, labels).expect("n_reports >= 1 and ids start at 1");
    Ok(GeneratedStream {
        stream,
        truth: GroundTruth {
            task_id: task_id.to_string(),
            category: config.kind.to_string(),
            pool_size: config.total_pool(),
            seed: config.seed,
        },
    })
}

/// Proportions of rise-stay, rise-stay-rise and rise-stay-slight-rise tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMix(pub [f64; 3]);

impl CategoryMix {
    /// 113 / 19 / 86 of 218 observed tasks.
    pub const PAPER: CategoryMix = CategoryMix([0.518, 0.087, 0.395]);

    pub fn only(p: Pattern) -> Self {
        let mut m = [0.0; 3];
        m[Self::slot(p)] = 1.0;
        CategoryMix(m)
    }

    fn slot(p: Pattern) -> usize {
        match p {
            Pattern::RiseStay => 0,
            Pattern::RiseStayRise => 1,
            Pattern::RiseStaySlightRise => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(SynthError::InvalidMix(
                "proportions must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::InvalidMix(format!(
                "proportions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Per-category task counts by largest remainder, summing to `count`.
    pub fn counts(&self, count: usize) -> [usize; 3] {
        let exact: Vec<f64> = self.0.iter().map(|p| p * count as f64).collect();
        let mut out = [0usize; 3];
        for (o, e) in out.iter_mut().zip(&exact) {
            *o = e.floor() as usize;
        }
        let mut left = count - out.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            out[i] += 1;
            left -= 1;
        }
        out
    }
}

impl FromStr for CategoryMix {
    type Err = SynthError;

    /// `paper` or three comma-separated proportions.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("paper") {
            return Ok(Self::PAPER);
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SynthError::InvalidMix(format!("`{s}`: {e}")))?;
        let arr: [f64; 3] = parts
            .try_into()
            .map_err(|_| SynthError::InvalidMix(format!("`{s}`: expected three proportions")))?;
        let mix = CategoryMix(arr);
        mix.validate()?;
        Ok(mix)
    }
}

/// Range of task sizes observed in the field: reports and unique bugs.
pub const MIN_REPORTS: usize = 101;
pub const MAX_REPORTS: usize = 876;
pub const MIN_BUGS: usize = 6;
pub const MAX_BUGS: usize = 89;

fn exponential(rng: &mut impl Rng, mean: f64) -> f64 {
    -mean * (1.0 - rng.random::<f64>()).ln()
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Expected draws to collect every coupon of `n` equally likely ones.
fn coupon_draws(n: usize) -> f64 {
    (1..=n).map(|k| n as f64 / k as f64).sum()
}

/// Adds an early pool of `size` bugs reachable before report `until`, each
/// expecting `lambda` reports while active.
fn add_early_pool(c: &mut GeneratorConfig, size: usize, until: usize, lambda: f64) {
    if size == 0 {
        return;
    }
    let draws = c.bug_report_rate * until as f64;
    let spare = (draws - size as f64 * lambda).max(1.0);
    c.early_pool = Some(EarlyPool {
        size,
        until,
        weight: lambda * c.pool_size.max(1) as f64 / spare,
    });
}

/// Samples a realistic-looking config for one task of the given shape.
///
/// Every shape starts with a main pool exhausted by coupon-collector draws
/// plus an early pool of one-off bugs that stops once the main pool is
/// expected to be exhausted.
pub fn pattern_config(pattern: Pattern, rng: &mut impl Rng) -> GeneratorConfig {
    let n_reports = (MIN_REPORTS as f64 + exponential(rng, 112.0)).round() as usize;
    let n_reports = n_reports.clamp(MIN_REPORTS, MAX_REPORTS);
    let bugs = (n_reports as f64 * uniform(rng, 0.06, 0.16)).round() as usize;
    let bugs = bugs.clamp(MIN_BUGS, MAX_BUGS);
    let seed = rng.next_u64();
    let n = n_reports as f64;
    let early = (bugs as f64 * uniform(rng, 0.15, 0.35)).round() as usize;
    let lambda = uniform(rng, 0.7, 1.5);
    let kind = StreamKind::Pattern(pattern);
    // fraction of the stream by which the first pool is expected to be exhausted
    let rate_for = |pool: usize, by: f64| (coupon_draws(pool) / (by * n)).clamp(0.2, 0.95);
    match pattern {
        Pattern::RiseStay => {
            let main = bugs - early;
            let by = uniform(rng, 0.3, 0.6);
            let mut c = GeneratorConfig::basic(kind, n_reports, main, rate_for(main, by), seed);
            add_early_pool(&mut c, early, (by * n).round() as usize, lambda);
            c
        }
        Pattern::RiseStaySlightRise => {
            let tail = ((bugs as f64 * 0.1).round() as usize).max(1);
            let main = bugs - tail - early;
            let by = uniform(rng, 0.3, 0.6);
            let mut c = GeneratorConfig::basic(kind, n_reports, main, rate_for(main, by), seed);
            c.tail_pool = Some(TailPool {
                size: tail,
                weight: uniform(rng, 0.02, 0.08),
            });
            add_early_pool(&mut c, early, (by * n).round() as usize, lambda);
            c
        }
        Pattern::RiseStayRise => {
            let first = (bugs - early).div_ceil(2);
            let by = uniform(rng, 0.15, 0.3);
            let unlock = (n * uniform(rng, 0.45, 0.65)).round() as usize;
            let mut c = GeneratorConfig::basic(kind, n_reports, first, rate_for(first, by), seed);
            c.second_pool = Some(SecondPool {
                size: bugs - early - first,
                unlock_at: unlock.max(1),
                weight: 4.0,
            });
            add_early_pool(&mut c, early, (by * n).round() as usize, lambda);
            c
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub streams: Vec<TaskStream>,
    pub truths: Vec<GroundTruth>,
    pub seed: u64,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

/// `count` tasks whose shapes follow `mix`, in a seeded random order with ids
/// `task-001`, `task-002`, ...
pub fn generate_corpus(mix: CategoryMix, count: usize, seed: u64) -> Result<Corpus> {
    mix.validate()?;
    if count == 0 {
        return Err(SynthError::InvalidConfig("count must be >= 1".into()));
    }
    let counts = mix.counts(count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes: Vec<Pattern> = Pattern::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&p, c)| std::iter::repeat_n(p, c))
        .collect();
    shapes.shuffle(&mut rng);
    let width = count.to_string().len().max(3);
    let mut streams = Vec::with_capacity(count);
    let mut truths = Vec::with_capacity(count);
    for (i, shape) in shapes.into_iter().enumerate() {
        let config = pattern_config(shape, &mut rng);
        let id = format!("task-{:0width$}", i + 1);
        let g = generate(&config, &id)?;
        streams.push(g.stream);
        truths.push(g.truth);
    }
    Ok(Corpus {
        streams,
        truths,
        seed,
    })
}

/// `count` streams of one capture-recapture world, each with its own seed drawn
/// from `seed`.
pub fn generate_worlds(world: World, count: usize, seed: u64) -> Result<Corpus> {
    if count == 0 {
        return Err(SynthError::InvalidConfig("count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = count.to_string().len().max(3);
    let mut streams = Vec::with_capacity(count);
    let mut truths = Vec::with_capacity(count);
    for i in 0..count {
        let config = world_config(world, rng.random());
        let g = generate(&config, &format!("task-{:0width$}", i + 1))?;
        streams.push(g.stream);
        truths.push(g.truth);
    }
    Ok(Corpus {
        streams,
        truths,
        seed,
    })
}

/// Default world configs used for estimator convergence checks.
pub fn world_config(world: World, seed: u64) -> GeneratorConfig {
    match world {
        World::M0 => GeneratorConfig::basic(StreamKind::World(world), 400, 50, 0.5, seed),
        World::Mh => GeneratorConfig {
            detectability: Detectability::TwoPoint {
                high_share: 0.3,
                high_weight: 3.0,
                low_weight: 1.0,
            },
            ..GeneratorConfig::basic(StreamKind::World(world), 600, 50, 0.5, seed)
        },
        World::Mt => GeneratorConfig {
            detectability: Detectability::WorkerSkill {
                session_len: 20,
                low: 0.2,
                high: 1.8,
            },
            ..GeneratorConfig::basic(StreamKind::World(world), 600, 50, 0.5, seed)
        },
    }
}
