//! Miss-ratio series, regret and confidence intervals.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::policies::Counters;

/// Normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.96;

pub const DEFAULT_CHECKPOINTS: usize = 200;

/// Up to `points` logarithmically spaced steps in `1..=horizon`, always ending
/// at `horizon`.
pub fn checkpoint_grid(horizon: u64, points: usize) -> Vec<u64> {
    if horizon == 0 {
        return Vec::new();
    }
    if points <= 1 {
        return vec![horizon];
    }
    let top = (horizon as f64).ln();
    let mut grid: Vec<u64> = (0..points)
        .map(|i| {
            let x = (top * i as f64 / (points - 1) as f64).exp().round() as u64;
            x.clamp(1, horizon)
        })
        .collect();
    grid.dedup();
    if *grid.last().unwrap() != horizon {
        grid.push(horizon);
    }
    grid
}

/// Records the cumulative miss ratio at each checkpoint.
#[derive(Debug, Clone)]
pub struct MissRecorder {
    checkpoints: Vec<u64>,
    series: Vec<f64>,
    misses: u64,
    t: u64,
}

impl MissRecorder {
    pub fn new(checkpoints: Vec<u64>) -> Self {
        let cap = checkpoints.len();
        MissRecorder {
            checkpoints,
            series: Vec::with_capacity(cap),
            misses: 0,
            t: 0,
        }
    }

    pub fn record(&mut self, hit: bool) {
        self.t += 1;
        if !hit {
            self.misses += 1;
        }
        if self.checkpoints.get(self.series.len()) == Some(&self.t) {
            self.series.push(self.misses as f64 / self.t as f64);
        }
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn finish(self) -> (Vec<u64>, Vec<f64>, u64) {
        (self.checkpoints, self.series, self.misses)
    }
}

/// Outcome of one policy on one trace for one seed.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub policy: String,
    pub seed: u64,
    pub horizon: u64,
    pub checkpoints: Vec<u64>,
    /// Cumulative average miss ratio at each checkpoint.
    pub miss_series: Vec<f64>,
    pub total_misses: u64,
    pub opt_misses: u64,
    pub regret: i64,
    pub counters: Counters,
    /// Seconds spent inside the policy loop.
    pub wall_time: f64,
}

// equality deliberately ignores wall_time, which is the only field that is not
// a function of the inputs
impl PartialEq for RunResult {
    fn eq(&self, other: &Self) -> bool {
        self.policy == other.policy
            && self.seed == other.seed
            && self.horizon == other.horizon
            && self.checkpoints == other.checkpoints
            && self.miss_series.len() == other.miss_series.len()
            && self
                .miss_series
                .iter()
                .zip(&other.miss_series)
                .all(|(a, b)| a.to_bits() == b.to_bits())
            && self.total_misses == other.total_misses
            && self.opt_misses == other.opt_misses
            && self.regret == other.regret
            && self.counters == other.counters
    }
}

impl RunResult {
    pub fn final_miss_ratio(&self) -> f64 {
        self.total_misses as f64 / self.horizon as f64
    }

    pub fn opt_miss_ratio(&self) -> f64 {
        self.opt_misses as f64 / self.horizon as f64
    }
}

/// Policy misses minus the misses of the best static cache.
pub fn empirical_regret(run: &RunResult) -> i64 {
    run.total_misses as i64 - run.opt_misses as i64
}

/// Per-checkpoint mean and 95% confidence half-width over repeated runs.
#[derive(Debug, Clone)]
pub struct AggregateResult {
    pub policy: String,
    pub checkpoints: Vec<u64>,
    pub mean_miss_series: Vec<f64>,
    pub ci95_halfwidth_series: Vec<f64>,
    pub runs: Vec<RunResult>,
}

fn mean_and_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    // deviations are taken from the first sample so identical runs give
    // exactly zero spread
    let shift = xs.clone().next().unwrap_or(0.0);
    let d_mean = xs.clone().map(|x| x - shift).sum::<f64>() / n as f64;
    let var = xs
        .map(|x| (x - shift - d_mean) * (x - shift - d_mean))
        .sum::<f64>()
        / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Combines runs of one policy. A single run yields zero-width intervals.
pub fn aggregate(results: Vec<RunResult>) -> Result<AggregateResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::domain("cannot aggregate zero runs"))?;
    if results.iter().any(|r| r.checkpoints != first.checkpoints || r.miss_series.len() != first.miss_series.len()) {
        return Err(Error::MismatchedGrid);
    }
    if results.len() < 30 {
        log::warn!(
            "{}: {} runs is below the 30 assumed by the normal-approximation interval",
            first.policy,
            results.len()
        );
    }
    let m = results.len() as f64;
    let width = first.miss_series.len();
    let mut mean = Vec::with_capacity(width);
    let mut half = Vec::with_capacity(width);
    for i in 0..width {
        let (mu, sd) = mean_and_sd(results.iter().map(|r| r.miss_series[i]));
        mean.push(mu);
        half.push(Z95 * sd / m.sqrt());
    }
    Ok(AggregateResult {
        policy: first.policy.clone(),
        checkpoints: first.checkpoints.clone(),
        mean_miss_series: mean,
        ci95_halfwidth_series: half,
        runs: results,
    })
}

impl AggregateResult {
    /// Number of runs, `M`.
    pub fn m(&self) -> usize {
        self.runs.len()
    }

    fn finals(&self) -> impl Iterator<Item = f64> + Clone + '_ {
        self.runs.iter().map(RunResult::final_miss_ratio)
    }

    pub fn final_mean(&self) -> f64 {
        mean_and_sd(self.finals()).0
    }

    /// Sample variance of the final miss ratio across runs.
    pub fn final_variance(&self) -> f64 {
        let sd = mean_and_sd(self.finals()).1;
        sd * sd
    }

    pub fn final_ci95(&self) -> f64 {
        Z95 * mean_and_sd(self.finals()).1 / (self.m() as f64).sqrt()
    }

    pub fn mean_regret(&self) -> f64 {
        self.runs.iter().map(|r| r.regret as f64).sum::<f64>() / self.m() as f64
    }

    pub fn mean_opt_miss_ratio(&self) -> f64 {
        self.runs.iter().map(RunResult::opt_miss_ratio).sum::<f64>() / self.m() as f64
    }

    pub fn mean_heap_ops(&self) -> f64 {
        self.runs.iter().map(|r| r.counters.heap_ops as f64).sum::<f64>() / self.m() as f64
    }

    pub fn mean_refreshes(&self) -> f64 {
        self.runs.iter().map(|r| r.counters.cache_refreshes as f64).sum::<f64>() / self.m() as f64
    }

    pub fn mean_wall_time(&self) -> f64 {
        self.runs.iter().map(|r| r.wall_time).sum::<f64>() / self.m() as f64
    }
}

/// One row of `checkpoint_t,mean_miss_ratio,ci95_halfwidth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub checkpoint_t: u64,
    pub mean_miss_ratio: f64,
    pub ci95_halfwidth: f64,
}

pub const SERIES_HEADER: [&str; 3] = ["checkpoint_t", "mean_miss_ratio", "ci95_halfwidth"];

pub fn series_points(agg: &AggregateResult) -> Vec<SeriesPoint> {
    agg.checkpoints
        .iter()
        .zip(&agg.mean_miss_series)
        .zip(&agg.ci95_halfwidth_series)
        .map(|((&t, &m), &h)| SeriesPoint {
            checkpoint_t: t,
            mean_miss_ratio: m,
            ci95_halfwidth: h,
        })
        .collect()
}

pub fn write_series_csv(points: &[SeriesPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SERIES_HEADER)?;
    for p in points {
        w.write_record([
            p.checkpoint_t.to_string(),
            p.mean_miss_ratio.to_string(),
            p.ci95_halfwidth.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: impl AsRef<Path>) -> Result<Vec<SeriesPoint>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<&str> {
            rec.get(i).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("missing column {}", SERIES_HEADER[i]),
            })
        };
        let bad = |e: &dyn std::fmt::Display| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        };
        out.push(SeriesPoint {
            checkpoint_t: field(0)?.parse().map_err(|e| bad(&e))?,
            mean_miss_ratio: field(1)?.parse().map_err(|e| bad(&e))?,
            ci95_halfwidth: field(2)?.parse().map_err(|e| bad(&e))?,
        });
    }
    Ok(out)
}

/// Summary line for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub policy: String,
    pub mean_miss_ratio: f64,
    pub variance: f64,
    pub ci95: f64,
    pub mean_total_misses: f64,
    pub mean_regret: f64,
    pub bound: Option<f64>,
    /// Noise scale, for the perturbed policies.
    pub eta: Option<f64>,
    pub mean_heap_ops: f64,
    pub mean_refreshes: f64,
    pub wall_time: f64,
}

impl SummaryRow {
    pub fn from_aggregate(agg: &AggregateResult, bound: Option<f64>) -> Self {
        SummaryRow {
            policy: agg.policy.clone(),
            mean_miss_ratio: agg.final_mean(),
            variance: agg.final_variance(),
            ci95: agg.final_ci95(),
            mean_total_misses: agg.runs.iter().map(|r| r.total_misses as f64).sum::<f64>()
                / agg.m() as f64,
            mean_regret: agg.mean_regret(),
            bound,
            eta: None,
            mean_heap_ops: agg.mean_heap_ops(),
            mean_refreshes: agg.mean_refreshes(),
            wall_time: agg.mean_wall_time(),
        }
    }
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "policy",
    "mean_miss_ratio",
    "variance",
    "ci95_halfwidth",
    "mean_regret",
    "regret_bound",
    "regret_over_bound",
    "heap_ops",
    "cache_refreshes",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Deterministic summary table; execution times are written separately by
/// [`write_timing`].
pub fn write_summary_table(rows: &[SummaryRow], path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.mean_miss_ratio.to_string(),
            r.variance.to_string(),
            r.ci95.to_string(),
            r.mean_regret.to_string(),
            fmt_opt(r.bound),
            fmt_opt(r.bound.map(|b| r.mean_regret / b)),
            r.mean_heap_ops.to_string(),
            r.mean_refreshes.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing(rows: &[SummaryRow], path: impl AsRef<Path>, delimiter: u8) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(delimiter).from_path(path)?;
    w.write_record(["policy", "mean_wall_time_sec"])?;
    for r in rows {
        w.write_record([r.policy.clone(), r.wall_time.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Key-value summary: one `[policy]` section per row plus the static optimum.
pub fn write_summary_text(
    rows: &[SummaryRow],
    opt_miss_ratio: f64,
    runs: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "runs = {runs}")?;
    writeln!(w, "opt_miss_ratio = {opt_miss_ratio}")?;
    for r in rows {
        writeln!(w)?;
        writeln!(w, "[{}]", r.policy)?;
        writeln!(w, "mean_miss_ratio = {}", r.mean_miss_ratio)?;
        writeln!(w, "variance = {}", r.variance)?;
        writeln!(w, "ci95_halfwidth = {}", r.ci95)?;
        writeln!(w, "mean_total_misses = {}", r.mean_total_misses)?;
        writeln!(w, "mean_regret = {}", r.mean_regret)?;
        writeln!(w, "regret_bound = {}", fmt_opt(r.bound))?;
        if let Some(eta) = r.eta {
            writeln!(w, "eta = {eta}")?;
        }
        writeln!(w, "heap_ops = {}", r.mean_heap_ops)?;
        writeln!(w, "cache_refreshes = {}", r.mean_refreshes)?;
    }
    w.flush()?;
    Ok(())
}
