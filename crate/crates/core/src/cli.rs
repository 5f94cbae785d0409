//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags or values), 3 for
//! runtime failures.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::engine::{run_experiment, ExperimentOptions, PolicySpec, TraceSpec};
use crate::error::Error;
use crate::metrics::{
    series_points, write_series_csv, write_summary_table, write_summary_text, write_timing,
    SummaryRow, DEFAULT_CHECKPOINTS,
};
use crate::model::{default_eta, Catalog, EtaRule, NoiseMode, PolicyConfig, Sampling};
use crate::oracle::{regret_bound_caching, regret_bound_general, BoundParams};
use crate::policies::PolicyKind;
use crate::rng::{spawn_stream, STREAM_TRACE};
use crate::traces::{load_trace, save_id_map, save_trace, TraceFormat, TraceKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const THREADS_ENV: &str = "NFPL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "nfpl", version, about = "No-regret caching under partial observation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace file.
    Gen(GenArgs),
    /// Simulate policies on a trace over several seeds.
    Run(RunArgs),
    /// Sweep the sampling rate of NFPL policies.
    Sweep(SweepArgs),
    /// Evaluate the regret bound of NFPL on the caching problem.
    Bound(BoundArgs),
    /// Evaluate the generic noisy-FPL regret bound.
    BoundGeneral(BoundGeneralArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Zipf,
    ZipfRr,
    RoundRobin,
}

impl From<KindArg> for TraceKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Zipf => TraceKind::Zipf,
            KindArg::ZipfRr => TraceKind::ZipfRr,
            KindArg::RoundRobin => TraceKind::RoundRobin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Tsv,
}

impl OutputFormat {
    fn delimiter(self) -> u8 {
        match self {
            OutputFormat::Csv => b',',
            OutputFormat::Tsv => b'\t',
        }
    }

    fn ext(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Catalog size N.
    #[arg(long = "n")]
    pub n_files: usize,
    /// Number of requests T.
    #[arg(long = "t")]
    pub horizon: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Trace file with one id per line (or CSV with --csv-column).
    #[arg(long, conflicts_with = "gen_kind")]
    pub trace: Option<PathBuf>,
    /// Read ids from this column of a CSV trace.
    #[arg(long, requires = "trace")]
    pub csv_column: Option<String>,
    /// Generate a synthetic trace instead of reading one.
    #[arg(long, value_enum)]
    pub gen_kind: Option<KindArg>,
    #[arg(long = "n")]
    pub n_files: Option<usize>,
    #[arg(long = "t")]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Draw a new synthetic trace for every seed.
    #[arg(long)]
    pub regen_trace_per_run: bool,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Comma-separated list of policies.
    #[arg(long, value_delimiter = ',', default_value = "l-nfpl,s-nfpl,d-nfpl,lfu,lru")]
    pub policies: Vec<String>,
    /// Cache capacity C.
    #[arg(long = "c")]
    pub capacity: usize,
    /// Batch size B.
    #[arg(long = "b", default_value_t = 1)]
    pub batch: usize,
    /// Batch size for d-nfpl only; defaults to --b.
    #[arg(long = "b-dynamic")]
    pub batch_dynamic: Option<usize>,
    /// Observation probability p.
    #[arg(long = "p", default_value_t = 1.0)]
    pub observe: f64,
    /// `auto` = sqrt(BT/2C), `auto-exp` = p sqrt(BT/2C), or a number.
    #[arg(long, default_value = "auto")]
    pub eta: String,
    /// Number of seeds M.
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Give every policy its own observation mask.
    #[arg(long)]
    pub unpaired: bool,
    #[arg(long, default_value_t = DEFAULT_CHECKPOINTS)]
    pub checkpoints: usize,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Sampling probability q.
    #[arg(long = "q", default_value_t = 1.0)]
    pub sample: f64,
    /// Keep exactly this many requests per batch instead of sampling with q.
    #[arg(long = "fixed-b")]
    pub fixed_b: Option<usize>,
    /// Also write a gnuplot script for the miss-ratio curves.
    #[arg(long)]
    pub plot_script: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplingArg {
    /// i.i.d. Bernoulli(q) sampling.
    Var,
    /// Exactly round(rate * B) requests per batch.
    Fix,
}

impl SamplingArg {
    fn suffix(self) -> &'static str {
        match self {
            SamplingArg::Var => "var",
            SamplingArg::Fix => "fix",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Sampling rates to evaluate.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "var")]
    pub sampling: Vec<SamplingArg>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long = "b")]
    pub batch: u64,
    #[arg(long = "c")]
    pub capacity: u64,
    #[arg(long = "t")]
    pub horizon: u64,
    #[arg(long = "p", default_value_t = 1.0)]
    pub observe: f64,
    #[arg(long = "q", default_value_t = 1.0)]
    pub sample: f64,
}

#[derive(Debug, Args)]
pub struct BoundGeneralArgs {
    #[arg(long)]
    pub r_hat: f64,
    #[arg(long)]
    pub a_hat: f64,
    #[arg(long)]
    pub diameter: f64,
    #[arg(long)]
    pub rounds: u64,
    #[arg(long)]
    pub eta: f64,
    #[arg(long = "p", default_value_t = 1.0)]
    pub observe: f64,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Bound(args) => {
            let v = regret_bound_caching(args.batch, args.capacity, args.horizon, args.observe, args.sample)?;
            println!("{v}");
            Ok(())
        }
        Command::BoundGeneral(args) => {
            let v = regret_bound_general(&BoundParams {
                r_hat: args.r_hat,
                a_hat: args.a_hat,
                diameter: args.diameter,
                rounds: args.rounds,
                eta: args.eta,
                p: args.observe,
            })?;
            println!("{v}");
            Ok(())
        }
    }
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    if args.alpha.is_nan() || args.alpha <= 0.0 {
        return Err(usage(format!("--alpha must be positive, got {}", args.alpha)));
    }
    let catalog = Catalog::new(args.n_files)?;
    let mut rng = spawn_stream(args.seed, STREAM_TRACE);
    let trace = TraceKind::from(args.kind).generate(catalog, args.horizon, args.alpha, &mut rng)?;
    match &args.out {
        Some(path) => save_trace(&trace, path).map_err(CliError::Runtime)?,
        None => {
            let stdout = std::io::stdout();
            let mut w = std::io::BufWriter::new(stdout.lock());
            for f in trace.requests() {
                writeln!(w, "{f}")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn build_trace_spec(args: &TraceArgs, out_dir: &Path) -> CliResult<TraceSpec> {
    match (&args.trace, args.gen_kind) {
        (Some(path), None) => {
            let format = match &args.csv_column {
                Some(column) => TraceFormat::Csv {
                    column: column.clone(),
                },
                None => TraceFormat::Lines,
            };
            let loaded = load_trace(path, &format).map_err(CliError::Runtime)?;
            fs::create_dir_all(out_dir)?;
            save_id_map(&loaded.raw_ids, out_dir.join("id_map.csv")).map_err(CliError::Runtime)?;
            Ok(TraceSpec::Fixed(Arc::new(loaded.trace)))
        }
        (None, Some(kind)) => {
            let n_files = args.n_files.ok_or_else(|| usage("--gen-kind needs --n"))?;
            let horizon = args.horizon.ok_or_else(|| usage("--gen-kind needs --t"))?;
            if args.alpha.is_nan() || args.alpha <= 0.0 {
                return Err(usage(format!("--alpha must be positive, got {}", args.alpha)));
            }
            if horizon == 0 {
                return Err(usage("--t must be at least 1"));
            }
            Ok(TraceSpec::Synthetic {
                kind: kind.into(),
                n_files,
                horizon,
                alpha: args.alpha,
                regen_per_run: args.regen_trace_per_run,
            })
        }
        _ => Err(usage("exactly one of --trace or --gen-kind is required")),
    }
}

fn parse_policies(names: &[String]) -> CliResult<Vec<PolicyKind>> {
    if names.is_empty() {
        return Err(usage("no policies given"));
    }
    names
        .iter()
        .map(|n| n.parse::<PolicyKind>().map_err(|e| usage(e.to_string())))
        .collect()
}

fn resolve_eta(spec: &str, config: &PolicyConfig, horizon: u64) -> CliResult<f64> {
    match spec {
        "auto" => Ok(default_eta(config, horizon, EtaRule::Theoretical)?),
        "auto-exp" => Ok(default_eta(config, horizon, EtaRule::Experimental)?),
        value => value
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v > 0.0)
            .ok_or_else(|| usage(format!("--eta must be auto, auto-exp or a positive number, got `{value}`"))),
    }
}

fn resolve_parallelism(flag: usize) -> CliResult<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(flag.max(1)),
    }
}

/// Batch size of `kind`: dynamic noise may use its own.
fn batch_for(kind: PolicyKind, args: &PolicyArgs) -> usize {
    match kind {
        PolicyKind::Nfpl(NoiseMode::Dynamic) => args.batch_dynamic.unwrap_or(args.batch),
        _ => args.batch,
    }
}

fn policy_specs(
    kinds: &[PolicyKind],
    args: &PolicyArgs,
    sampling: Sampling,
    horizon: u64,
) -> CliResult<Vec<PolicySpec>> {
    kinds
        .iter()
        .map(|&kind| {
            let batch = batch_for(kind, args);
            let sampling = match sampling {
                Sampling::FixedPerBatch(b) if b > batch => {
                    return Err(usage(format!("--fixed-b {b} exceeds the batch size {batch} of {kind}")))
                }
                s => s,
            };
            let mut config = PolicyConfig::new(args.capacity)
                .with_batch_size(batch)
                .with_observe_prob(args.observe)
                .with_sampling(sampling);
            config.eta = resolve_eta(&args.eta, &config, horizon)?;
            Ok(PolicySpec::new(kind, config))
        })
        .collect()
}

fn experiment_options(args: &PolicyArgs) -> CliResult<ExperimentOptions> {
    if args.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    Ok(ExperimentOptions {
        runs: args.runs,
        base_seed: args.seed,
        parallelism: resolve_parallelism(args.parallel)?,
        paired: !args.unpaired,
        checkpoints: args.checkpoints,
    })
}

fn check_capacity(args: &PolicyArgs, spec: &TraceSpec) -> CliResult<()> {
    let n = spec.catalog()?.n_files();
    if args.capacity == 0 || args.capacity >= n {
        return Err(usage(format!(
            "--c must lie in 1..{n} for a catalog of {n} files, got {}",
            args.capacity
        )));
    }
    Ok(())
}

fn bound_for(spec: &PolicySpec, horizon: u64) -> Option<f64> {
    match spec.kind {
        PolicyKind::Nfpl(_) | PolicyKind::Fpl => {
            let c = &spec.config;
            let (p, q) = match spec.kind {
                PolicyKind::Fpl => (1.0, 1.0),
                _ => (c.observe_prob, c.sample_rate()),
            };
            regret_bound_caching(c.batch_size as u64, c.cache_capacity as u64, horizon, p, q).ok()
        }
        _ => None,
    }
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let pa = &args.policy;
    let trace_spec = build_trace_spec(&args.trace, &pa.out)?;
    check_capacity(pa, &trace_spec)?;
    let horizon = trace_spec.horizon() as u64;
    let kinds = parse_policies(&pa.policies)?;
    let sampling = match args.fixed_b {
        Some(b) => Sampling::FixedPerBatch(b),
        None => Sampling::Bernoulli(args.sample),
    };
    let specs = policy_specs(&kinds, pa, sampling, horizon)?;
    let opts = experiment_options(pa)?;

    let aggregates = run_experiment(&trace_spec, &specs, &opts)?;

    fs::create_dir_all(&pa.out)?;
    let ext = pa.format.ext();
    let mut rows = Vec::with_capacity(specs.len());
    for (spec, agg) in specs.iter().zip(&aggregates) {
        write_series_csv(&series_points(agg), pa.out.join(format!("{}.csv", spec.label)))
            .map_err(CliError::Runtime)?;
        let mut row = SummaryRow::from_aggregate(agg, bound_for(spec, horizon));
        if matches!(spec.kind, PolicyKind::Nfpl(_) | PolicyKind::Fpl) {
            row.eta = Some(spec.config.eta);
        }
        rows.push(row);
    }
    let opt_ratio = aggregates[0].mean_opt_miss_ratio();
    write_summary_table(&rows, pa.out.join(format!("summary.{ext}")), pa.format.delimiter())
        .map_err(CliError::Runtime)?;
    write_summary_text(&rows, opt_ratio, opts.runs, pa.out.join("summary.txt")).map_err(CliError::Runtime)?;
    write_timing(&rows, pa.out.join(format!("timing.{ext}")), pa.format.delimiter()).map_err(CliError::Runtime)?;
    if args.plot_script {
        write_plot_script(&pa.out, &specs, opt_ratio)?;
    }
    print_table(&rows, opt_ratio);
    Ok(())
}

fn print_table(rows: &[SummaryRow], opt_ratio: f64) {
    println!(
        "{:<10} {:>10} {:>11} {:>10} {:>12} {:>12} {:>10}",
        "policy", "miss_ratio", "variance", "regret", "bound", "heap_ops", "time_s"
    );
    for r in rows {
        println!(
            "{:<10} {:>10.4} {:>11.3e} {:>10.1} {:>12} {:>12.0} {:>10.3}",
            r.policy,
            r.mean_miss_ratio,
            r.variance,
            r.mean_regret,
            r.bound.map_or_else(|| "-".to_string(), |b| format!("{b:.1}")),
            r.mean_heap_ops,
            r.wall_time
        );
    }
    println!("{:<10} {:>10.4}", "opt", opt_ratio);
}

fn write_plot_script(dir: &Path, specs: &[PolicySpec], opt_ratio: f64) -> CliResult<()> {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset logscale x\nset key autotitle columnhead\n");
    s.push_str("set xlabel 'requests'\nset ylabel 'average miss ratio'\n");
    s.push_str("plot \\\n");
    for spec in specs {
        s.push_str(&format!(
            "  '{0}.csv' using 1:2:3 with yerrorlines title '{0}', \\\n",
            spec.label
        ));
    }
    s.push_str(&format!("  {opt_ratio} title 'opt' dashtype 2\n"));
    fs::write(dir.join("plot.gp"), s)?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let pa = &args.policy;
    if args.grid.is_empty() {
        return Err(usage("--grid must contain at least one sampling rate"));
    }
    if let Some(r) = args.grid.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(usage(format!("sampling rate {r} is not in (0, 1]")));
    }
    let trace_spec = build_trace_spec(&args.trace, &pa.out)?;
    check_capacity(pa, &trace_spec)?;
    let horizon = trace_spec.horizon() as u64;
    let kinds = parse_policies(&pa.policies)?;
    let opts = experiment_options(pa)?;

    let mut lines: Vec<(String, Vec<SweepRow>)> = Vec::new();
    let mut opt_line = Vec::new();
    for &rate in &args.grid {
        let mut specs = Vec::new();
        let mut rates = Vec::new();
        for &kind in &kinds {
            if !matches!(kind, PolicyKind::Nfpl(_)) {
                specs.extend(policy_specs(&[kind], pa, Sampling::Bernoulli(1.0), horizon)?);
                rates.push(rate);
                continue;
            }
            for &mode in &args.sampling {
                let (sampling, effective) = sweep_sampling(mode, rate, batch_for(kind, pa))?;
                let spec = policy_specs(&[kind], pa, sampling, horizon)?.remove(0);
                specs.push(spec.with_label(format!("{}-{}", kind.name(), mode.suffix())));
                rates.push(effective);
            }
        }
        let aggregates = run_experiment(&trace_spec, &specs, &opts)?;
        opt_line.push((rate, aggregates[0].mean_opt_miss_ratio(), 0.0));
        for ((spec, agg), eff) in specs.iter().zip(&aggregates).zip(rates) {
            let row = (eff, agg.final_mean(), agg.final_ci95());
            match lines.iter_mut().find(|(l, _)| *l == spec.label) {
                Some((_, rows)) => rows.push(row),
                None => lines.push((spec.label.clone(), vec![row])),
            }
        }
    }

    fs::create_dir_all(&pa.out)?;
    lines.push(("opt".to_string(), opt_line));
    for (label, rows) in &lines {
        write_sweep_csv(&pa.out.join(format!("sweep_{label}.csv")), rows, pa.format.delimiter())?;
        for (rate, mean, ci) in rows {
            println!("{label:<14} rate={rate:<8} miss_ratio={mean:.4} ci95={ci:.4}");
        }
    }
    Ok(())
}

/// (sampling rate, mean miss ratio, ci95) at one grid point.
type SweepRow = (f64, f64, f64);

/// Sampling rule for one grid point, with the rate it actually achieves.
fn sweep_sampling(mode: SamplingArg, rate: f64, batch: usize) -> CliResult<(Sampling, f64)> {
    match mode {
        SamplingArg::Var => Ok((Sampling::Bernoulli(rate), rate)),
        SamplingArg::Fix => {
            let b = (rate * batch as f64).round() as usize;
            if b == 0 {
                return Err(usage(format!(
                    "rate {rate} keeps no request of a batch of {batch}; increase --b"
                )));
            }
            Ok((Sampling::FixedPerBatch(b), b as f64 / batch as f64))
        }
    }
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow], delimiter: u8) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| CliError::Runtime(e.into()))?;
    let io = |e: csv::Error| CliError::Runtime(e.into());
    w.write_record(["sampling_rate", "mean_miss_ratio", "ci95"]).map_err(io)?;
    for (rate, mean, ci) in rows {
        w.write_record([rate.to_string(), mean.to_string(), ci.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
