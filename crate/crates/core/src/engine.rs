//! Experiment driver: trace x observation mask x policies x seeds.
//!
//! Every run is a pure function of `(trace, policy spec, seed)`. The
//! observation draws come from the stream `(seed, STREAM_BPO)`, so by default
//! all policies of one seed see the same mask. Results are aggregated in seed
//! order, which makes the output independent of the worker count.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{aggregate, checkpoint_grid, AggregateResult, MissRecorder, RunResult, DEFAULT_CHECKPOINTS};
use crate::model::{Catalog, PolicyConfig, Trace};
use crate::oracle::opt_static;
use crate::policies::PolicyKind;
use crate::rng::{spawn_stream, STREAM_BPO, STREAM_TRACE};
use crate::traces::TraceKind;

/// A policy to simulate, with its own configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub label: String,
    pub kind: PolicyKind,
    pub config: PolicyConfig,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, config: PolicyConfig) -> Self {
        PolicySpec {
            label: kind.name().to_string(),
            kind,
            config,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Where the requests of an experiment come from.
#[derive(Debug, Clone)]
pub enum TraceSpec {
    Fixed(Arc<Trace>),
    Synthetic {
        kind: TraceKind,
        n_files: usize,
        horizon: usize,
        alpha: f64,
        /// Draw a fresh trace for every seed instead of one per experiment.
        regen_per_run: bool,
    },
}

impl TraceSpec {
    pub fn horizon(&self) -> usize {
        match self {
            TraceSpec::Fixed(t) => t.len(),
            TraceSpec::Synthetic { horizon, .. } => *horizon,
        }
    }

    pub fn catalog(&self) -> Result<Catalog> {
        match self {
            TraceSpec::Fixed(t) => Ok(t.catalog()),
            TraceSpec::Synthetic { n_files, .. } => Catalog::new(*n_files),
        }
    }

    fn generate(&self, seed: u64) -> Result<Arc<Trace>> {
        match self {
            TraceSpec::Fixed(t) => Ok(Arc::clone(t)),
            TraceSpec::Synthetic {
                kind,
                n_files,
                horizon,
                alpha,
                ..
            } => {
                let mut rng = spawn_stream(seed, STREAM_TRACE);
                Ok(Arc::new(kind.generate(Catalog::new(*n_files)?, *horizon, *alpha, &mut rng)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    /// Number of seeds, `M`.
    pub runs: usize,
    pub base_seed: u64,
    pub parallelism: usize,
    /// Share one observation mask between all policies of a seed.
    pub paired: bool,
    pub checkpoints: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            runs: 50,
            base_seed: 0,
            parallelism: 1,
            paired: true,
            checkpoints: DEFAULT_CHECKPOINTS,
        }
    }
}

/// Per-run inputs that do not depend on the policy.
#[derive(Debug, Clone)]
pub struct RunContext<'a> {
    pub checkpoints: &'a [u64],
    pub opt_misses: u64,
    pub mask_stream: u64,
}

/// Runs one policy over `trace` with a paired observation mask and the
/// default checkpoint grid.
pub fn run_one(trace: &Trace, spec: &PolicySpec, seed: u64) -> Result<RunResult> {
    let checkpoints = checkpoint_grid(trace.len() as u64, DEFAULT_CHECKPOINTS);
    let (_, opt_misses) = opt_static(trace, spec.config.cache_capacity)?;
    run_with(
        trace,
        spec,
        seed,
        &RunContext {
            checkpoints: &checkpoints,
            opt_misses,
            mask_stream: STREAM_BPO,
        },
    )
}

pub fn run_with(trace: &Trace, spec: &PolicySpec, seed: u64, ctx: &RunContext<'_>) -> Result<RunResult> {
    let config = PolicyConfig {
        seed,
        ..spec.config.clone()
    };
    let mut policy = spec.kind.instantiate(&config, trace.catalog())?;
    let mut mask = spawn_stream(seed, ctx.mask_stream);
    let p = config.observe_prob;
    let mut recorder = MissRecorder::new(ctx.checkpoints.to_vec());

    let start = Instant::now();
    for (i, &request) in trace.requests().iter().enumerate() {
        let observed = mask.bernoulli(p);
        let step = policy.step(i as u64 + 1, request, observed)?;
        recorder.record(step.hit);
    }
    let wall_time = start.elapsed().as_secs_f64();

    let (checkpoints, miss_series, total_misses) = recorder.finish();
    Ok(RunResult {
        policy: spec.label.clone(),
        seed,
        horizon: trace.len() as u64,
        checkpoints,
        miss_series,
        total_misses,
        opt_misses: ctx.opt_misses,
        regret: total_misses as i64 - ctx.opt_misses as i64,
        counters: policy.counters(),
        wall_time,
    })
}

fn mask_stream_for(paired: bool, policy_index: usize) -> u64 {
    if paired {
        STREAM_BPO
    } else {
        STREAM_BPO ^ ((policy_index as u64 + 1) << 32)
    }
}

fn run_seed(
    trace_spec: &TraceSpec,
    shared: Option<&Arc<Trace>>,
    policies: &[PolicySpec],
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<Vec<RunResult>> {
    let trace = match shared {
        Some(t) => Arc::clone(t),
        None => trace_spec.generate(seed)?,
    };
    let checkpoints = checkpoint_grid(trace.len() as u64, opts.checkpoints);
    let mut opt_by_capacity: HashMap<usize, u64> = HashMap::new();
    policies
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let c = spec.config.cache_capacity;
            let opt_misses = match opt_by_capacity.get(&c) {
                Some(&m) => m,
                None => {
                    let m = opt_static(&trace, c)?.1;
                    opt_by_capacity.insert(c, m);
                    m
                }
            };
            let ctx = RunContext {
                checkpoints: &checkpoints,
                opt_misses,
                mask_stream: mask_stream_for(opts.paired, i),
            };
            run_with(&trace, spec, seed, &ctx)
        })
        .collect()
}

/// Runs every policy for seeds `base_seed .. base_seed + runs` and aggregates
/// per policy, in the order of `policies`.
pub fn run_experiment(
    trace_spec: &TraceSpec,
    policies: &[PolicySpec],
    opts: &ExperimentOptions,
) -> Result<Vec<AggregateResult>> {
    if opts.runs == 0 {
        return Err(Error::config("at least one run is required"));
    }
    if policies.is_empty() {
        return Err(Error::config("no policies to run"));
    }
    let catalog = trace_spec.catalog()?;
    for spec in policies {
        spec.config.validate(&catalog)?;
    }

    let shared = match trace_spec {
        TraceSpec::Synthetic {
            regen_per_run: true,
            ..
        } => None,
        other => Some(other.generate(opts.base_seed)?),
    };
    let seeds: Vec<u64> = (0..opts.runs as u64)
        .map(|i| opts.base_seed.wrapping_add(i))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let per_seed: Vec<Result<Vec<RunResult>>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_seed(trace_spec, shared.as_ref(), policies, seed, opts))
            .collect()
    });

    let mut by_policy: Vec<Vec<RunResult>> = vec![Vec::with_capacity(opts.runs); policies.len()];
    for (seed, outcome) in seeds.iter().zip(per_seed) {
        let runs = outcome.map_err(|e| Error::Run {
            seed: *seed,
            source: Box::new(e),
        })?;
        for (slot, run) in by_policy.iter_mut().zip(runs) {
            slot.push(run);
        }
    }
    by_policy.into_iter().map(aggregate).collect()
}
