//! Noisy follow-the-perturbed-leader (NFPL) caching under Bernoulli partial
//! observation.
//!
//! The crate provides the three NFPL noise couplings (static, dynamic, lazy),
//! LFU and LRU baselines, synthetic and file-backed request traces, the static
//! optimum and regret bounds, and a seeded parallel simulator that reports
//! miss-ratio curves with 95% confidence intervals.
//!
//! ```
//! use nfpl::{run_one, Catalog, NoiseMode, PolicyConfig, PolicyKind, PolicySpec};
//! use nfpl::traces::gen_round_robin;
//!
//! let trace = gen_round_robin(Catalog::new(20).unwrap(), 1_000).unwrap();
//! let config = PolicyConfig::new(5)
//!     .with_default_eta(trace.len() as u64, nfpl::EtaRule::Theoretical)
//!     .unwrap();
//! let spec = PolicySpec::new(PolicyKind::Nfpl(NoiseMode::Lazy), config);
//! let run = run_one(&trace, &spec, 7).unwrap();
//! assert!(run.final_miss_ratio() <= 1.0);
//! ```

pub mod cli;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod rng;
pub mod topk;
pub mod traces;

pub use engine::{run_experiment, run_one, ExperimentOptions, PolicySpec, TraceSpec};
pub use error::{Error, Result};
pub use metrics::{aggregate, empirical_regret, AggregateResult, RunResult};
pub use model::{
    default_eta, CacheState, Catalog, EtaRule, FileId, NoiseMode, PolicyConfig, Sampling, Trace,
};
pub use policies::{CachePolicy, Counters, Lfu, Lru, Nfpl, PolicyKind, PolicyStep};
pub use rng::{spawn_stream, RngStream};
pub use topk::TopCTracker;
