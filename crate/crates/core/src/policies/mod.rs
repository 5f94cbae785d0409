//! Caching policies driven one request at a time.

mod lfu;
mod lru;
mod nfpl;

use std::fmt;
use std::str::FromStr;

pub use lfu::Lfu;
pub use lru::Lru;
pub use nfpl::Nfpl;

use crate::error::{Error, Result};
use crate::model::{CacheState, Catalog, FileId, NoiseMode, PolicyConfig};

/// Outcome of serving one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyStep {
    pub request: FileId,
    pub observed: bool,
    /// Whether the request was served by the cache as it stood when the
    /// request arrived.
    pub hit: bool,
}

/// Work counters accumulated by a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    /// Heap inserts, deletes and sift swaps.
    pub heap_ops: u64,
    /// Executions of the cache decision rule.
    pub cache_refreshes: u64,
    /// Requests that were both observed and sampled.
    pub sampled_steps: u64,
    /// Perturbed counts that changed at a refresh.
    pub score_changes: u64,
}

pub trait CachePolicy: Send {
    /// Serves request `t` (1-based, strictly sequential).
    fn step(&mut self, t: u64, request: FileId, observed: bool) -> Result<PolicyStep>;

    fn contains(&self, file: FileId) -> bool;

    fn cache(&self) -> CacheState;

    fn counters(&self) -> Counters {
        Counters::default()
    }
}

/// Policy families the simulator can instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Nfpl(NoiseMode),
    /// Static-noise FPL fed with every request, ignoring the observation mask
    /// and the sampling rule.
    Fpl,
    /// LFU that admits every observed miss.
    Lfu,
    /// LFU that admits a missed file only when its count strictly exceeds
    /// the smallest cached count.
    LfuAdmit,
    Lru,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Nfpl(NoiseMode::Lazy),
        PolicyKind::Nfpl(NoiseMode::Static),
        PolicyKind::Nfpl(NoiseMode::Dynamic),
        PolicyKind::Fpl,
        PolicyKind::Lfu,
        PolicyKind::LfuAdmit,
        PolicyKind::Lru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Nfpl(NoiseMode::Lazy) => "l-nfpl",
            PolicyKind::Nfpl(NoiseMode::Static) => "s-nfpl",
            PolicyKind::Nfpl(NoiseMode::Dynamic) => "d-nfpl",
            PolicyKind::Fpl => "fpl",
            PolicyKind::Lfu => "lfu",
            PolicyKind::LfuAdmit => "lfu-admit",
            PolicyKind::Lru => "lru",
        }
    }

    pub fn valid_names() -> String {
        PolicyKind::ALL.map(PolicyKind::name).join(", ")
    }

    pub fn instantiate(self, config: &PolicyConfig, catalog: Catalog) -> Result<Box<dyn CachePolicy>> {
        Ok(match self {
            PolicyKind::Nfpl(mode) => {
                let config = PolicyConfig {
                    noise_mode: mode,
                    ..config.clone()
                };
                Box::new(Nfpl::new(&config, catalog)?)
            }
            PolicyKind::Fpl => Box::new(Nfpl::full_observation(config, catalog)?),
            PolicyKind::Lfu => Box::new(Lfu::always_admit(config.cache_capacity, catalog)?),
            PolicyKind::LfuAdmit => Box::new(Lfu::new(config.cache_capacity, catalog)?),
            PolicyKind::Lru => Box::new(Lru::new(config.cache_capacity, catalog)?),
        })
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown policy `{s}`; valid policies are: {}",
                    PolicyKind::valid_names()
                ))
            })
    }
}

/// Shared capacity check for the classical baselines.
fn check_capacity(capacity: usize, catalog: Catalog) -> Result<()> {
    if capacity == 0 || capacity >= catalog.n_files() {
        return Err(Error::config(format!(
            "cache capacity {capacity} must lie in 1..{}",
            catalog.n_files()
        )));
    }
    Ok(())
}

fn check_request(request: FileId, n_files: usize) -> Result<()> {
    if (request as usize) < n_files {
        Ok(())
    } else {
        Err(Error::UnknownFile {
            file: request,
            n_files,
        })
    }
}
