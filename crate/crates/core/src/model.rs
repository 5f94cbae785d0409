//! Domain types shared by the generators, policies and the simulator.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Dense 0-based file identifier.
pub type FileId = u32;

/// The set of files that can be requested, `0..n_files`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Catalog {
    n_files: usize,
}

impl Catalog {
    pub fn new(n_files: usize) -> Result<Self> {
        if n_files == 0 {
            return Err(Error::domain("catalog must contain at least one file"));
        }
        if n_files > FileId::MAX as usize {
            return Err(Error::domain(format!(
                "catalog of {n_files} files exceeds the id space"
            )));
        }
        Ok(Catalog { n_files })
    }

    pub fn n_files(&self) -> usize {
        self.n_files
    }

    pub fn contains(&self, file: FileId) -> bool {
        (file as usize) < self.n_files
    }
}

/// An ordered request sequence over a catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    catalog: Catalog,
    requests: Vec<FileId>,
}

impl Trace {
    pub fn new(catalog: Catalog, requests: Vec<FileId>) -> Result<Self> {
        if requests.is_empty() {
            return Err(Error::domain("a trace needs at least one request"));
        }
        if let Some(&bad) = requests.iter().find(|&&f| !catalog.contains(f)) {
            return Err(Error::UnknownFile {
                file: bad,
                n_files: catalog.n_files(),
            });
        }
        Ok(Trace { catalog, requests })
    }

    pub fn catalog(&self) -> Catalog {
        self.catalog
    }

    pub fn requests(&self) -> &[FileId] {
        &self.requests
    }

    /// Number of requests, `T`.
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Total request count of every file over the whole horizon.
    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.catalog.n_files()];
        for &f in &self.requests {
            counts[f as usize] += 1;
        }
        counts
    }
}

/// How the perturbation noise evolves across cache refreshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseMode {
    /// Drawn once, reused forever.
    Static,
    /// Redrawn i.i.d. at every refresh.
    Dynamic,
    /// Coupled to the counts so that perturbed counts move in jumps of `eta`.
    Lazy,
}

/// Policy-side subsampling of observed requests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Each request is kept independently with probability `q`.
    Bernoulli(f64),
    /// Exactly `b` positions of every batch are kept, chosen uniformly.
    FixedPerBatch(usize),
}

/// Which formula `default_eta` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EtaRule {
    /// `sqrt(B T / 2C)`.
    #[default]
    Theoretical,
    /// `p sqrt(B T / 2C)`, the setting used for the reported experiments.
    Experimental,
}

/// Tunables of one policy instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub cache_capacity: usize,
    pub batch_size: usize,
    pub observe_prob: f64,
    pub sampling: Sampling,
    pub eta: f64,
    pub noise_mode: NoiseMode,
    pub seed: u64,
}

impl PolicyConfig {
    /// Full observation, no subsampling, `B = 1`, static noise and `eta = 1`.
    pub fn new(cache_capacity: usize) -> Self {
        PolicyConfig {
            cache_capacity,
            batch_size: 1,
            observe_prob: 1.0,
            sampling: Sampling::Bernoulli(1.0),
            eta: 1.0,
            noise_mode: NoiseMode::Static,
            seed: 0,
        }
    }

    pub fn with_batch_size(mut self, b: usize) -> Self {
        self.batch_size = b;
        self
    }

    pub fn with_observe_prob(mut self, p: f64) -> Self {
        self.observe_prob = p;
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_noise_mode(mut self, mode: NoiseMode) -> Self {
        self.noise_mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Sets `eta` from `default_eta` for a run of `horizon` requests.
    pub fn with_default_eta(mut self, horizon: u64, rule: EtaRule) -> Result<Self> {
        self.eta = default_eta(&self, horizon, rule)?;
        Ok(self)
    }

    /// Effective per-request sampling rate: `q`, or `b / B`.
    pub fn sample_rate(&self) -> f64 {
        match self.sampling {
            Sampling::Bernoulli(q) => q,
            Sampling::FixedPerBatch(b) => b as f64 / self.batch_size as f64,
        }
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        if self.cache_capacity == 0 {
            return Err(Error::config("cache capacity must be positive"));
        }
        if self.cache_capacity >= catalog.n_files() {
            return Err(Error::config(format!(
                "cache capacity {} must be smaller than the catalog size {}",
                self.cache_capacity,
                catalog.n_files()
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(self.observe_prob > 0.0 && self.observe_prob <= 1.0) {
            return Err(Error::config(format!(
                "observation probability {} is not in (0, 1]",
                self.observe_prob
            )));
        }
        match self.sampling {
            Sampling::Bernoulli(q) if !(q > 0.0 && q <= 1.0) => {
                return Err(Error::config(format!(
                    "sampling probability {q} is not in (0, 1]"
                )));
            }
            Sampling::FixedPerBatch(b) if b == 0 || b > self.batch_size => {
                return Err(Error::config(format!(
                    "fixed sample count {b} must lie in 1..={}",
                    self.batch_size
                )));
            }
            _ => {}
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::config(format!("eta {} must be positive", self.eta)));
        }
        Ok(())
    }
}

/// Noise magnitude for a run of `horizon` requests.
pub fn default_eta(config: &PolicyConfig, horizon: u64, rule: EtaRule) -> Result<f64> {
    if horizon == 0 || config.batch_size == 0 || config.cache_capacity == 0 {
        return Err(Error::domain("horizon, batch size and capacity must be non-zero"));
    }
    let base = (config.batch_size as f64 * horizon as f64 / (2.0 * config.cache_capacity as f64))
        .sqrt();
    Ok(match rule {
        EtaRule::Theoretical => base,
        EtaRule::Experimental => config.observe_prob * base,
    })
}

/// Snapshot of the files held by a cache.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheState {
    stored: BTreeSet<FileId>,
}

impl CacheState {
    pub fn from_files(files: impl IntoIterator<Item = FileId>) -> Self {
        CacheState {
            stored: files.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stored.is_empty()
    }

    pub fn contains(&self, file: FileId) -> bool {
        self.stored.contains(&file)
    }

    pub fn files(&self) -> impl Iterator<Item = FileId> + '_ {
        self.stored.iter().copied()
    }
}

impl fmt::Display for CacheState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, id) in self.stored.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{id}")?;
        }
        write!(f, "}}")
    }
}

impl FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" | "s" => Ok(NoiseMode::Static),
            "dynamic" | "d" => Ok(NoiseMode::Dynamic),
            "lazy" | "l" => Ok(NoiseMode::Lazy),
            other => Err(Error::domain(format!("unknown noise mode `{other}`"))),
        }
    }
}
