//! Noisy follow-the-perturbed-leader.
//!
//! The policy keeps approximate counts `n_hat` of requests that were both
//! observed and sampled, perturbs them with uniform noise on `[0, eta)` and
//! caches the `C` files with the largest perturbed counts. The cache may only
//! change at batch boundaries (`t % B == 0`) and only if at least one request
//! of the batch was counted.
//!
//! Static and lazy noise keep the perturbed counts in a [`TopCTracker`]: every
//! refresh touches only the files counted since the previous refresh. Dynamic
//! noise redraws every component and reselects from scratch.

use rand::seq::index;

use super::{check_request, CachePolicy, Counters, PolicyStep};
use crate::error::{Error, Result};
use crate::model::{CacheState, Catalog, FileId, NoiseMode, PolicyConfig, Sampling};
use crate::rng::{spawn_stream, RngStream, STREAM_NOISE, STREAM_SAMPLING};
use crate::topk::{top_c_select, TopCTracker};

#[derive(Debug, Clone)]
pub struct Nfpl {
    capacity: usize,
    batch: u64,
    sampling: Sampling,
    eta: f64,
    mode: NoiseMode,
    full_observation: bool,

    counts: Vec<u64>,
    gamma0: Vec<f64>,
    gamma: Vec<f64>,
    /// Lazy mode: `ceil((n_hat - gamma0) / eta)` as of the last refresh.
    level: Vec<i64>,
    tracker: Option<TopCTracker>,
    in_cache: Vec<bool>,
    /// Dynamic mode only; static and lazy read members from the tracker.
    members: Vec<FileId>,
    dirty: Vec<FileId>,
    is_dirty: Vec<bool>,
    scratch: Vec<f64>,

    flag: bool,
    next_t: u64,
    noise_rng: RngStream,
    sampling_rng: RngStream,
    batch_keep: Vec<bool>,
    injected_betas: Option<Vec<bool>>,
    counters: Counters,
}

impl Nfpl {
    /// Draws the initial noise from the config's seed and caches the top-C of
    /// it.
    pub fn new(config: &PolicyConfig, catalog: Catalog) -> Result<Self> {
        config.validate(&catalog)?;
        let mut noise_rng = spawn_stream(config.seed, STREAM_NOISE);
        let gamma0 = (0..catalog.n_files())
            .map(|_| noise_rng.uniform(config.eta))
            .collect();
        Self::assemble(config, catalog, gamma0, noise_rng)
    }

    /// Like [`Nfpl::new`] but with a caller-chosen initial noise vector.
    pub fn with_noise(config: &PolicyConfig, catalog: Catalog, gamma0: Vec<f64>) -> Result<Self> {
        config.validate(&catalog)?;
        if gamma0.len() != catalog.n_files() {
            return Err(Error::config(format!(
                "noise vector has {} entries for {} files",
                gamma0.len(),
                catalog.n_files()
            )));
        }
        if let Some(g) = gamma0.iter().find(|&&g| !(0.0..config.eta).contains(&g)) {
            return Err(Error::config(format!("noise {g} is outside [0, {})", config.eta)));
        }
        let noise_rng = spawn_stream(config.seed, STREAM_NOISE);
        Self::assemble(config, catalog, gamma0, noise_rng)
    }

    /// FPL with exact counts: every request is counted regardless of the
    /// observation mask and the sampling rule.
    pub fn full_observation(config: &PolicyConfig, catalog: Catalog) -> Result<Self> {
        let config = PolicyConfig {
            noise_mode: NoiseMode::Static,
            ..config.clone()
        };
        let mut policy = Self::new(&config, catalog)?;
        policy.full_observation = true;
        Ok(policy)
    }

    /// Replaces the sampling draws with a fixed sequence; `betas[t - 1]` is
    /// used at step `t` and missing entries count as not sampled.
    pub fn with_beta_sequence(mut self, betas: Vec<bool>) -> Self {
        self.injected_betas = Some(betas);
        self
    }

    fn assemble(
        config: &PolicyConfig,
        catalog: Catalog,
        gamma0: Vec<f64>,
        noise_rng: RngStream,
    ) -> Result<Self> {
        let n = catalog.n_files();
        let mode = config.noise_mode;
        let mut in_cache = vec![false; n];
        let (tracker, members) = match mode {
            NoiseMode::Static | NoiseMode::Lazy => {
                let tracker = TopCTracker::build(gamma0.clone(), config.cache_capacity)?;
                for &f in tracker.members() {
                    in_cache[f as usize] = true;
                }
                (Some(tracker), Vec::new())
            }
            NoiseMode::Dynamic => {
                let members = top_c_select(&gamma0, config.cache_capacity);
                for &f in &members {
                    in_cache[f as usize] = true;
                }
                (None, members)
            }
        };
        Ok(Nfpl {
            capacity: config.cache_capacity,
            batch: config.batch_size as u64,
            sampling: config.sampling,
            eta: config.eta,
            mode,
            full_observation: false,
            counts: vec![0; n],
            gamma: gamma0.clone(),
            gamma0,
            level: vec![0; if mode == NoiseMode::Lazy { n } else { 0 }],
            tracker,
            in_cache,
            members,
            dirty: Vec::new(),
            is_dirty: vec![false; n],
            scratch: Vec::new(),
            flag: false,
            next_t: 1,
            noise_rng,
            sampling_rng: spawn_stream(config.seed, STREAM_SAMPLING),
            batch_keep: Vec::new(),
            injected_betas: None,
            counters: Counters::default(),
        })
    }

    pub fn noise_mode(&self) -> NoiseMode {
        self.mode
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Approximate counts `n_hat`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn initial_noise(&self) -> &[f64] {
        &self.gamma0
    }

    /// Noise used at the most recent refresh.
    pub fn noise(&self) -> &[f64] {
        &self.gamma
    }

    /// Perturbed count `n_hat + gamma` of `file` as of the most recent refresh.
    pub fn perturbed(&self, file: FileId) -> f64 {
        match &self.tracker {
            Some(t) => t.score(file),
            None => self.counts[file as usize] as f64 + self.gamma[file as usize],
        }
    }

    /// Whether a counted request is waiting for the next batch boundary.
    pub fn pending_update(&self) -> bool {
        self.flag
    }

    fn draw_beta(&mut self, t: u64) -> bool {
        if self.full_observation {
            return true;
        }
        if let Some(betas) = &self.injected_betas {
            return betas.get((t - 1) as usize).copied().unwrap_or(false);
        }
        match self.sampling {
            Sampling::Bernoulli(q) => self.sampling_rng.bernoulli(q),
            Sampling::FixedPerBatch(b) => {
                let pos = ((t - 1) % self.batch) as usize;
                if pos == 0 {
                    let batch = self.batch as usize;
                    self.batch_keep.clear();
                    self.batch_keep.resize(batch, false);
                    for i in index::sample(&mut self.sampling_rng, batch, b) {
                        self.batch_keep[i] = true;
                    }
                }
                self.batch_keep[pos]
            }
        }
    }

    /// Brings the noise up to date with the counts and re-runs the decision
    /// rule.
    fn refresh(&mut self) -> Result<()> {
        self.counters.cache_refreshes += 1;
        match self.mode {
            NoiseMode::Static => {
                for i in 0..self.dirty.len() {
                    let f = self.dirty[i];
                    let score = self.counts[f as usize] as f64 + self.gamma0[f as usize];
                    self.counters.score_changes += 1;
                    self.apply_bump(f, score)?;
                }
            }
            NoiseMode::Lazy => {
                for i in 0..self.dirty.len() {
                    let f = self.dirty[i];
                    let idx = f as usize;
                    let n = self.counts[idx] as f64;
                    let g0 = self.gamma0[idx];
                    let level = ((n - g0) / self.eta).ceil() as i64;
                    let perturbed = g0 + self.eta * level as f64;
                    self.gamma[idx] = (perturbed - n).max(0.0);
                    if level != self.level[idx] {
                        self.level[idx] = level;
                        self.counters.score_changes += 1;
                        self.apply_bump(f, perturbed)?;
                    }
                }
            }
            NoiseMode::Dynamic => {
                for g in self.gamma.iter_mut() {
                    *g = self.noise_rng.uniform(self.eta);
                }
                self.scratch.clear();
                self.scratch
                    .extend(self.counts.iter().zip(&self.gamma).map(|(&n, &g)| n as f64 + g));
                self.counters.score_changes += self.scratch.len() as u64;
                for &f in &self.members {
                    self.in_cache[f as usize] = false;
                }
                self.members = top_c_select(&self.scratch, self.capacity);
                for &f in &self.members {
                    self.in_cache[f as usize] = true;
                }
            }
        }
        for &f in &self.dirty {
            self.is_dirty[f as usize] = false;
        }
        self.dirty.clear();
        Ok(())
    }

    fn apply_bump(&mut self, file: FileId, score: f64) -> Result<()> {
        let tracker = self.tracker.as_mut().expect("tracker exists for static and lazy noise");
        let before = tracker.op_count();
        let outcome = tracker.bump(file, score)?;
        self.counters.heap_ops += tracker.op_count() - before;
        if let (Some(out), Some(inn)) = (outcome.evicted, outcome.admitted) {
            self.in_cache[out as usize] = false;
            self.in_cache[inn as usize] = true;
        }
        Ok(())
    }
}

impl CachePolicy for Nfpl {
    fn step(&mut self, t: u64, request: FileId, observed: bool) -> Result<PolicyStep> {
        if t != self.next_t {
            return Err(Error::OutOfOrder {
                expected: self.next_t,
                got: t,
            });
        }
        check_request(request, self.counts.len())?;
        self.next_t += 1;

        let hit = self.in_cache[request as usize];
        let observed = observed || self.full_observation;
        let beta = self.draw_beta(t);
        if observed && beta {
            let idx = request as usize;
            self.counts[idx] += 1;
            self.flag = true;
            self.counters.sampled_steps += 1;
            if self.mode != NoiseMode::Dynamic && !self.is_dirty[idx] {
                self.is_dirty[idx] = true;
                self.dirty.push(request);
            }
        }
        if t.is_multiple_of(self.batch) && self.flag {
            self.refresh()?;
            self.flag = false;
        }
        Ok(PolicyStep {
            request,
            observed,
            hit,
        })
    }

    fn contains(&self, file: FileId) -> bool {
        self.in_cache.get(file as usize).copied().unwrap_or(false)
    }

    fn cache(&self) -> CacheState {
        match &self.tracker {
            Some(t) => CacheState::from_files(t.members().iter().copied()),
            None => CacheState::from_files(self.members.iter().copied()),
        }
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}
