//! Perfect LFU, in a classic and an admission-threshold flavour.
//!
//! Counts are kept for every file, but only observed requests are counted. On
//! an observed miss the classic policy always replaces the least-frequently-used
//! member with the requested file. The admission flavour does so only if the
//! requested file's count is strictly larger. Among members with equal counts
//! the higher id is evicted first.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use super::{check_capacity, check_request, CachePolicy, PolicyStep};
use crate::error::Result;
use crate::model::{CacheState, Catalog, FileId};

#[derive(Debug, Clone)]
pub struct Lfu {
    counts: Vec<u64>,
    in_cache: Vec<bool>,
    /// Members keyed so the first entry is the next victim.
    order: BTreeSet<(u64, Reverse<FileId>)>,
    always_admit: bool,
}

impl Lfu {
    /// Starts with files `0..capacity` cached.
    pub fn new(capacity: usize, catalog: Catalog) -> Result<Self> {
        check_capacity(capacity, catalog)?;
        let n = catalog.n_files();
        let mut in_cache = vec![false; n];
        let mut order = BTreeSet::new();
        for f in 0..capacity as FileId {
            in_cache[f as usize] = true;
            order.insert((0, Reverse(f)));
        }
        Ok(Lfu {
            counts: vec![0; n],
            in_cache,
            order,
            always_admit: false,
        })
    }

    /// Classic LFU: every observed miss is admitted, evicting the
    /// least-frequently-used member even when it has a larger count.
    pub fn always_admit(capacity: usize, catalog: Catalog) -> Result<Self> {
        Ok(Lfu {
            always_admit: true,
            ..Lfu::new(capacity, catalog)?
        })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

impl CachePolicy for Lfu {
    fn step(&mut self, _t: u64, request: FileId, observed: bool) -> Result<PolicyStep> {
        check_request(request, self.counts.len())?;
        let idx = request as usize;
        let hit = self.in_cache[idx];
        if observed {
            let old = self.counts[idx];
            self.counts[idx] = old + 1;
            if hit {
                self.order.remove(&(old, Reverse(request)));
                self.order.insert((old + 1, Reverse(request)));
            } else {
                let &(victim_count, Reverse(victim)) =
                    self.order.first().expect("cache is never empty");
                if self.always_admit || old + 1 > victim_count {
                    self.order.pop_first();
                    self.in_cache[victim as usize] = false;
                    self.in_cache[idx] = true;
                    self.order.insert((old + 1, Reverse(request)));
                }
            }
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
        CacheState::from_files(self.order.iter().map(|&(_, Reverse(f))| f))
    }
}
