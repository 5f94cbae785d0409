//! LRU driven by observed requests only.

use std::cmp::Reverse;
use std::collections::BTreeSet;

use super::{check_capacity, check_request, CachePolicy, PolicyStep};
use crate::error::Result;
use crate::model::{CacheState, Catalog, FileId};

#[derive(Debug, Clone)]
pub struct Lru {
    last_use: Vec<u64>,
    in_cache: Vec<bool>,
    /// Members keyed by last observed use; the first entry is the victim.
    order: BTreeSet<(u64, Reverse<FileId>)>,
    clock: u64,
}

impl Lru {
    /// Starts with files `0..capacity` cached, none of them used yet.
    pub fn new(capacity: usize, catalog: Catalog) -> Result<Self> {
        check_capacity(capacity, catalog)?;
        let n = catalog.n_files();
        let mut in_cache = vec![false; n];
        let mut order = BTreeSet::new();
        for f in 0..capacity as FileId {
            in_cache[f as usize] = true;
            order.insert((0, Reverse(f)));
        }
        Ok(Lru {
            last_use: vec![0; n],
            in_cache,
            order,
            clock: 0,
        })
    }
}

impl CachePolicy for Lru {
    fn step(&mut self, _t: u64, request: FileId, observed: bool) -> Result<PolicyStep> {
        check_request(request, self.in_cache.len())?;
        let idx = request as usize;
        let hit = self.in_cache[idx];
        if observed {
            self.clock += 1;
            if hit {
                self.order.remove(&(self.last_use[idx], Reverse(request)));
            } else {
                let (_, Reverse(victim)) = self.order.pop_first().expect("cache is never empty");
                self.in_cache[victim as usize] = false;
                self.in_cache[idx] = true;
            }
            self.last_use[idx] = self.clock;
            self.order.insert((self.clock, Reverse(request)));
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
