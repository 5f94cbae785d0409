//! Incremental top-C maintenance over per-file scores that only increase.
//!
//! Members live in a binary min-heap ordered by (score ascending, id
//! descending), so the root is always the weakest member: the one that would
//! be displaced first. Raising a member's score moves it towards the leaves;
//! a non-member only has to beat the root to get in.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::FileId;

const NOT_MEMBER: u32 = u32::MAX;

/// Membership change caused by a single [`TopCTracker::bump`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BumpOutcome {
    pub evicted: Option<FileId>,
    pub admitted: Option<FileId>,
}

impl BumpOutcome {
    pub fn changed(&self) -> bool {
        self.admitted.is_some()
    }
}

/// `Ordering::Greater` when file `a` ranks above file `b`: higher score, or
/// equal score and lower id.
pub fn rank_cmp(scores: &[f64], a: FileId, b: FileId) -> Ordering {
    scores[a as usize]
        .total_cmp(&scores[b as usize])
        .then_with(|| b.cmp(&a))
}

#[derive(Debug, Clone)]
pub struct TopCTracker {
    scores: Vec<f64>,
    heap: Vec<FileId>,
    pos: Vec<u32>,
    ops: u64,
}

impl TopCTracker {
    /// Builds the tracker over `scores`, selecting the `capacity` best files.
    pub fn build(scores: Vec<f64>, capacity: usize) -> Result<Self> {
        let n = scores.len();
        if capacity == 0 || capacity > n {
            return Err(Error::domain(format!(
                "cannot track the top {capacity} of {n} files"
            )));
        }
        let members = top_c_select(&scores, capacity);
        let mut pos = vec![NOT_MEMBER; n];
        for (i, &f) in members.iter().enumerate() {
            pos[f as usize] = i as u32;
        }
        let mut tracker = TopCTracker {
            scores,
            heap: members,
            pos,
            ops: 0,
        };
        for i in (0..capacity / 2).rev() {
            tracker.sift_down(i);
        }
        tracker.ops = 0;
        Ok(tracker)
    }

    pub fn capacity(&self) -> usize {
        self.heap.len()
    }

    pub fn n_files(&self) -> usize {
        self.scores.len()
    }

    pub fn score(&self, file: FileId) -> f64 {
        self.scores[file as usize]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn is_member(&self, file: FileId) -> bool {
        self.pos[file as usize] != NOT_MEMBER
    }

    /// Weakest current member.
    pub fn min_member(&self) -> FileId {
        self.heap[0]
    }

    /// Members in heap order.
    pub fn members(&self) -> &[FileId] {
        &self.heap
    }

    /// Heap inserts, deletes and sift swaps performed since `build`.
    pub fn op_count(&self) -> u64 {
        self.ops
    }

    /// Raises the score of `file` to `new_score` and restores the top-C set.
    pub fn bump(&mut self, file: FileId, new_score: f64) -> Result<BumpOutcome> {
        let idx = file as usize;
        if idx >= self.scores.len() {
            return Err(Error::UnknownFile {
                file,
                n_files: self.scores.len(),
            });
        }
        let old = self.scores[idx];
        if new_score < old {
            return Err(Error::ScoreDecrease {
                file,
                old,
                new: new_score,
            });
        }
        if new_score == old {
            return Ok(BumpOutcome::default());
        }
        self.scores[idx] = new_score;

        let at = self.pos[idx];
        if at != NOT_MEMBER {
            self.ops += 1;
            self.sift_down(at as usize);
            return Ok(BumpOutcome::default());
        }

        let weakest = self.heap[0];
        if rank_cmp(&self.scores, file, weakest) != Ordering::Greater {
            return Ok(BumpOutcome::default());
        }
        // delete-min and insert, fused into a root replacement
        self.ops += 2;
        self.pos[weakest as usize] = NOT_MEMBER;
        self.heap[0] = file;
        self.pos[idx] = 0;
        self.sift_down(0);
        Ok(BumpOutcome {
            evicted: Some(weakest),
            admitted: Some(file),
        })
    }

    fn weaker(&self, a: FileId, b: FileId) -> bool {
        rank_cmp(&self.scores, a, b) == Ordering::Less
    }

    fn sift_down(&mut self, mut i: usize) {
        let len = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= len {
                break;
            }
            let r = l + 1;
            let child = if r < len && self.weaker(self.heap[r], self.heap[l]) {
                r
            } else {
                l
            };
            if !self.weaker(self.heap[child], self.heap[i]) {
                break;
            }
            self.heap.swap(i, child);
            self.pos[self.heap[i] as usize] = i as u32;
            self.pos[self.heap[child] as usize] = child as u32;
            self.ops += 1;
            i = child;
        }
    }

    #[cfg(test)]
    fn heap_ordered(&self) -> bool {
        (1..self.heap.len()).all(|i| !self.weaker(self.heap[i], self.heap[(i - 1) / 2]))
    }
}

/// The `c` best files under (score descending, id ascending), in linear
/// expected time. The returned order is unspecified.
pub fn top_c_select(scores: &[f64], c: usize) -> Vec<FileId> {
    let mut ids: Vec<FileId> = (0..scores.len() as FileId).collect();
    if c < ids.len() {
        ids.select_nth_unstable_by(c, |&a, &b| rank_cmp(scores, b, a));
        ids.truncate(c);
    }
    ids
}
