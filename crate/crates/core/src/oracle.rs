//! Reference quantities: the best static cache in hindsight and the regret
//! bounds.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{CacheState, FileId, Trace};

/// Best fixed cache of `capacity` files for the whole trace, and its misses.
///
/// Ties in request count go to the lower id.
pub fn opt_static(trace: &Trace, capacity: usize) -> Result<(CacheState, u64)> {
    let n = trace.catalog().n_files();
    if capacity == 0 || capacity >= n {
        return Err(Error::domain(format!(
            "capacity {capacity} must lie in 1..{n}"
        )));
    }
    let counts = trace.counts();
    let mut ids: Vec<FileId> = (0..n as FileId).collect();
    ids.sort_unstable_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    ids.truncate(capacity);
    let covered: u64 = ids.iter().map(|&f| counts[f as usize]).sum();
    Ok((CacheState::from_files(ids), trace.len() as u64 - covered))
}

/// Misses of a cache that never changes.
pub fn static_misses(trace: &Trace, cache: &CacheState) -> u64 {
    trace.requests().iter().filter(|&&f| !cache.contains(f)).count() as u64
}

/// Full-sort top-C under (score descending, id ascending).
pub fn top_c_reference(scores: &[f64], capacity: usize) -> Result<BTreeSet<FileId>> {
    if capacity > scores.len() {
        return Err(Error::domain(format!(
            "cannot take the top {capacity} of {} scores",
            scores.len()
        )));
    }
    let mut ids: Vec<FileId> = (0..scores.len() as FileId).collect();
    ids.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .expect("scores must not be NaN")
            .then(a.cmp(&b))
    });
    Ok(ids.into_iter().take(capacity).collect())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v} must be positive")))
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v} must lie in (0, 1]")))
    }
}

/// Expected-regret upper bound of every NFPL variant on the caching problem:
/// `2 sqrt(2BC) / (pq) * (sqrt(T) + B / (2 sqrt(T)))`.
pub fn regret_bound_caching(batch: u64, capacity: u64, horizon: u64, p: f64, q: f64) -> Result<f64> {
    if batch == 0 || capacity == 0 || horizon == 0 {
        return Err(Error::domain("batch size, capacity and horizon must be positive"));
    }
    check_prob("p", p)?;
    check_prob("q", q)?;
    let (b, c, t) = (batch as f64, capacity as f64, horizon as f64);
    Ok(2.0 * (2.0 * b * c).sqrt() / (p * q) * (t.sqrt() + b / (2.0 * t.sqrt())))
}

/// Parameters of the generic noisy-FPL bound
/// `(p / eta) * r_hat * a_hat * rounds + (eta / p) * diameter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// Bound on the l1 norm of the cost estimates.
    pub r_hat: f64,
    /// Bound on the l-infinity norm of the cost estimates.
    pub a_hat: f64,
    /// l1 diameter of the decision set; `2C` for caching.
    pub diameter: f64,
    /// Number of decision rounds, `ceil(T / B)` for caching.
    pub rounds: u64,
    pub eta: f64,
    pub p: f64,
}

impl BoundParams {
    /// Parameters of the caching problem, with estimates scaled by `1/(pq)`.
    pub fn caching(batch: u64, capacity: u64, horizon: u64, p: f64, q: f64, eta: f64) -> Self {
        let scale = batch as f64 / (p * q);
        BoundParams {
            r_hat: scale,
            a_hat: scale,
            diameter: 2.0 * capacity as f64,
            rounds: horizon.div_ceil(batch.max(1)),
            eta,
            p,
        }
    }

    fn validate(&self) -> Result<()> {
        check_positive("r_hat", self.r_hat)?;
        check_positive("a_hat", self.a_hat)?;
        check_positive("eta", self.eta)?;
        check_prob("p", self.p)?;
        if self.rounds == 0 {
            return Err(Error::domain("rounds must be positive"));
        }
        if !(self.diameter.is_finite() && self.diameter >= 0.0) {
            return Err(Error::domain(format!(
                "diameter = {} must be non-negative",
                self.diameter
            )));
        }
        Ok(())
    }

    fn product(&self) -> f64 {
        self.r_hat * self.a_hat * self.rounds as f64
    }
}

pub fn regret_bound_general(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(params.p / params.eta * params.product() + params.eta / params.p * params.diameter)
}

/// The `eta` minimizing [`regret_bound_general`]: `p sqrt(r_hat a_hat rounds / D)`.
pub fn optimal_eta(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    check_positive("diameter", params.diameter)?;
    Ok(params.p * (params.product() / params.diameter).sqrt())
}

/// Value of the generic bound at the optimal `eta`: `2 sqrt(r_hat a_hat D rounds)`.
pub fn minimized_bound(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    Ok(2.0 * (params.product() * params.diameter).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Catalog;
    use crate::rng::spawn_stream;

    fn trace(n: usize, req: &[FileId]) -> Trace {
        Trace::new(Catalog::new(n).unwrap(), req.to_vec()).unwrap()
    }

    fn subsets(n: usize, k: usize) -> Vec<Vec<FileId>> {
        if k == 0 {
            return vec![vec![]];
        }
        if n < k {
            return vec![];
        }
        let mut out = subsets(n - 1, k);
        for mut s in subsets(n - 1, k - 1) {
            s.push((n - 1) as FileId);
            out.push(s);
        }
        out
    }

    fn exhaustive_min(t: &Trace, c: usize) -> u64 {
        subsets(t.catalog().n_files(), c)
            .into_iter()
            .map(|s| static_misses(t, &CacheState::from_files(s)))
            .min()
            .unwrap()
    }

    #[test]
    fn opt_small_example() {
        let t = trace(4, &[1, 1, 2, 3]);
        let (cache, misses) = opt_static(&t, 1).unwrap();
        assert_eq!(cache, CacheState::from_files([1]));
        assert_eq!(misses, 2);
        assert_eq!(exhaustive_min(&t, 1), 2);
    }

    #[test]
    fn opt_covers_everything_when_capacity_suffices() {
        let t = trace(6, &[0, 2, 2, 0, 2]);
        assert_eq!(opt_static(&t, 2).unwrap().1, 0);
        assert!(opt_static(&t, 6).is_err());
    }

    #[test]
    fn opt_matches_enumeration() {
        let mut rng = spawn_stream(31, 0);
        for _ in 0..100 {
            let req: Vec<FileId> = (0..30).map(|_| (rng.next_f64() * 8.0) as FileId).collect();
            let t = trace(8, &req);
            let (cache, misses) = opt_static(&t, 3).unwrap();
            assert_eq!(misses, exhaustive_min(&t, 3));
            assert_eq!(static_misses(&t, &cache), misses);
        }
    }

    #[test]
    fn reference_examples() {
        assert_eq!(top_c_reference(&[5.0, 1.0, 9.0], 2).unwrap(), BTreeSet::from([0, 2]));
        assert_eq!(top_c_reference(&[3.0, 3.0, 1.0], 1).unwrap(), BTreeSet::from([0]));
        assert!(top_c_reference(&[1.0], 2).is_err());
    }

    #[test]
    fn caching_bound_value() {
        let v = regret_bound_caching(1, 2, 8, 1.0, 1.0).unwrap();
        let expected = 4.0 * (8f64.sqrt() + 1.0 / (2.0 * 8f64.sqrt()));
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 12.0208).abs() < 1e-4);
        assert!(v >= 4.0 * 8f64.sqrt());
    }

    #[test]
    fn caching_bound_scales_inversely_with_pq() {
        let full = regret_bound_caching(3, 5, 1000, 1.0, 0.8).unwrap();
        let half = regret_bound_caching(3, 5, 1000, 0.5, 0.8).unwrap();
        assert!((half - 2.0 * full).abs() < 1e-9 * full);
        assert!(regret_bound_caching(1, 1, 1, 0.0, 1.0).is_err());
        assert!(regret_bound_caching(1, 1, 1, 1.0, 1.5).is_err());
        assert!(regret_bound_caching(0, 1, 1, 1.0, 1.0).is_err());
    }

    #[test]
    fn general_bound_at_optimum_reproduces_caching_leading_term() {
        for (b, c, t, p, q) in [(1u64, 2u64, 8u64, 1.0, 1.0), (10, 100, 20_000, 0.7, 0.5), (4, 3, 400, 0.25, 1.0)] {
            let mut params = BoundParams::caching(b, c, t, p, q, 1.0);
            // T' = T/B exactly for these grid points
            assert_eq!(params.rounds * b, t);
            params.eta = optimal_eta(&params).unwrap();
            let at_opt = regret_bound_general(&params).unwrap();
            let leading = 2.0 * (2.0 * (b * c) as f64).sqrt() / (p * q) * (t as f64).sqrt();
            assert!((at_opt - leading).abs() < 1e-9 * leading, "{at_opt} vs {leading}");
            assert!((minimized_bound(&params).unwrap() - leading).abs() < 1e-9 * leading);
        }
    }

    #[test]
    fn general_bound_degenerate_and_linear() {
        let p = BoundParams {
            r_hat: 2.0,
            a_hat: 3.0,
            diameter: 0.0,
            rounds: 10,
            eta: 4.0,
            p: 0.5,
        };
        assert_eq!(regret_bound_general(&p).unwrap(), 0.5 / 4.0 * 60.0);
        assert!(optimal_eta(&p).is_err());

        let base = BoundParams { diameter: 7.0, ..p };
        let scaled = BoundParams { r_hat: 6.0, ..base };
        let second = base.eta / base.p * base.diameter;
        let first = regret_bound_general(&base).unwrap() - second;
        let first_scaled = regret_bound_general(&scaled).unwrap() - second;
        assert!((first_scaled - 3.0 * first).abs() < 1e-12);
        assert!(regret_bound_general(&BoundParams { eta: 0.0, ..base }).is_err());
    }
}
