//! Scoring of selected feature sets and the exact-recovery probability
//! bound for the private selector.
//!
//! ```
//! use std::collections::BTreeSet;
//! use dpsis::metrics::{recovery_bound, tgg_flags, BoundInput, RankedReference};
//!
//! let bound = recovery_bound(&BoundInput {
//!     d: 10, k: 2, xi: 0.5, gamma: 0.5, epsilon: 40.0,
//! }).unwrap();
//! assert!((bound - 0.6967).abs() < 1e-3);
//!
//! let reference = RankedReference::new((0..20).collect(), 10).unwrap();
//! let picked: BTreeSet<usize> = (0..10).collect();
//! assert_eq!(tgg_flags(&picked, &reference).unwrap(), (true, true, true));
//! ```

use std::collections::BTreeSet;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Fraction of the reference set recovered: `|selected ∩ reference| / k`.
pub fn topk_accuracy(selected: &BTreeSet<usize>, reference: &BTreeSet<usize>) -> Result<f64> {
    if selected.len() != reference.len() {
        return Err(Error::BadSubsetSize {
            got: selected.len(),
            expected: reference.len(),
        });
    }
    let common = selected.intersection(reference).count();
    Ok(common as f64 / reference.len() as f64)
}

/// Reference ranking for order-statistic quality tiers: feature indices in
/// descending reference-score order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedReference {
    ranked_indices: Vec<usize>,
    k: usize,
}

impl RankedReference {
    /// Requires no duplicates and length at least `floor(3k/2)` (and at
    /// least `k`), the largest pool any tier consults.
    pub fn new(ranked_indices: Vec<usize>, k: usize) -> Result<RankedReference> {
        let needed = (3 * k / 2).max(k);
        if ranked_indices.len() < needed {
            return Err(Error::ReferenceTooShort {
                len: ranked_indices.len(),
                k,
            });
        }
        let unique: BTreeSet<usize> = ranked_indices.iter().copied().collect();
        if unique.len() != ranked_indices.len() {
            return Err(Error::BadConfig("reference ranking contains duplicates".into()));
        }
        Ok(RankedReference { ranked_indices, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The top-k of the reference as a set.
    pub fn top_set(&self) -> BTreeSet<usize> {
        self.ranked_indices[..self.k].iter().copied().collect()
    }

    fn pool(&self, len: usize) -> BTreeSet<usize> {
        self.ranked_indices[..len].iter().copied().collect()
    }
}

/// Order-statistic quality tiers.
///
/// * `top`: selected equals the reference top-k exactly.
/// * `great`: all of the top `ceil(k/10)` present and everything selected
///   within the top `floor(11k/10)`.
/// * `good`: all of the top `ceil(k/100)` present and everything selected
///   within the top `floor(3k/2)`.
///
/// Required heads round up, allowed pools round down, matching the
/// strictest reading consistent with the k = 200 worked example
/// (head 20, pool 220).
pub fn tgg_flags(selected: &BTreeSet<usize>, reference: &RankedReference) -> Result<(bool, bool, bool)> {
    let k = reference.k;
    if selected.len() != k {
        return Err(Error::BadSubsetSize {
            got: selected.len(),
            expected: k,
        });
    }
    let top = *selected == reference.top_set();

    let tier = |head_len: usize, pool_len: usize| -> bool {
        let head = reference.pool(head_len.min(k));
        let pool = reference.pool(pool_len.min(reference.ranked_indices.len()));
        head.is_subset(selected) && selected.is_subset(&pool)
    };
    let great = tier(k.div_ceil(10), 11 * k / 10);
    let good = tier(k.div_ceil(100), 3 * k / 2);
    Ok((top, great, good))
}

/// Inputs to the exact-recovery bound.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInput {
    pub d: usize,
    pub k: usize,
    /// Gap between the k-th and (k+1)-th largest absolute correlations.
    pub xi: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl BoundInput {
    fn validate(&self) -> Result<()> {
        if self.k < 1 || self.k >= self.d {
            return Err(Error::BadK { k: self.k, d: self.d });
        }
        if self.xi < 0.0 {
            return Err(Error::BadConfig(format!("xi = {} must be nonnegative", self.xi)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::BadConfig(format!("gamma = {} must lie in (0, 1]", self.gamma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::BadConfig(format!("epsilon = {} must be positive", self.epsilon)));
        }
        Ok(())
    }
}

/// `ln C(n, r)` via log-gamma; exact enough for all n here.
pub(crate) fn ln_binom(n: usize, r: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(r as f64 + 1.0) - ln_gamma((n - r) as f64 + 1.0)
}

/// Lower bound on the probability that the private selector returns
/// exactly the non-private top-k:
/// `max(0, 1 - exp(k ln(d/k) + ln(c_{d,k}) - xi*gamma*epsilon/2))`
/// with `c_{d,k} = C(d,k) k^k / d^k`.
pub fn recovery_bound(b: &BoundInput) -> Result<f64> {
    b.validate()?;
    let (d, k) = (b.d as f64, b.k as f64);
    let ln_c = ln_binom(b.d, b.k) + k * k.ln() - k * d.ln();
    let exponent = k * (d / k).ln() + ln_c - b.xi * b.gamma * b.epsilon / 2.0;
    Ok((1.0 - exponent.exp()).max(0.0))
}
