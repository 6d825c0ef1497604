//! Feature selectors: SIS, DP-SIS, LASSO coordinate descent, the LASSO
//! top-k proxy, and the blockwise two-stage baseline.
//!
//! ```
//! use dpsis::data::Dataset;
//! use dpsis::selectors::{lasso_cd, LassoParams};
//!
//! // The target tracks the first column only.
//! let ds = Dataset::from_columns(
//!     vec![vec![1.0, -1.0, 0.5, -0.5], vec![0.3, 0.4, -0.2, -0.6]],
//!     vec![2.0, -2.0, 1.0, -1.0],
//! )
//! .preprocess()
//! .unwrap();
//! let fit = lasso_cd(&ds, &LassoParams::new(0.05)).unwrap();
//! assert!(fit.weights[0].abs() > fit.weights[1].abs());
//! ```

use std::collections::BTreeSet;

use crate::data::{dot, Dataset};
use crate::error::{Error, Result};
use crate::mechanism::{lipschitz_topk, MechanismParams, ScoreVector, SelectionResult};

/// Indices of the `k` largest scores, ties broken by ascending index.
pub(crate) fn top_k_indices(scores: &[f64], k: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx[..k].iter().copied().collect()
}

fn require_preprocessed(ds: &Dataset) -> Result<()> {
    if !ds.is_preprocessed() {
        return Err(Error::NotPreprocessed);
    }
    Ok(())
}

/// Sure independence screening: the `k` features with the largest absolute
/// correlation `|x_(i)^T y|`.
pub fn sis(ds: &Dataset, k: usize) -> Result<BTreeSet<usize>> {
    require_preprocessed(ds)?;
    if k < 1 || k > ds.d() {
        return Err(Error::BadK { k, d: ds.d() });
    }
    Ok(top_k_indices(&ds.abs_correlations(), k))
}

/// Non-private screening on raw data: the `k` features with the largest
/// absolute Pearson correlation to the target.
///
/// [`sis`] scores infinity-norm-bounded data so the scores have unit
/// sensitivity for the private pipeline; this variant is scale-free and is
/// the right statistic when no privacy preprocessing is involved.
pub fn pearson_sis(ds: &Dataset, k: usize) -> Result<BTreeSet<usize>> {
    if k < 1 || k > ds.d() {
        return Err(Error::BadK { k, d: ds.d() });
    }
    let n = ds.n() as f64;
    let y_mean = ds.y().iter().sum::<f64>() / n;
    let yc: Vec<f64> = ds.y().iter().map(|v| v - y_mean).collect();
    let y_norm = dot(&yc, &yc).sqrt();
    let scores: Vec<f64> = (0..ds.d())
        .map(|j| {
            let col = ds.col(j);
            let mean = col.iter().sum::<f64>() / n;
            let cc: Vec<f64> = col.iter().map(|v| v - mean).collect();
            let norm = dot(&cc, &cc).sqrt();
            if norm == 0.0 || y_norm == 0.0 {
                0.0
            } else {
                (dot(&cc, &yc) / (norm * y_norm)).abs()
            }
        })
        .collect();
    Ok(top_k_indices(&scores, k))
}

/// SIS with the top-k step replaced by the canonical Lipschitz mechanism.
///
/// Preprocessing bounds (`|X_ij| <= 1`, `|y_i| <= 1`) make each score
/// `|x_(i)^T y|` change by at most 1 when one row changes, so the scores
/// enter the mechanism with sensitivity 1 and the result is ε-DP with
/// respect to changing one row of `(X, y)`.
pub fn dp_sis(
    ds: &Dataset,
    k: usize,
    epsilon: f64,
    gamma: f64,
    seed: u64,
) -> Result<SelectionResult> {
    require_preprocessed(ds)?;
    let scores = ScoreVector::new(ds.abs_correlations(), 1.0);
    let params = MechanismParams::new(k, epsilon, gamma)?;
    lipschitz_topk(&scores, &params, seed)
}

/// LASSO solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoParams {
    pub lambda: f64,
    /// Convergence tolerance on the largest coordinate update per sweep.
    pub tol: f64,
    /// Cap on full coordinate sweeps.
    pub max_iter: usize,
    /// Coefficients below this magnitude count as zero in supports.
    pub support_threshold: f64,
}

impl LassoParams {
    pub fn new(lambda: f64) -> LassoParams {
        assert!(lambda >= 0.0);
        LassoParams {
            lambda,
            tol: 1e-4,
            max_iter: 1000,
            support_threshold: 1e-6,
        }
    }
}

/// LASSO fit result. `converged` is false when the sweep cap was reached
/// before the tolerance; callers decide whether that matters.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub weights: Vec<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Objective value after every sweep; non-increasing by construction.
    pub objective_history: Vec<f64>,
}

impl LassoFit {
    /// Indices with `|w_j|` above the support threshold.
    pub fn support(&self, threshold: f64) -> BTreeSet<usize> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() > threshold)
            .map(|(j, _)| j)
            .collect()
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for
/// `min_w (1/2N) ||y - Xw||^2 + lambda ||w||_1`.
///
/// Maintains the residual `r = y - Xw` across updates, so each sweep is
/// O(Nd). Stops when the largest coordinate change in a sweep falls below
/// `tol` or after `max_iter` sweeps.
pub fn lasso_cd(ds: &Dataset, params: &LassoParams) -> Result<LassoFit> {
    require_preprocessed(ds)?;
    let n = ds.n();
    let d = ds.d();
    let n_f = n as f64;
    let col_sq: Vec<f64> = (0..d).map(|j| dot(ds.col(j), ds.col(j)) / n_f).collect();

    let mut w = vec![0.0; d];
    let mut residual = ds.y().to_vec();
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    for _ in 0..params.max_iter {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue; // zero column stays at weight 0
            }
            let col = ds.col(j);
            let rho = dot(col, &residual) / n_f + col_sq[j] * w[j];
            let w_new = soft_threshold(rho, params.lambda) / col_sq[j];
            let delta = w[j] - w_new;
            if delta != 0.0 {
                for (r, x) in residual.iter_mut().zip(col) {
                    *r += delta * x;
                }
                w[j] = w_new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        let obj = dot(&residual, &residual) / (2.0 * n_f)
            + params.lambda * w.iter().map(|v| v.abs()).sum::<f64>();
        history.push(obj);
        if max_delta < params.tol {
            converged = true;
            break;
        }
    }

    Ok(LassoFit {
        weights: w,
        converged,
        sweeps,
        objective_history: history,
    })
}

/// Top-k features by LASSO coefficient magnitude; the reference set for
/// accuracy scoring on datasets without a known support.
///
/// When fewer than `k` coefficients are nonzero, the set is padded with
/// the smallest-index zero-coefficient features and the second return is
/// true to flag the degenerate fill.
pub fn lasso_topk(ds: &Dataset, params: &LassoParams, k: usize) -> Result<(BTreeSet<usize>, bool)> {
    if k < 1 || k > ds.d() {
        return Err(Error::BadK { k, d: ds.d() });
    }
    let fit = lasso_cd(ds, params)?;
    let magnitudes: Vec<f64> = fit.weights.iter().map(|w| w.abs()).collect();
    let nonzero = magnitudes
        .iter()
        .filter(|m| **m > params.support_threshold)
        .count();
    Ok((top_k_indices(&magnitudes, k), nonzero < k))
}

/// Full ranking of all `d` features by LASSO coefficient magnitude, ties
/// by ascending index. Used for order-statistic metrics.
pub fn lasso_ranking(ds: &Dataset, params: &LassoParams) -> Result<Vec<usize>> {
    let fit = lasso_cd(ds, params)?;
    let magnitudes: Vec<f64> = fit.weights.iter().map(|w| w.abs()).collect();
    let mut idx: Vec<usize> = (0..magnitudes.len()).collect();
    idx.sort_by(|&a, &b| {
        magnitudes[b]
            .partial_cmp(&magnitudes[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    Ok(idx)
}

/// Settings for the two-stage baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageParams {
    pub k: usize,
    /// Number of contiguous row blocks; defaults to floor(sqrt(N)).
    pub block_count: Option<usize>,
    pub lasso: LassoParams,
    pub private_selection: bool,
    /// Privacy budget, used only when `private_selection` is set.
    pub epsilon: f64,
    pub gamma: f64,
}

/// Two-stage baseline: fit a LASSO on each of `block_count` contiguous row
/// blocks, count per-feature support membership across blocks, then pick
/// the top-k counts (privately via the Lipschitz mechanism when
/// `private_selection` is set; the counts have per-coordinate sensitivity
/// 1 because one row lives in exactly one block).
pub fn two_stage_select(ds: &Dataset, params: &TwoStageParams, seed: u64) -> Result<BTreeSet<usize>> {
    let counts = two_stage_counts(ds, params)?;
    if params.private_selection {
        let scores = ScoreVector::new(counts, 1.0);
        let mech = MechanismParams::new(params.k, params.epsilon, params.gamma)?;
        Ok(lipschitz_topk(&scores, &mech, seed)?.indices)
    } else {
        Ok(top_k_indices(&counts, params.k))
    }
}

/// Per-feature support-membership counts across the row blocks of the
/// two-stage baseline. Each count moves by at most 1 between neighboring
/// datasets, since one row lives in exactly one block.
pub fn two_stage_counts(ds: &Dataset, params: &TwoStageParams) -> Result<Vec<f64>> {
    require_preprocessed(ds)?;
    let n = ds.n();
    let d = ds.d();
    if params.k < 1 || params.k > d {
        return Err(Error::BadK { k: params.k, d });
    }
    let blocks = params
        .block_count
        .unwrap_or_else(|| (n as f64).sqrt().floor() as usize)
        .max(1);
    if n / blocks < 2 {
        return Err(Error::BlockTooSmall { rows: n / blocks });
    }

    let mut counts = vec![0.0f64; d];
    let base = n / blocks;
    let extra = n % blocks;
    let mut start = 0;
    for b in 0..blocks {
        let len = base + usize::from(b < extra);
        let block = ds.row_slice(start, start + len);
        start += len;
        let fit = lasso_cd(&block, &params.lasso)?;
        for j in fit.support(params.lasso.support_threshold) {
            counts[j] += 1.0;
        }
    }
    Ok(counts)
}
