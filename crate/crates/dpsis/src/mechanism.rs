//! The canonical Lipschitz mechanism for epsilon-DP top-k selection.
//!
//! Every k-subset of feature indices receives a value equal to a negated
//! loss term plus inverse-CDF exponential noise; the mechanism returns the
//! argmax. Enumerating all C(d, k) subsets is intractable, but the
//! canonical loss is constant on O(dk) utility classes, and the maximal
//! noise within a class of size m can be drawn directly as F⁻¹(U^(1/m)).
//! [`lipschitz_topk`] walks the classes in O(d log d + dk) time;
//! [`brute_force_mechanism`] is the small-domain distributional oracle.
//!
//! ```
//! use dpsis::mechanism::{lipschitz_topk, MechanismParams, ScoreVector};
//!
//! let scores = ScoreVector::new(vec![0.9, 0.8, 0.3, 0.2, 0.1], 1.0);
//! let params = MechanismParams::new(2, 50.0, 0.5).unwrap();
//! let result = lipschitz_topk(&scores, &params, 7).unwrap();
//! assert_eq!(result.indices.len(), 2);
//! // Replay: the same seed gives the same selection.
//! assert_eq!(lipschitz_topk(&scores, &params, 7).unwrap().indices, result.indices);
//! ```

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Per-feature scores together with their sensitivity normalization and
/// descending order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    raw: Vec<f64>,
    sensitivity: f64,
    normalized: Vec<f64>,
    /// Permutation: `order[r]` is the index holding the (r+1)-th largest
    /// normalized score. Ties break by ascending index.
    order: Vec<usize>,
}

impl ScoreVector {
    /// Normalizes `raw` by `sensitivity` and computes the descending order.
    pub fn new(raw: Vec<f64>, sensitivity: f64) -> ScoreVector {
        assert!(sensitivity > 0.0, "sensitivity must be positive");
        assert!(
            raw.iter().all(|v| v.is_finite()),
            "scores must be finite"
        );
        let normalized: Vec<f64> = raw.iter().map(|v| v / sensitivity).collect();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            normalized[b]
                .partial_cmp(&normalized[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        ScoreVector {
            raw,
            sensitivity,
            normalized,
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The r-th largest normalized score, 1-based: `x_[r]`.
    pub fn order_stat(&self, rank: usize) -> f64 {
        self.normalized[self.order[rank - 1]]
    }

    /// The index set of the true top-k scores.
    pub fn top_k(&self, k: usize) -> BTreeSet<usize> {
        self.order[..k].iter().copied().collect()
    }
}

/// Privacy and loss parameters for one mechanism invocation. The budget
/// splits as `epsilon1 = (1 - gamma) * epsilon` and `epsilon2 = gamma *
/// epsilon`, so `epsilon1 + epsilon2 = epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismParams {
    pub k: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub epsilon1: f64,
    pub epsilon2: f64,
    /// Sensitivity of the canonical loss; 1 for normalized scores.
    pub loss_sensitivity: f64,
}

impl MechanismParams {
    pub fn new(k: usize, epsilon: f64, gamma: f64) -> Result<MechanismParams> {
        if !(epsilon > 0.0) {
            return Err(Error::BadParams(format!("epsilon = {epsilon} must be positive")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::BadParams(format!("gamma = {gamma} must lie in [0, 1)")));
        }
        if k < 1 {
            return Err(Error::BadParams("k must be at least 1".into()));
        }
        Ok(MechanismParams {
            k,
            epsilon,
            gamma,
            epsilon1: (1.0 - gamma) * epsilon,
            epsilon2: gamma * epsilon,
            loss_sensitivity: 1.0,
        })
    }

    fn check_dimension(&self, d: usize) -> Result<()> {
        if d < 2 || self.k > d - 1 {
            return Err(Error::BadK { k: self.k, d });
        }
        Ok(())
    }
}

/// One utility class `C(h, t)`: all k-subsets holding the top h ranks, the
/// rank-t element, and a body drawn from ranks h+1..t-1.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityClass {
    /// Guaranteed head length, in `[0, k-1]`.
    pub h: usize,
    /// 1-based rank of the worst included element, in `[k, d]`.
    pub t: usize,
    /// Member count `C(t-h-1, k-h-1)`, kept as a float; only `1/size`
    /// enters the noise path.
    pub size: f64,
}

/// Output of one selection run.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub indices: BTreeSet<usize>,
    /// `(h, t)` of the winning utility class.
    pub winning_class: (usize, usize),
    /// Winning value (utility plus noise).
    pub value: f64,
    pub params: MechanismParams,
    pub seed: u64,
}

fn subset_check(y: &BTreeSet<usize>, x: &ScoreVector) -> Result<usize> {
    let k = y.len();
    let d = x.len();
    if k < 1 || k > d.saturating_sub(1) || y.iter().any(|&i| i >= d) {
        return Err(Error::BadK { k, d });
    }
    Ok(k)
}

/// Computes the `(h, t)` utility-class coordinates of a subset: `h` is the
/// longest head of top ranks fully contained in `y` (capped at k-1) and
/// `t` is the rank of the worst included element.
pub fn utility_class_of(y: &BTreeSet<usize>, x: &ScoreVector) -> Result<(usize, usize)> {
    let k = subset_check(y, x)?;
    let mut h = 0;
    while h < k - 1 && y.contains(&x.order()[h]) {
        h += 1;
    }
    // h is now the largest value < k with ranks 1..h all inside y.
    let mut t = 0;
    for (pos, &idx) in x.order().iter().enumerate() {
        if y.contains(&idx) {
            t = pos + 1;
        }
    }
    Ok((h, t))
}

/// Generalized canonical loss `(1 - gamma) * x_[h+1] - gamma * x_[t]`.
/// At `gamma = 1/2` this is the closed form of
/// `min over v with top-k(v) = y of ||x - v||_inf`.
pub fn canonical_loss(y: &BTreeSet<usize>, x: &ScoreVector, gamma: f64) -> Result<f64> {
    let (h, t) = utility_class_of(y, x)?;
    Ok((1.0 - gamma) * x.order_stat(h + 1) - gamma * x.order_stat(t))
}

/// Independent oracle for the gamma = 1/2 canonical loss:
/// `max(0, (best missing score - worst included score) / 2)`.
pub fn brute_force_loss_oracle(y: &BTreeSet<usize>, x: &ScoreVector) -> Result<f64> {
    subset_check(y, x)?;
    let best_missing = x
        .normalized()
        .iter()
        .enumerate()
        .filter(|(i, _)| !y.contains(i))
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_included = y
        .iter()
        .map(|&i| x.normalized()[i])
        .fold(f64::INFINITY, f64::min);
    Ok(((best_missing - worst_included) / 2.0).max(0.0))
}

fn binom_f64(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    let mut acc = 1.0;
    for i in 0..r {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Enumerates all `k(d-k) + 1` utility classes for a problem of size
/// `(d, k)`. Sizes sum to `C(d, k)`.
pub fn enumerate_utility_classes(d: usize, k: usize) -> Result<Vec<UtilityClass>> {
    if d < 2 || k < 1 || k > d - 1 {
        return Err(Error::BadK { k, d });
    }
    let mut classes = Vec::with_capacity(k * (d - k) + 1);
    classes.push(UtilityClass { h: k - 1, t: k, size: 1.0 });
    for t in k + 1..=d {
        for h in (0..k).rev() {
            classes.push(UtilityClass {
                h,
                t,
                size: binom_f64(t - h - 2, k - h - 1),
            });
        }
    }
    Ok(classes)
}

/// Draws `max(E_1, ..., E_m)` for i.i.d. standard exponentials in one shot
/// as `F⁻¹(U^(1/m)) = -ln(1 - U^(1/m))`.
///
/// For large `m` the inner quantity `1 - U^(1/m)` underflows when computed
/// naively. With `y = 1/m` and `w = y ln U`, the stable identity is
/// `1 - U^y = -expm1(w)`; below `y = 1e-8` the quadratic Taylor form
/// `-w - w²/2` is used instead.
pub fn sample_max_noise<R: Rng + ?Sized>(m: f64, rng: &mut R) -> f64 {
    assert!(m >= 1.0, "class size must be at least 1");
    let mut u: f64 = rng.random();
    if u <= 0.0 {
        u = f64::MIN_POSITIVE;
    }
    let y = 1.0 / m;
    let w = y * u.ln(); // w <= 0
    let one_minus_pow = if y <= 1e-8 {
        -w - 0.5 * w * w
    } else {
        -f64::exp_m1(w)
    };
    -one_minus_pow.ln()
}

/// The m-th harmonic number: exact partial sum for integer `m <= 1e6`,
/// asymptotic expansion `ln m + γ + 1/(2m) - 1/(12m²)` otherwise.
pub fn harmonic(m: f64) -> f64 {
    assert!(m >= 1.0, "harmonic number needs m >= 1");
    if m <= 1e6 && m.fract() == 0.0 {
        let n = m as u64;
        // Sum smallest terms first.
        (1..=n).rev().map(|i| 1.0 / i as f64).sum()
    } else {
        m.ln() + EULER_MASCHERONI + 1.0 / (2.0 * m) - 1.0 / (12.0 * m * m)
    }
}

/// Draws `count` distinct elements from `pool` by partial Fisher-Yates.
fn sample_distinct<R: Rng + ?Sized>(pool: &[usize], count: usize, rng: &mut R) -> Vec<usize> {
    debug_assert!(count <= pool.len());
    let mut pool = pool.to_vec();
    for i in 0..count {
        let pick = rng.random_range(i..pool.len());
        pool.swap(i, pick);
    }
    pool.truncate(count);
    pool
}

fn assemble_member<R: Rng + ?Sized>(
    x: &ScoreVector,
    k: usize,
    h: usize,
    t: usize,
    rng: &mut R,
) -> BTreeSet<usize> {
    let mut indices: BTreeSet<usize> = x.order()[..h].iter().copied().collect();
    indices.insert(x.order()[t - 1]);
    if t > k {
        // Body members come from ranks h+2..t-1; rank h+1 is excluded, since
        // including it would put the subset in a class with a longer head.
        let body_pool = &x.order()[h + 1..t - 1];
        for idx in sample_distinct(body_pool, k - h - 1, rng) {
            indices.insert(idx);
        }
    }
    indices
}

/// Canonical Lipschitz mechanism for top-k selection.
///
/// Walks every utility class, maintaining the class size by the
/// multiplicative binomial update `m <- m * (t-h-2)/(k-h-1)`, assigns each
/// class its utility `(ε₂/2) x_[t] - (ε₁/2) x_[h+1]` plus one maximal
/// noise draw, and returns a uniformly random member of the winning class.
/// O(d log d + dk) time, O(d) auxiliary space. Satisfies ε-differential
/// privacy when each raw score has the stated per-component sensitivity.
pub fn lipschitz_topk(x: &ScoreVector, params: &MechanismParams, seed: u64) -> Result<SelectionResult> {
    let d = x.len();
    params.check_dimension(d)?;
    let k = params.k;
    let half_e1 = params.epsilon1 / 2.0;
    let half_e2 = params.epsilon2 / 2.0;
    let mut rng = rng_from_seed(seed);

    // Class (k-1, k): the true top-k, size 1.
    let mut best_h = k - 1;
    let mut best_t = k;
    let mut best_value =
        (half_e2 - half_e1) * x.order_stat(k) + sample_max_noise(1.0, &mut rng);

    for t in k + 1..=d {
        let mut m = 1.0;
        let tail_term = half_e2 * x.order_stat(t);
        for h in (0..k).rev() {
            if h < k - 1 {
                m *= (t - h - 2) as f64 / (k - h - 1) as f64;
            }
            let utility = tail_term - half_e1 * x.order_stat(h + 1);
            let value = utility + sample_max_noise(m, &mut rng);
            if value > best_value {
                best_value = value;
                best_h = h;
                best_t = t;
            }
        }
    }

    let indices = assemble_member(x, k, best_h, best_t, &mut rng);
    Ok(SelectionResult {
        indices,
        winning_class: (best_h, best_t),
        value: best_value,
        params: params.clone(),
        seed,
    })
}

const BRUTE_FORCE_LIMIT: u64 = 100_000;

/// All k-subsets of `0..d` in lexicographic order.
pub fn combinations(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // Rightmost position that can still advance.
        let Some(i) = (0..k).rev().find(|&i| current[i] < d - k + i) else {
            return out;
        };
        current[i] += 1;
        for j in i + 1..k {
            current[j] = current[j - 1] + 1;
        }
    }
}

/// Direct Lipschitz mechanism: enumerates every k-subset, assigns
/// `-(ε/2Δ) LOSS + F⁻¹(U)` with independent noise, returns the argmax.
/// Distributional oracle for [`lipschitz_topk`] on small domains.
pub fn brute_force_mechanism(
    x: &ScoreVector,
    params: &MechanismParams,
    seed: u64,
) -> Result<SelectionResult> {
    let d = x.len();
    params.check_dimension(d)?;
    let k = params.k;
    if binom_f64(d, k) > BRUTE_FORCE_LIMIT as f64 {
        return Err(Error::DomainTooLarge { d, k, limit: BRUTE_FORCE_LIMIT });
    }
    let mut rng = rng_from_seed(seed);
    let scale = params.epsilon / (2.0 * params.loss_sensitivity);
    let mut best: Option<(f64, BTreeSet<usize>)> = None;
    for combo in combinations(d, k) {
        let y: BTreeSet<usize> = combo.into_iter().collect();
        let loss = canonical_loss(&y, x, params.gamma)?;
        let value = -scale * loss + sample_max_noise(1.0, &mut rng);
        if best.as_ref().map_or(true, |(v, _)| value > *v) {
            best = Some((value, y));
        }
    }
    let (value, indices) = best.expect("domain is non-empty");
    let winning_class = utility_class_of(&indices, x)?;
    Ok(SelectionResult {
        indices,
        winning_class,
        value,
        params: params.clone(),
        seed,
    })
}
