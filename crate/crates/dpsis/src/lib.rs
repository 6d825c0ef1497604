//! Differentially private feature selection from correlations.
//!
//! High-dimensional feature selection by sure independence screening
//! (SIS) keeps the `k` features most correlated with the target. This
//! crate privatizes that step: after centering and infinity-norm scaling,
//! each correlation score `|x_(i)^T y|` changes by at most 1 when one
//! individual's row changes, so an ε-DP top-k mechanism over the scores
//! yields an ε-DP feature selector (DP-SIS).
//!
//! The private top-k step is the canonical Lipschitz mechanism
//! ([`mechanism::lipschitz_topk`]): every k-subset gets a utility plus
//! inverse-CDF exponential noise, organized into O(dk) utility classes so
//! the argmax is found without enumerating all C(d, k) subsets.
//!
//! Alongside the selector the crate ships the non-private baselines used
//! to evaluate it (SIS, LASSO coordinate descent, and the blockwise
//! two-stage method), scoring metrics with an exact-recovery bound, and a
//! seeded benchmark harness behind the `dpsis` CLI.
//!
//! ```
//! use dpsis::data::{gen_synth_fan, SynthSpec};
//! use dpsis::selectors::{dp_sis, sis};
//!
//! let ds = gen_synth_fan(&SynthSpec::new(100, 200, 42));
//! let exact = sis(&ds, 8).unwrap();
//! // With a loose privacy budget the private selection matches SIS.
//! let private = dp_sis(&ds, 8, 1e6, 0.5, 7).unwrap();
//! assert_eq!(private.indices, exact);
//! ```

pub mod bench;
pub mod data;
pub mod error;
pub mod mechanism;
pub mod metrics;
pub mod seed;
pub mod selectors;

pub use error::{Error, Result};
