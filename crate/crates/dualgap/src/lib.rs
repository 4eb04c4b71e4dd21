//! Discrete optimal transport, f-divergences, and the penalized-marginal
//! objectives that tie them together.
//!
//! Everything here operates on distributions with finite support. That makes
//! each quantity an exactly solvable finite program, so identities that are
//! usually stated asymptotically (duality, decomposition of adversarial
//! objectives, collapse thresholds) can be checked numerically to tight
//! tolerances instead of taken on faith.
//!
//! # Layout
//!
//! | module | contents |
//! |--------|----------|
//! | [`space`] | finite metric spaces, cost matrices, distributions, pushforwards |
//! | [`fgen`] | f-divergence generators, conjugates, recession constants |
//! | [`ot`] | exact Wasserstein (primal + Lipschitz dual), Sinkhorn, IPMs |
//! | [`duality`] | the shared marginal-penalty program, adversarial and autoencoder objectives, collapse thresholds |
//! | [`theorems`] | randomized verification suites over the identities above |
//! | [`genbounds`] | empirical convergence rates, concentration, covering numbers |
//! | [`brenier`] | semi-discrete transport via max-affine potentials |
//! | [`report`] | deterministic JSON/CSV emission |
//!
//! Internal engines: [`netflow`] (uncapacitated network simplex) and [`lp`]
//! (small dense simplex), each exact at machine precision on the sizes used.
//!
//! # Determinism
//!
//! Every randomized routine takes an explicit seed and derives per-instance
//! streams with [`seeding::derive_seed`]. Reruns with the same inputs produce
//! byte-identical report payloads; wall-clock time lives outside the payload.

#![forbid(unsafe_code)]
// Guards are written `!(x > tol)` on purpose: the negated form treats NaN as
// a failure, where the "clearer" `x <= tol` would silently wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels index several same-length vectors in lockstep; bare index
// loops keep those accesses visibly parallel where zipped iterators would not.
#![allow(clippy::needless_range_loop)]

pub mod brenier;
pub mod duality;
mod error;
pub mod fgen;
pub mod genbounds;
pub mod lp;
pub mod netflow;
pub mod ot;
pub mod report;
pub mod seeding;
pub mod space;
pub mod theorems;
pub(crate) mod util;

pub use error::{Error, Result};
