//! Projection-free convex optimization over atomic domains.
//!
//! The toolkit provides conditional-gradient (Frank-Wolfe style) solvers that
//! enforce constraints through linear minimization instead of projection:
//!
//! * [`fw`] — the deterministic driver with exact or approximate subproblem
//!   oracles, duality-gap stopping, and per-iteration traces;
//! * [`svrf`] — stochastic variance-reduced variants for finite-sum
//!   objectives, in restarting and non-restarting (stable) forms;
//! * [`ssvrf`] — the sketched variant for matrix completion that never
//!   materializes the dense iterate;
//! * [`lmo`] — linear minimization oracles over the one-norm ball, the
//!   nuclear-norm ball, and its positive-semidefinite restriction;
//! * [`spectral`] — the iterative eigenvalue/singular-value kernels backing
//!   the matrix oracles, plus small dense QR/SVD/least-squares helpers;
//! * [`sketch`] — a two-sided randomized low-rank sketch with streaming
//!   rank-one updates and QR-based reconstruction;
//! * [`problems`] — matrix-completion instance generators, measurement
//!   operators, and finite-sum objectives used by the solvers and benchmarks.
//!
//! All numerics are in `f64`. Every randomized routine takes an explicit
//! 64-bit seed and is deterministic for a fixed seed within one build.

pub mod error;
pub mod fw;
pub mod lmo;
pub mod problems;
pub mod sketch;
pub mod ssvrf;
pub mod svrf;




pub mod spectral;


pub mod textfmt;

pub use error::{Error, Result};

/// Derives an independent stream seed from a base seed and a stream index.
///
/// SplitMix64 finalizer; used everywhere a run needs per-iteration or
/// per-cell seeds so that traces are reproducible for a fixed base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
