//! Age-aware scheduling for differentially-private federated learning over
//! time-varying (Markov) client data.
//!
//! The crate is `no_std` + `alloc`. Enable `std` (default) for `std::error::Error`
//! integration and `parallel` to spread Monte-Carlo trials and schedule
//! candidates over a rayon pool. Results never depend on the thread count:
//! per-trial values are collected in index order and reduced by pairwise
//! summation.
//!
//! Module map:
//! - [`markov`]: finite chains, marginals, reverse kernels, TV distance,
//!   SLEM, the aging factor `Δ(t)` and exact mutual information across an age gap.
//! - [`age_dp`]: age-dependent privacy calculus and the Laplace mechanism.
//! - [`bound`]: the loss-difference upper bound used to score schedules.
//! - [`sim`]: Monte-Carlo simulator of the one-shot FL protocol.
//! - [`scheduler`]: exhaustive schedule search and the six comparison schemes.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod age_dp;
pub mod bound;
mod error;
pub mod linalg;
pub mod markov;
mod math;
pub mod model;
mod par;
pub mod scheduler;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use markov::MarkovChain;
pub use model::{ClientSpec, Schedule};
