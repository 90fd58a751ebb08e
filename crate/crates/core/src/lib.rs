//! Non-reversible parallel tempering with a tunable variational reference.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: target log densities and the built-in problems.
//! * [`reference`]: fixed and Gaussian references, moment matching.
//! * [`path`]: annealing schedules and (concatenated) annealing paths.
//! * [`explore`]: coordinate-wise slice sampling with doubling and shrinking.
//! * [`nrpt`]: deterministic even-odd replica exchange.
//! * [`adapt`]: round-based schedule and reference tuning.
//! * [`diagnostics`]: restart counting, barrier estimates, KS distance.
//! * [`idealized`]: index-process simulator under efficient local exploration.
//! * [`analysis`]: closed-form and Monte Carlo barrier upper bounds.
//! * [`output`]: CSV records shared by the command-line front end.

// `!(a < b)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod analysis;
pub mod diagnostics;
pub mod error;
pub mod explore;
pub mod idealized;
pub mod model;
pub mod nrpt;
pub mod output;
pub mod path;
pub mod reference;
pub mod rng;

pub use error::{Error, Result};
