//! Numerical core: graphs, coefficient language, exact Gaussian laws,
//! simulation, Markov-property tests and discrete random fields.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeff;
pub mod gaussian;
pub mod graph;
pub mod hc;
pub mod mrf;
pub mod rng;
pub mod sde;
pub mod stats;
