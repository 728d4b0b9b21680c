//! Optimal reinsurance, dividend, and capital-transfer policies for a
//! two-line insurer under a diffusion approximation.

// `!(x > 0.0)` guards intentionally reject NaN along with the
// out-of-range values; `partial_cmp` phrasings obscure that
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod claims;
pub mod cli;
pub mod coeffs;
pub mod error;
pub mod freeboundary;
pub mod numeric;
pub mod solver;
pub mod simulate;
pub mod strategy;
pub mod verify;
