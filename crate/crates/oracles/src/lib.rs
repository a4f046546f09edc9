//! Brute-force reference computations for testing `stss-core`.
//!
//! Nothing here calls into `stss-core`: every routine is written from the
//! model definition directly (quadrature, enumeration, Monte Carlo, or a
//! structurally different EP construction) so it can serve as an independent
//! check on the production code paths.

pub mod bayes;
pub mod quadrature;
pub mod reference_ep;
