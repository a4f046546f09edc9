//! Expectation propagation for the spatio-temporal spike-and-slab model.
//!
//! The posterior over `(X, Z, Γ)` is approximated by four families of sites:
//! the exact Gaussian likelihood, a Gaussian×Bernoulli site per coefficient
//! for the spike-and-slab factor, a Bernoulli×Gaussian site per coefficient
//! for the probit link, and forward/backward Gaussian messages for the chain.

mod chain;
mod joint;
mod sites;
mod solver;
mod updates;

pub use chain::{gamma_marginals, update_f4_chain, ChainPrior};
pub use joint::{
    recompute_gamma, recompute_joint, recompute_x, support_probabilities, JointPath, Likelihood, Posterior,
};
pub use sites::{GaussianSiteGrid, Sites};
pub use solver::{init_sites, solve, write_diagnostics_csv, IterationRecord, DIAGNOSTICS_HEADER};
pub use updates::{
    update_f2_parallel, update_f3_parallel, SweepStats, FLAT_SITE_ROUNDOFF, MAX_SKIP_FRACTION, TILTED_VAR_FLOOR,
};

use crate::error::{Error, Result};
use crate::par::Execution;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Stop once the largest change in `x_mean` and `support_prob` is at most this.
    pub tol: f64,
    /// Weight of the fresh site value in each update; 1 is undamped.
    pub damping: f64,
    /// Site variances are kept at or above this value.
    pub min_site_var: f64,
    /// On non-convergence, return the iterate with the smallest change
    /// rather than the last one.
    pub keep_best_iterate: bool,
    pub joint_path: JointPath,
    pub execution: Execution,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 200,
            tol: 1e-6,
            damping: 0.7,
            min_site_var: 1e-10,
            keep_best_iterate: true,
            joint_path: JointPath::Auto,
            execution: Execution::Parallel,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::config(format!("tol must be non-negative, got {}", self.tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.min_site_var > 0.0 && self.min_site_var.is_finite()) {
            return Err(Error::config("min_site_var must be positive"));
        }
        Ok(())
    }
}
