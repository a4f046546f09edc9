//! Spatio-temporal spike-and-slab priors for multiple measurement vector
//! recovery, with expectation propagation inference.
//!
//! ```no_run
//! use stss_core::{ep, gaussian::KernelSpec, prior};
//!
//! let cfg = prior::PriorConfig::stationary(100, 100, -1.0, KernelSpec::squared_exponential(1.0, 5.0), 0.99, 1.0, 0.1);
//! let (problem, _truth) = prior::sample_problem(&cfg, 40, prior::ForwardKind::GaussianIid, 10.0, 7).unwrap();
//! let post = ep::solve(&problem, &cfg, &ep::SolverOptions::default()).unwrap();
//! println!("{} iterations", post.iterations);
//! ```

pub mod ep;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod metrics;
pub mod moments;
pub mod par;
pub mod prior;

pub use error::{Error, Result};
pub use par::Execution;
