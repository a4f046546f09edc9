//! The global Gaussian–Bernoulli approximation assembled from the sites.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::gaussian::{direct_posterior, woodbury_posterior, GaussianNd};
use crate::moments::combine_bernoulli;
use crate::par::{self, Execution};
use crate::prior::MmvProblem;

use super::chain::gamma_marginals;
use super::sites::Sites;
use super::solver::IterationRecord;

/// How the per-column `x` posterior is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JointPath {
    /// Low-rank update when `N < D`, dense otherwise.
    #[default]
    Auto,
    Woodbury,
    Direct,
}

/// Quantities of the likelihood term that never change during a solve.
#[derive(Debug, Clone)]
pub struct Likelihood {
    pub a: DMatrix<f64>,
    pub noise_var: f64,
    /// `AᵀY`, one column per measurement vector.
    pub aty: DMatrix<f64>,
    /// `AᵀA`, present only when the dense path is used.
    pub gram: Option<DMatrix<f64>>,
    pub woodbury: bool,
}

impl Likelihood {
    pub fn new(problem: &MmvProblem, noise_var: f64, path: JointPath) -> Self {
        let woodbury = match path {
            JointPath::Auto => problem.n() < problem.d(),
            JointPath::Woodbury => true,
            JointPath::Direct => false,
        };
        let at = problem.a.transpose();
        Likelihood {
            a: problem.a.clone(),
            noise_var,
            aty: &at * &problem.y,
            gram: (!woodbury).then(|| &at * &problem.a),
            woodbury,
        }
    }
}

/// Per-column `x_t` posteriors under the current spike-and-slab sites.
pub fn recompute_x(lik: &Likelihood, sites: &Sites, exec: Execution) -> Result<Vec<GaussianNd>> {
    par::try_map_range(exec, sites.t(), |t| {
        let prec: Vec<f64> = sites.f2.precision.column(t).iter().copied().collect();
        let h: Vec<f64> = sites.f2.precision_mean.column(t).iter().copied().collect();
        let proj: Vec<f64> = lik.aty.column(t).iter().copied().collect();
        match &lik.gram {
            Some(g) if !lik.woodbury => direct_posterior(g, lik.noise_var, &prec, &h, &proj),
            _ => woodbury_posterior(&lik.a, lik.noise_var, &prec, &h, &proj),
        }
    })
}

/// `p(z[i,t] = 1)` under the approximation: the normalised product of both
/// Bernoulli site parts.
pub fn support_probabilities(sites: &Sites) -> DMatrix<f64> {
    sites.f2_prob.zip_map(&sites.f3_prob, combine_bernoulli)
}

/// Per-column `γ_t` posteriors: probit sites plus both chain messages.
pub fn recompute_gamma(sites: &Sites, exec: Execution) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    gamma_marginals(sites, exec)
}

pub(crate) fn stack_means<'a>(d: usize, means: impl ExactSizeIterator<Item = &'a DVector<f64>>) -> DMatrix<f64> {
    let cols: Vec<&DVector<f64>> = means.collect();
    DMatrix::from_fn(d, cols.len(), |i, t| cols[t][i])
}

/// The approximate posterior returned by the solver.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub x_mean: DMatrix<f64>,
    pub x_cov: Vec<DMatrix<f64>>,
    pub support_prob: DMatrix<f64>,
    pub gamma_mean: DMatrix<f64>,
    pub gamma_cov: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub max_delta_trace: Vec<f64>,
    pub diagnostics: Vec<IterationRecord>,
    /// Site parameters behind this iterate.
    pub sites: Sites,
}

impl Posterior {
    /// `[support_prob > 0.5]`.
    pub fn map_support(&self) -> DMatrix<u8> {
        self.support_prob.map(|p| (p > crate::metrics::MAP_THRESHOLD) as u8)
    }
}

/// Every joint quantity recomputed from scratch.
pub fn recompute_joint(
    lik: &Likelihood,
    sites: &Sites,
    exec: Execution,
) -> Result<(Vec<GaussianNd>, DMatrix<f64>, Vec<(DVector<f64>, DMatrix<f64>)>)> {
    let xs = recompute_x(lik, sites, exec)?;
    let gammas = recompute_gamma(sites, exec)?;
    Ok((xs, support_probabilities(sites), gammas))
}
