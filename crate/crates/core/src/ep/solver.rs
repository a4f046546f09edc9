use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{GaussianNd, NaturalGaussianNd};
use crate::moments::clamp_prob;
use crate::prior::marginal_activation_prob;
use crate::par::Execution;
use crate::prior::{MmvProblem, PriorConfig};

use super::chain::{update_f4_chain, ChainPrior};
use super::joint::{recompute_gamma, recompute_x, stack_means, support_probabilities, Likelihood, Posterior};
use super::sites::{GaussianSiteGrid, Sites};
use super::updates::{update_f2_parallel, update_f3_parallel};
use super::SolverOptions;

/// One row of the per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub max_delta: f64,
    /// Sites whose Gaussian part was not refreshed (skipped or held) across
    /// the spike-and-slab and probit sweeps.
    pub skipped_sites: usize,
    pub wall_ms: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "iteration,max_delta,skipped_sites,wall_ms";

pub fn write_diagnostics_csv<W: Write>(w: &mut W, records: &[IterationRecord]) -> Result<()> {
    writeln!(w, "{DIAGNOSTICS_HEADER}")?;
    for r in records {
        writeln!(w, "{},{:e},{},{:.3}", r.iteration, r.max_delta, r.skipped_sites, r.wall_ms)?;
    }
    Ok(())
}

/// Starting point for the iterations.
///
/// The chain messages are primed with flat probit sites, so every `γ_t`
/// marginal is its prior marginal. The probit sites' Bernoulli parts carry the
/// resulting activation probabilities `Φ(μ/√(1+σ²))`, and the spike-and-slab
/// sites start as zero-mean Gaussians with the prior variance `p·τ₀` of `x`
/// (flat sites would leave the `x` posterior improper whenever `N < D`). Their
/// Bernoulli parts start neutral.
pub fn init_sites(cfg: &PriorConfig, chain: &ChainPrior, exec: Execution) -> Result<Sites> {
    let (d, t) = (cfg.d, cfg.t);
    let mut sites = Sites {
        f2: GaussianSiteGrid::inactive(d, t),
        f2_prob: DMatrix::from_element(d, t, 0.5),
        f3: GaussianSiteGrid::inactive(d, t),
        f3_prob: DMatrix::from_element(d, t, 0.5),
        fwd: vec![NaturalGaussianNd::vacuous(d); t],
        bwd: vec![NaturalGaussianNd::vacuous(d); t],
    };
    update_f4_chain(&mut sites, chain, exec)?;
    let gammas = recompute_gamma(&sites, exec)?;
    for (ti, (mean, cov)) in gammas.iter().enumerate() {
        for i in 0..d {
            let p = marginal_activation_prob(mean[i], cov[(i, i)]);
            sites.f3_prob[(i, ti)] = clamp_prob(p);
            sites.f2.precision[(i, ti)] = 1.0 / (p * cfg.slab_var);
        }
    }
    Ok(sites)
}

struct Iterate {
    xs: Vec<GaussianNd>,
    support: DMatrix<f64>,
    gammas: Vec<(DVector<f64>, DMatrix<f64>)>,
    sites: Sites,
}

impl Iterate {
    fn x_mean(&self) -> DMatrix<f64> {
        stack_means(self.support.nrows(), self.xs.iter().map(|g| &g.mean))
    }

    fn into_posterior(self, iterations: usize, converged: bool, records: Vec<IterationRecord>) -> Posterior {
        let d = self.support.nrows();
        let x_mean = self.x_mean();
        let gamma_mean = stack_means(d, self.gammas.iter().map(|g| &g.0));
        Posterior {
            x_mean,
            x_cov: self.xs.into_iter().map(|g| g.cov).collect(),
            support_prob: self.support,
            gamma_mean,
            gamma_cov: self.gammas.into_iter().map(|g| g.1).collect(),
            iterations,
            converged,
            max_delta_trace: records.iter().map(|r| r.max_delta).collect(),
            diagnostics: records,
            sites: self.sites,
        }
    }
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs EP until the largest change in `x_mean` and `support_prob` between
/// iterations is at most `opts.tol`, or for `opts.max_iters` iterations.
///
/// One iteration: spike-and-slab sweep, `x` joint and support, probit sweep,
/// support, chain messages, `γ` joint. The `γ` joint between the probit sweep
/// and the chain update is not materialised: nothing reads it, and the chain
/// update recomputes every message from the probit sites alone.
pub fn solve(problem: &MmvProblem, cfg: &PriorConfig, opts: &SolverOptions) -> Result<Posterior> {
    cfg.validate()?;
    opts.validate()?;
    if problem.d() != cfg.d || problem.t() != cfg.t {
        return Err(Error::dim(format!(
            "problem is D = {}, T = {} but the prior expects D = {}, T = {}",
            problem.d(),
            problem.t(),
            cfg.d,
            cfg.t
        )));
    }
    let exec = opts.execution;
    let chain = ChainPrior::new(cfg)?;
    let lik = Likelihood::new(problem, cfg.noise_var, opts.joint_path);

    let sites = init_sites(cfg, &chain, exec)?;
    let mut cur = Iterate {
        xs: recompute_x(&lik, &sites, exec)?,
        support: support_probabilities(&sites),
        gammas: recompute_gamma(&sites, exec)?,
        sites,
    };
    let mut prev_x = cur.x_mean();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(f64, Iterate)> = None;

    for it in 1..=opts.max_iters {
        let start = Instant::now();
        let s2 = update_f2_parallel(&mut cur.sites, &cur.xs, cfg.slab_var, opts)?;
        cur.xs = recompute_x(&lik, &cur.sites, exec)?;
        let s3 = update_f3_parallel(&mut cur.sites, &cur.gammas, opts)?;
        let support = support_probabilities(&cur.sites);
        update_f4_chain(&mut cur.sites, &chain, exec)?;
        cur.gammas = recompute_gamma(&cur.sites, exec)?;

        let x = cur.x_mean();
        let delta = max_abs_diff(&x, &prev_x).max(max_abs_diff(&support, &cur.support));
        if !delta.is_finite() {
            return Err(Error::Numerical(format!("non-finite update at iteration {it}")));
        }
        cur.support = support;
        prev_x = x;
        records.push(IterationRecord {
            iteration: it,
            max_delta: delta,
            skipped_sites: s2.not_updated() + s3.not_updated(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        if delta <= opts.tol {
            return Ok(cur.into_posterior(it, true, records));
        }
        if opts.keep_best_iterate && best.as_ref().is_none_or(|(b, _)| delta < *b) {
            best = Some((
                delta,
                Iterate {
                    xs: cur.xs.clone(),
                    support: cur.support.clone(),
                    gammas: cur.gammas.clone(),
                    sites: cur.sites.clone(),
                },
            ));
        }
    }
    let n = records.len();
    Ok(match best {
        Some((_, b)) => b.into_posterior(n, false, records),
        None => cur.into_posterior(n, false, records),
    })
}
