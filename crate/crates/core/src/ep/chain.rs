//! Exact Gaussian message passing along the latent Gauss–Markov chain.
//!
//! Each transition factor `N(γ_t | (1−α)μ₀ + αγ_{t−1}, βΣ₀)` couples two
//! neighbouring columns, so its site is kept as a pair of messages: one
//! forward into `γ_t` and one backward into `γ_{t−1}`. Backward messages are
//! carried in natural form because they are flat at the end of the chain.
//! Neither recursion inverts `βΣ₀`, so the `β = 0` copy chain is handled
//! exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::{lu_solve, spd_inverse, symmetrize, NaturalGaussianNd};
use crate::par::{self, Execution};
use crate::prior::PriorConfig;

use super::sites::Sites;

/// Chain hyperparameters with the factorisations reused every sweep.
#[derive(Debug, Clone)]
pub struct ChainPrior {
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    /// `N(μ₀, Σ₀)` in natural form.
    pub initial: NaturalGaussianNd,
    pub alpha: f64,
    pub beta: f64,
}

impl ChainPrior {
    pub fn new(cfg: &PriorConfig) -> Result<Self> {
        cfg.validate()?;
        let sigma0 = cfg.covariance()?;
        let prec = spd_inverse(&sigma0)?;
        let h = &prec * &cfg.mu0;
        Ok(ChainPrior {
            mu0: cfg.mu0.clone(),
            sigma0,
            initial: NaturalGaussianNd::new(h, prec)?,
            alpha: cfg.alpha,
            beta: cfg.beta,
        })
    }

    pub fn d(&self) -> usize {
        self.mu0.len()
    }

    /// The columns decouple: every forward message is the innovation
    /// distribution and every backward message is flat.
    fn is_memoryless(&self) -> bool {
        self.alpha == 0.0
    }
}

fn with_diagonal(msg: &NaturalGaussianNd, sites: &Sites, t: usize) -> NaturalGaussianNd {
    let mut out = msg.clone();
    for i in 0..msg.dim() {
        out.precision[(i, i)] += sites.f3.precision[(i, t)];
        out.precision_mean[i] += sites.f3.precision_mean[(i, t)];
    }
    out
}

/// Forward messages `fwd[t]`, `t = 0..T`.
fn forward_pass(sites: &Sites, chain: &ChainPrior) -> Result<Vec<NaturalGaussianNd>> {
    let t_len = sites.t();
    let mut fwd = Vec::with_capacity(t_len);
    fwd.push(chain.initial.clone());
    if chain.is_memoryless() {
        let innov = NaturalGaussianNd {
            precision_mean: &chain.initial.precision_mean / chain.beta,
            precision: &chain.initial.precision / chain.beta,
        };
        fwd.extend(std::iter::repeat_n(innov, t_len.saturating_sub(1)));
        return Ok(fwd);
    }
    let a = chain.alpha;
    for t in 1..t_len {
        let filtered = with_diagonal(&fwd[t - 1], sites, t - 1);
        if chain.beta == 0.0 {
            // Deterministic transition: an affine image of the filtered belief.
            let filt_mean = spd_inverse(&filtered.precision)? * &filtered.precision_mean;
            let pred_mean = &chain.mu0 * (1.0 - a) + filt_mean * a;
            let pred_prec = filtered.precision / (a * a);
            let h = &pred_prec * pred_mean;
            fwd.push(NaturalGaussianNd {
                precision_mean: h,
                precision: pred_prec,
            });
            continue;
        }
        let filt_cov = spd_inverse(&filtered.precision)?;
        let filt_mean = &filt_cov * &filtered.precision_mean;

        let pred_mean = &chain.mu0 * (1.0 - a) + filt_mean * a;
        let pred_cov = filt_cov * (a * a) + &chain.sigma0 * chain.beta;
        let pred_prec = spd_inverse(&pred_cov)?;
        let h = &pred_prec * pred_mean;
        fwd.push(NaturalGaussianNd {
            precision_mean: h,
            precision: pred_prec,
        });
    }
    Ok(fwd)
}

/// Backward messages `bwd[t]`, `t = 0..T`.
fn backward_pass(sites: &Sites, chain: &ChainPrior) -> Result<Vec<NaturalGaussianNd>> {
    let t_len = sites.t();
    let d = chain.d();
    let mut bwd = vec![NaturalGaussianNd::vacuous(d); t_len];
    if chain.is_memoryless() {
        return Ok(bwd);
    }
    let a = chain.alpha;
    let offset = &chain.mu0 * (1.0 - a);
    let q = &chain.sigma0 * chain.beta;
    for t in (0..t_len.saturating_sub(1)).rev() {
        // Evidence from column t+1 onwards, as a function of γ_{t+1}.
        let later = with_diagonal(&bwd[t + 1], sites, t + 1);
        if later.is_vacuous() {
            continue;
        }
        // Integrating γ_{t+1} against N(γ_{t+1} | c, Q) leaves, as a function
        // of c, precision (I + JQ)⁻¹J and precision-mean (I + JQ)⁻¹h.
        let mut m = &later.precision * &q;
        for i in 0..d {
            m[(i, i)] += 1.0;
        }
        let mut rhs = DMatrix::zeros(d, d + 1);
        rhs.view_mut((0, 0), (d, d)).copy_from(&later.precision);
        rhs.set_column(d, &later.precision_mean);
        let sol = lu_solve(&m, &rhs).ok_or_else(|| Error::Numerical(format!("singular backward recursion at t = {t}")))?;
        let mut jc = sol.view((0, 0), (d, d)).into_owned();
        symmetrize(&mut jc);
        let hc = sol.column(d).into_owned();
        // Substitute c = (1−α)μ₀ + αγ_t.
        let h = (&hc - &jc * &offset) * a;
        bwd[t] = NaturalGaussianNd {
            precision_mean: h,
            precision: jc * (a * a),
        };
    }
    Ok(bwd)
}

/// Recomputes every chain message from the current probit sites: one forward
/// and one backward sweep, `O(T D³)`.
pub fn update_f4_chain(sites: &mut Sites, chain: &ChainPrior, exec: Execution) -> Result<()> {
    let (fwd, bwd) = if exec.is_parallel() {
        join(|| forward_pass(sites, chain), || backward_pass(sites, chain))
    } else {
        (forward_pass(sites, chain), backward_pass(sites, chain))
    };
    sites.fwd = fwd?;
    sites.bwd = bwd?;
    Ok(())
}

#[cfg(feature = "parallel")]
fn join<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn join<A, B>(a: impl FnOnce() -> A, b: impl FnOnce() -> B) -> (A, B) {
    (a(), b())
}

/// Marginal moments of each `γ_t`: probit sites times both chain messages.
pub fn gamma_marginals(sites: &Sites, exec: Execution) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    par::try_map_range(exec, sites.t(), |t| {
        let mut nat = with_diagonal(&sites.fwd[t], sites, t).product(&sites.bwd[t]);
        symmetrize(&mut nat.precision);
        let g = nat.to_moments()?;
        Ok((g.mean, g.cov))
    })
}
