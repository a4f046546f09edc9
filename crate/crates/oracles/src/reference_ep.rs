//! Reference EP implementations for the two limiting priors, written
//! without the chain machinery:
//!
//! * [`independent_spike_slab`]: every `z[i, t]` has a fixed prior inclusion
//!   probability; there is no latent field at all.
//! * [`joint_sparsity`]: one latent vector shared by all columns, whose
//!   Gaussian approximation is the prior times every column's probit site.
//!
//! The posterior over `x_t` is computed by direct dense inversion. Site
//! bookkeeping (damping, clamping, skipping) follows the production solver's
//! documented policy so the two can be compared to tight tolerances.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

const PROB_EPS: f64 = 1e-10;
const TILTED_VAR_FLOOR: f64 = 1e-12;
const FLAT_SITE_ROUNDOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct RefOptions {
    pub damping: f64,
    pub iterations: usize,
    pub min_site_var: f64,
}

#[derive(Debug, Clone)]
pub struct RefResult {
    pub x_mean: DMatrix<f64>,
    pub support: DMatrix<f64>,
    pub gamma_mean: Option<DVector<f64>>,
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn npdf(x: f64, m: f64, v: f64) -> f64 {
    Normal::new(m, v.sqrt()).unwrap().pdf(x)
}

fn combine(a: f64, b: f64) -> f64 {
    let (a, b) = (clamp(a), clamp(b));
    a * b / (a * b + (1.0 - a) * (1.0 - b))
}

fn spike_slab(m: f64, v: f64, p: f64, tau: f64) -> (f64, f64, f64) {
    let w1 = p * npdf(0.0, m, v + tau);
    let w0 = (1.0 - p) * npdf(0.0, m, v);
    let pi = w1 / (w1 + w0);
    let m1 = m * tau / (v + tau);
    let v1 = v * tau / (v + tau);
    let mean = pi * m1;
    (mean, pi * (v1 + m1 * m1) - mean * mean, pi)
}

fn probit_moments(mu: f64, var: f64) -> (f64, f64, f64) {
    let s = (1.0 + var).sqrt();
    let u = mu / s;
    let std = Normal::standard();
    let z = std.cdf(u);
    let r = std.pdf(u) / z;
    (z, mu + var * r / s, var - var * var * r * (u + r) / (1.0 + var))
}

fn bernoulli_probit(mu: f64, var: f64, q: f64) -> (f64, f64, f64) {
    let (z1, m1, v1) = probit_moments(mu, var);
    let (z0, m0n, v0) = probit_moments(-mu, var);
    let m0 = -m0n;
    let w1 = q * z1;
    let w0 = (1.0 - q) * z0;
    let pi = w1 / (w1 + w0);
    let mean = pi * m1 + (1.0 - pi) * m0;
    let second = pi * (v1 + m1 * m1) + (1.0 - pi) * (v0 + m0 * m0);
    (mean, second - mean * mean, pi)
}

/// Diagonal Gaussian site in natural form plus a Bernoulli part in log-odds.
#[derive(Clone)]
struct SiteGrid {
    prec: DMatrix<f64>,
    h: DMatrix<f64>,
    logit: DMatrix<f64>,
}

struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn x_posterior(a: &DMatrix<f64>, y: &DMatrix<f64>, noise: f64, f2: &SiteGrid) -> Vec<Gaussian> {
    let d = a.ncols();
    let gram = a.transpose() * a / noise;
    let aty = a.transpose() * y / noise;
    (0..y.ncols())
        .map(|t| {
            let mut lam = gram.clone();
            for i in 0..d {
                lam[(i, i)] += f2.prec[(i, t)];
            }
            let cov = lam.try_inverse().expect("x precision invertible");
            let h = DVector::from_fn(d, |i, _| aty[(i, t)] + f2.h[(i, t)]);
            Gaussian { mean: &cov * h, cov }
        })
        .collect()
}

/// Applies one damped natural-parameter update; returns false if skipped.
#[allow(clippy::too_many_arguments)]
fn gaussian_site_update(
    site_prec: &mut f64,
    site_h: &mut f64,
    cav_prec: f64,
    cav_mean: f64,
    tilt_mean: f64,
    tilt_var: f64,
    damping: f64,
    max_prec: f64,
    allow_zero: bool,
) -> bool {
    let tv = tilt_var.max(TILTED_VAR_FLOOR);
    let mut np = 1.0 / tv - cav_prec;
    let mut nh = tilt_mean / tv - cav_mean * cav_prec;
    if allow_zero && np < 0.0 && np >= -FLAT_SITE_ROUNDOFF * cav_prec {
        np = 0.0;
    }
    let ok = if allow_zero { np >= 0.0 } else { np > 0.0 };
    if !ok || !np.is_finite() || !nh.is_finite() {
        return false;
    }
    if np > max_prec {
        nh *= max_prec / np;
        np = max_prec;
    }
    *site_prec = damping * np + (1.0 - damping) * *site_prec;
    *site_h = damping * nh + (1.0 - damping) * *site_h;
    true
}

fn f2_sweep(
    xs: &[Gaussian],
    f2: &SiteGrid,
    p3: &DMatrix<f64>,
    tau: f64,
    opts: &RefOptions,
) -> SiteGrid {
    let mut out = f2.clone();
    let (d, t_len) = f2.prec.shape();
    for t in 0..t_len {
        for i in 0..d {
            let v = xs[t].cov[(i, i)];
            let m = xs[t].mean[i];
            let cav_prec = 1.0 / v - f2.prec[(i, t)];
            if cav_prec <= 0.0 {
                continue;
            }
            let cav_var = 1.0 / cav_prec;
            let cav_mean = cav_var * (m / v - f2.h[(i, t)]);
            let q = clamp(p3[(i, t)]);
            let (tm, tv, pi) = spike_slab(cav_mean, cav_var, q, tau);
            gaussian_site_update(
                &mut out.prec[(i, t)],
                &mut out.h[(i, t)],
                cav_prec,
                cav_mean,
                tm,
                tv,
                opts.damping,
                1.0 / opts.min_site_var,
                false,
            );
            let nl = logit(clamp(pi)) - logit(q);
            let l = opts.damping * nl + (1.0 - opts.damping) * f2.logit[(i, t)];
            out.logit[(i, t)] = logit(clamp(sigmoid(l)));
        }
    }
    out
}

fn support(f2: &SiteGrid, p3: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(p3.nrows(), p3.ncols(), |i, t| {
        combine(sigmoid(f2.logit[(i, t)]), p3[(i, t)])
    })
}

fn stack_means(xs: &[Gaussian], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, xs.len(), |i, t| xs[t].mean[i])
}

fn init_f2(d: usize, t_len: usize, prior_p: &[f64], tau: f64) -> SiteGrid {
    SiteGrid {
        prec: DMatrix::from_fn(d, t_len, |i, _| 1.0 / (prior_p[i] * tau)),
        h: DMatrix::zeros(d, t_len),
        logit: DMatrix::zeros(d, t_len),
    }
}

/// Spike-and-slab EP with a fixed inclusion probability `p0[i]` per row.
pub fn independent_spike_slab(
    a: &DMatrix<f64>,
    y: &DMatrix<f64>,
    noise_var: f64,
    slab_var: f64,
    p0: &[f64],
    opts: &RefOptions,
) -> RefResult {
    let d = a.ncols();
    let t_len = y.ncols();
    let p3 = DMatrix::from_fn(d, t_len, |i, _| clamp(p0[i]));
    let mut f2 = init_f2(d, t_len, p0, slab_var);
    let mut xs = x_posterior(a, y, noise_var, &f2);
    for _ in 0..opts.iterations {
        f2 = f2_sweep(&xs, &f2, &p3, slab_var, opts);
        xs = x_posterior(a, y, noise_var, &f2);
    }
    RefResult {
        x_mean: stack_means(&xs, d),
        support: support(&f2, &p3),
        gamma_mean: None,
    }
}

/// EP under a single latent support field shared by every column.
pub fn joint_sparsity(
    a: &DMatrix<f64>,
    y: &DMatrix<f64>,
    noise_var: f64,
    slab_var: f64,
    mu0: &DVector<f64>,
    sigma0: &DMatrix<f64>,
    opts: &RefOptions,
) -> RefResult {
    let d = a.ncols();
    let t_len = y.ncols();
    let std = Normal::standard();
    let prior_p: Vec<f64> = (0..d)
        .map(|i| std.cdf(mu0[i] / (1.0 + sigma0[(i, i)]).sqrt()))
        .collect();
    let prior_prec = sigma0.clone().try_inverse().expect("prior covariance invertible");
    let prior_h = &prior_prec * mu0;

    let mut p3 = DMatrix::from_fn(d, t_len, |i, _| clamp(prior_p[i]));
    let mut f3 = SiteGrid {
        prec: DMatrix::zeros(d, t_len),
        h: DMatrix::zeros(d, t_len),
        logit: DMatrix::zeros(d, t_len),
    };
    let shared = |f3: &SiteGrid| {
        let mut lam = prior_prec.clone();
        let mut h = prior_h.clone();
        for t in 0..t_len {
            for i in 0..d {
                lam[(i, i)] += f3.prec[(i, t)];
                h[i] += f3.h[(i, t)];
            }
        }
        let cov = lam.try_inverse().expect("collapsed precision invertible");
        Gaussian { mean: &cov * h, cov }
    };

    let mut f2 = init_f2(d, t_len, &prior_p, slab_var);
    let mut xs = x_posterior(a, y, noise_var, &f2);
    let mut gamma = shared(&f3);
    for _ in 0..opts.iterations {
        f2 = f2_sweep(&xs, &f2, &p3, slab_var, opts);
        xs = x_posterior(a, y, noise_var, &f2);

        let old = f3.clone();
        for t in 0..t_len {
            for i in 0..d {
                let v = gamma.cov[(i, i)];
                let m = gamma.mean[i];
                let cav_prec = 1.0 / v - old.prec[(i, t)];
                if cav_prec <= 0.0 {
                    continue;
                }
                let cav_var = 1.0 / cav_prec;
                let cav_mean = cav_var * (m / v - old.h[(i, t)]);
                let q = clamp(sigmoid(f2.logit[(i, t)]));
                let (tm, tv, pi) = bernoulli_probit(cav_mean, cav_var, q);
                gaussian_site_update(
                    &mut f3.prec[(i, t)],
                    &mut f3.h[(i, t)],
                    cav_prec,
                    cav_mean,
                    tm,
                    tv,
                    opts.damping,
                    1.0 / opts.min_site_var,
                    true,
                );
                let nl = logit(clamp(pi)) - logit(q);
                let l = opts.damping * nl + (1.0 - opts.damping) * logit(p3[(i, t)]);
                p3[(i, t)] = clamp(sigmoid(l));
            }
        }
        gamma = shared(&f3);
    }
    RefResult {
        x_mean: stack_means(&xs, d),
        support: support(&f2, &p3),
        gamma_mean: Some(gamma.mean),
    }
}
