//! Closed-form tilted moments used by the moment-matching steps.
//!
//! Zeroth moments are returned as logarithms. Probabilities passed in are
//! allowed to sit exactly at 0 or 1 so that the single-component limits are
//! reproduced exactly; callers that need the open interval use [`clamp_prob`].

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// Lower clamp for probabilities handed to link and site computations.
pub const PROB_EPS: f64 = 1e-10;
/// Probit arguments are clamped to `[-PROBIT_ARG_MAX, PROBIT_ARG_MAX]`.
pub const PROBIT_ARG_MAX: f64 = 8.0;
/// Below this argument the inverse Mills ratio switches to a continued fraction.
const MILLS_SWITCH: f64 = -6.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1d {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian1d {
    pub fn new(mean: f64, var: f64) -> Self {
        debug_assert!(var > 0.0, "Gaussian1d variance must be positive, got {var}");
        Gaussian1d { mean, var }
    }
}

/// Moments of a tilted distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    /// Log of the normalising constant.
    pub log_norm: f64,
    pub mean: f64,
    pub var: f64,
    /// Tilted probability of `z = 1`, where a binary variable is involved.
    pub bernoulli_prob: f64,
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `log N(x | mean, var)`.
pub fn log_normal_density(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * r * r / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Standard normal CDF, with the argument clamped to `[-8, 8]`.
pub fn probit(x: f64) -> f64 {
    let x = x.clamp(-PROBIT_ARG_MAX, PROBIT_ARG_MAX);
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`probit`]; the result lies in `[-8, 8]`.
///
/// An `erfc⁻¹` starting point is polished by Newton steps on the tail that
/// `p` lies in, which keeps full relative precision near 0 and 1.
pub fn probit_inverse(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p <= probit(-PROBIT_ARG_MAX) {
        return -PROBIT_ARG_MAX;
    }
    if p >= probit(PROBIT_ARG_MAX) {
        return PROBIT_ARG_MAX;
    }
    // Work on the lower tail: Φ(x) = q with q = min(p, 1 − p), x ≤ 0.
    let upper = p > 0.5;
    let q = if upper { 1.0 - p } else { p };
    let mut x = -SQRT_2 * erfc_inv(2.0 * q);
    for _ in 0..3 {
        let f = 0.5 * erfc(-x * FRAC_1_SQRT_2) - q;
        let dens = normal_pdf(x);
        if dens == 0.0 {
            break;
        }
        x -= f / dens;
    }
    let x = if upper { -x } else { x };
    x.clamp(-PROBIT_ARG_MAX, PROBIT_ARG_MAX)
}

/// Continued fraction for the Mills ratio `(1 − Φ(x)) / N(x)`, `x > 0`.
fn mills_ratio_cf(x: f64) -> f64 {
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    1.0 / tail
}

/// Returns `(log Φ(u), N(u)/Φ(u))` without clamping `u`.
fn log_cdf_and_inv_mills(u: f64) -> (f64, f64) {
    if u < MILLS_SWITCH {
        let r = mills_ratio_cf(-u);
        let log_pdf = -0.5 * u * u - LN_SQRT_2PI;
        (log_pdf + r.ln(), 1.0 / r)
    } else {
        let cdf = 0.5 * erfc(-u * FRAC_1_SQRT_2);
        (cdf.ln(), normal_pdf(u) / cdf)
    }
}

/// Moments of `Φ(γ)·N(γ | μ, σ²)`.
pub fn probit_gaussian_moments(cavity: Gaussian1d) -> TiltedMoments {
    let Gaussian1d { mean: mu, var } = cavity;
    let denom = 1.0 + var;
    let s = denom.sqrt();
    let u = mu / s;
    let (log_norm, ratio) = log_cdf_and_inv_mills(u);
    let mean = mu + var * ratio / s;
    let shrink = var * ratio * (u + ratio) / denom;
    let var_out = (var * (1.0 - shrink)).max(0.0);
    TiltedMoments {
        log_norm,
        mean,
        var: var_out,
        bernoulli_prob: log_norm.exp(),
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Moments over `x` of `[(1 − z)δ(x) + z·N(x | 0, slab_var)]·Ber(z | p)·N(x | m, v)`
/// summed over `z`.
pub fn spike_slab_tilted_moments(cavity_x: Gaussian1d, cavity_p: f64, slab_var: f64) -> TiltedMoments {
    let Gaussian1d { mean: m, var: v } = cavity_x;
    let p = cavity_p.clamp(0.0, 1.0);
    let log_slab = p.ln() + log_normal_density(0.0, m, v + slab_var);
    let log_spike = (1.0 - p).ln() + log_normal_density(0.0, m, v);
    let log_norm = log_add(log_slab, log_spike);
    let prob = (log_slab - log_norm).exp();

    let slab_mean = m * slab_var / (v + slab_var);
    let slab_var_post = v * slab_var / (v + slab_var);
    let mean = prob * slab_mean;
    let var = prob * slab_var_post + prob * (1.0 - prob) * slab_mean * slab_mean;
    TiltedMoments {
        log_norm,
        mean,
        var,
        bernoulli_prob: prob,
    }
}

/// Moments over `γ` of `Σ_z Ber(z | q)·Ber(z | Φ(γ))·N(γ | μ, σ²)`.
pub fn bernoulli_probit_tilted_moments(cavity_gamma: Gaussian1d, cavity_q: f64) -> TiltedMoments {
    let q = cavity_q.clamp(0.0, 1.0);
    let on = probit_gaussian_moments(cavity_gamma);
    let flipped = probit_gaussian_moments(Gaussian1d {
        mean: -cavity_gamma.mean,
        var: cavity_gamma.var,
    });
    let off_mean = -flipped.mean;
    let off_var = flipped.var;

    let log_on = q.ln() + on.log_norm;
    let log_off = (1.0 - q).ln() + flipped.log_norm;
    let log_norm = log_add(log_on, log_off);
    let prob = (log_on - log_norm).exp();

    let mean = prob * on.mean + (1.0 - prob) * off_mean;
    let gap = on.mean - off_mean;
    let var = prob * on.var + (1.0 - prob) * off_var + prob * (1.0 - prob) * gap * gap;
    TiltedMoments {
        log_norm,
        mean,
        var,
        bernoulli_prob: prob,
    }
}

/// Normalised product of two Bernoulli distributions, given by their success
/// probabilities.
pub fn combine_bernoulli(p2: f64, p3: f64) -> f64 {
    let a = clamp_prob(p2);
    let b = clamp_prob(p3);
    let on = a * b;
    on / (on + (1.0 - a) * (1.0 - b))
}
