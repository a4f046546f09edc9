//! Exact Bayesian posterior for tiny instances by enumerating every support.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

/// Gauss–Markov chain prior on the latent support field.
#[derive(Debug, Clone)]
pub struct ChainPrior {
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
}

/// Monte Carlo estimate of `p(Z)` for every binary `D×T` support, averaging the
/// conditional probability `Π Φ(γ)^z (1 − Φ(γ))^(1−z)` over `samples` draws of
/// the chain. Entry `mask` has `z[i, t] = (mask >> (i + t·D)) & 1`.
pub fn support_prior_table(prior: &ChainPrior, t_len: usize, samples: usize, seed: u64) -> Vec<f64> {
    let d = prior.mu0.len();
    let bits = d * t_len;
    assert!(bits <= 20, "enumeration over 2^{bits} supports is too large");
    let chol = prior
        .sigma0
        .clone()
        .cholesky()
        .expect("prior covariance must be positive definite")
        .l();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let std = Normal::standard();
    let mut table = vec![0.0; 1 << bits];
    let mut scratch = vec![0.0; 1 << bits];
    let mut probs = vec![0.0; bits];
    let mut gamma_prev = DVector::zeros(d);

    for _ in 0..samples {
        for t in 0..t_len {
            let eps = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            let noise = &chol * eps;
            let g = if t == 0 {
                &prior.mu0 + noise
            } else {
                &prior.mu0 * (1.0 - prior.alpha) + &gamma_prev * prior.alpha + noise * prior.beta.sqrt()
            };
            for i in 0..d {
                probs[i + t * d] = std.cdf(g[i]);
            }
            gamma_prev = g;
        }
        scratch[0] = 1.0;
        let mut len = 1;
        for &p in &probs {
            for j in 0..len {
                let v = scratch[j];
                scratch[j] = v * (1.0 - p);
                scratch[j + len] = v * p;
            }
            len *= 2;
        }
        for (acc, v) in table.iter_mut().zip(&scratch) {
            *acc += v;
        }
    }
    for v in &mut table {
        *v /= samples as f64;
    }
    table
}

/// Posterior mean of `X` and posterior support marginals under the
/// spike-and-slab model with support prior `prior_table`.
pub fn posterior_by_enumeration(
    a: &DMatrix<f64>,
    y: &DMatrix<f64>,
    noise_var: f64,
    slab_var: f64,
    prior_table: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, d) = a.shape();
    let t_len = y.ncols();
    let bits = d * t_len;
    assert_eq!(prior_table.len(), 1 << bits);

    let mut log_w = Vec::with_capacity(prior_table.len());
    let mut means = Vec::with_capacity(prior_table.len());
    for (mask, &pz) in prior_table.iter().enumerate() {
        let mut lw = pz.ln();
        let mut xm = DMatrix::zeros(d, t_len);
        for t in 0..t_len {
            let active: Vec<usize> = (0..d).filter(|&i| mask >> (i + t * d) & 1 == 1).collect();
            let a_s = DMatrix::from_fn(n, active.len(), |r, c| a[(r, active[c])]);
            let c = &a_s * a_s.transpose() * slab_var + DMatrix::identity(n, n) * noise_var;
            let chol = c.clone().cholesky().expect("evidence covariance is PD");
            let yt = y.column(t).into_owned();
            let alpha = chol.solve(&yt);
            let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            lw += -0.5 * yt.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            let xs = a_s.transpose() * alpha * slab_var;
            for (k, &i) in active.iter().enumerate() {
                xm[(i, t)] = xs[k];
            }
        }
        log_w.push(lw);
        means.push(xm);
    }

    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut x_mean = DMatrix::zeros(d, t_len);
    let mut support = DMatrix::zeros(d, t_len);
    for (mask, (w, xm)) in weights.iter().zip(&means).enumerate() {
        let w = w / total;
        x_mean += xm * w;
        for t in 0..t_len {
            for i in 0..d {
                if mask >> (i + t * d) & 1 == 1 {
                    support[(i, t)] += w;
                }
            }
        }
    }
    (x_mean, support)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_table_sums_to_one_and_matches_marginal() {
        let prior = ChainPrior {
            mu0: DVector::from_element(2, 0.0),
            sigma0: DMatrix::identity(2, 2),
            alpha: 0.5,
            beta: 0.75,
        };
        let table = support_prior_table(&prior, 2, 20_000, 1);
        let s: f64 = table.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        // marginal of bit 0 should be Φ(0) = 0.5
        let m: f64 = table.iter().enumerate().filter(|(k, _)| k & 1 == 1).map(|(_, v)| v).sum();
        assert!((m - 0.5).abs() < 0.01);
    }

    #[test]
    fn single_coefficient_posterior() {
        // D = N = T = 1, A = 1: posterior mean is p(z=1|y)·y·τ/(τ+σ²).
        let a = DMatrix::from_element(1, 1, 1.0);
        let y = DMatrix::from_element(1, 1, 1.5);
        let (x, s) = posterior_by_enumeration(&a, &y, 0.5, 2.0, &[0.6, 0.4]);
        let n0 = (-(1.5f64 * 1.5) / (2.0 * 0.5)).exp() / (0.5f64).sqrt();
        let n1 = (-(1.5f64 * 1.5) / (2.0 * 2.5)).exp() / (2.5f64).sqrt();
        let p1 = 0.4 * n1 / (0.4 * n1 + 0.6 * n0);
        assert!((s[(0, 0)] - p1).abs() < 1e-12);
        assert!((x[(0, 0)] - p1 * 1.5 * 2.0 / 2.5).abs() < 1e-12);
    }
}
