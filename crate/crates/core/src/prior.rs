//! The spatio-temporal spike-and-slab prior: configuration, samplers, and the
//! synthetic problem generator.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{build_covariance, robust_cholesky, KernelSpec};
use crate::moments::{probit, probit_inverse};

/// Tolerance on `α² + β = 1` for stationary configurations.
pub const STATIONARITY_TOL: f64 = 1e-12;

/// Hyperparameters of the spatio-temporal prior and the noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub d: usize,
    pub t: usize,
    /// Prior mean of every latent column.
    pub mu0: DVector<f64>,
    pub kernel: KernelSpec,
    /// Temporal correlation of the latent chain.
    pub alpha: f64,
    /// Innovation scale of the latent chain.
    pub beta: f64,
    /// Variance of the Gaussian slab.
    pub slab_var: f64,
    pub noise_var: f64,
    /// Enforce `α² + β = 1` during validation.
    pub stationary: bool,
}

impl PriorConfig {
    /// A stationary configuration (`β = 1 − α²`) with a constant prior mean.
    pub fn stationary(
        d: usize,
        t: usize,
        mu0: f64,
        kernel: KernelSpec,
        alpha: f64,
        slab_var: f64,
        noise_var: f64,
    ) -> Self {
        PriorConfig {
            d,
            t,
            mu0: DVector::from_element(d, mu0),
            kernel,
            alpha,
            beta: 1.0 - alpha * alpha,
            slab_var,
            noise_var,
            stationary: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t == 0 {
            return Err(Error::config("D and T must be positive"));
        }
        if self.mu0.len() != self.d {
            return Err(Error::dim(format!(
                "mu0 has length {} but D = {}",
                self.mu0.len(),
                self.d
            )));
        }
        self.kernel.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::config(format!("beta must be non-negative, got {}", self.beta)));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::config("alpha and beta cannot both be zero"));
        }
        if self.stationary && (self.alpha * self.alpha + self.beta - 1.0).abs() > STATIONARITY_TOL {
            return Err(Error::config(format!(
                "stationarity requires alpha^2 + beta = 1, got {}",
                self.alpha * self.alpha + self.beta
            )));
        }
        if !(self.slab_var.is_finite() && self.slab_var > 0.0) {
            return Err(Error::config("slab variance must be positive"));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return Err(Error::config("noise variance must be positive"));
        }
        Ok(())
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        build_covariance(&self.kernel, self.d)
    }

    /// `p(z_i = 1)` under the prior, per coefficient.
    pub fn activation_probs(&self) -> Vec<f64> {
        (0..self.d)
            .map(|i| marginal_activation_prob(self.mu0[i], self.kernel.entry(i, i)))
            .collect()
    }
}

/// Sampled latent variables of one synthetic instance.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub gamma: DMatrix<f64>,
    pub z: DMatrix<u8>,
    pub x: DMatrix<f64>,
    pub e: DMatrix<f64>,
}

/// `Y = A X + E` with known noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct MmvProblem {
    pub a: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub noise_var: f64,
}

impl MmvProblem {
    pub fn new(a: DMatrix<f64>, y: DMatrix<f64>, noise_var: f64) -> Result<Self> {
        if a.nrows() != y.nrows() {
            return Err(Error::dim(format!(
                "A has {} rows but Y has {}",
                a.nrows(),
                y.nrows()
            )));
        }
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::config("noise variance must be positive"));
        }
        Ok(MmvProblem { a, y, noise_var })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    pub fn t(&self) -> usize {
        self.y.ncols()
    }
}

/// Construction of the forward matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForwardKind {
    /// `A_ij ~ N(0, 1/N)` independently.
    GaussianIid,
    /// Rows i.i.d. `N(0, C/N)` with `C_ij = r^|i−j|`.
    ColumnCorrelated { r: f64 },
}

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// `Φ(μ / √(1 + Σ_ii))`.
pub fn marginal_activation_prob(mu: f64, sigma_ii: f64) -> f64 {
    probit(mu / (1.0 + sigma_ii).sqrt())
}

/// Constant prior mean giving `target_active` expected non-zeros per column.
pub fn calibrate_mu0_for_sparsity(target_active: f64, d: usize, sigma_ii: f64) -> Result<f64> {
    let dd = d as f64;
    if !(target_active > 0.0 && target_active < dd) {
        return Err(Error::config(format!(
            "target active count must lie in (0, {d}), got {target_active}"
        )));
    }
    Ok((1.0 + sigma_ii).sqrt() * probit_inverse(target_active / dd))
}

/// Scale `v_t` of the prior covariance of `γ_t`, i.e. `Cov(γ_t) = v_t·Σ₀`,
/// for `t = 1..=t_len`: `v_1 = 1`, `v_t = α²·v_{t−1} + β`. Under stationarity
/// (`α² + β = 1`) every entry is 1.
pub fn marginal_variance_scales(alpha: f64, beta: f64, t_len: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(t_len);
    let mut cur = 1.0;
    for t in 0..t_len {
        if t > 0 {
            cur = alpha * alpha * cur + beta;
        }
        v.push(cur);
    }
    v
}

/// Draws the latent field column by column from the Gauss–Markov chain.
pub fn sample_gamma_chain_with<R: Rng + ?Sized>(cfg: &PriorConfig, rng: &mut R) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let sigma0 = cfg.covariance()?;
    let chol = robust_cholesky(&sigma0)?.factor.l();
    let d = cfg.d;
    let innovation = cfg.beta.sqrt();
    let mut gamma = DMatrix::zeros(d, cfg.t);
    for t in 0..cfg.t {
        let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = &chol * eps;
        for i in 0..d {
            gamma[(i, t)] = if t == 0 {
                cfg.mu0[i] + draw[i]
            } else {
                (1.0 - cfg.alpha) * cfg.mu0[i] + cfg.alpha * gamma[(i, t - 1)] + innovation * draw[i]
            };
        }
    }
    Ok(gamma)
}

pub fn sample_gamma_chain(cfg: &PriorConfig, seed: u64) -> Result<DMatrix<f64>> {
    sample_gamma_chain_with(cfg, &mut rng_from_seed(seed))
}

pub fn sample_support_with<R: Rng + ?Sized>(gamma: &DMatrix<f64>, rng: &mut R) -> DMatrix<u8> {
    DMatrix::from_fn(gamma.nrows(), gamma.ncols(), |i, t| {
        let u: f64 = rng.random();
        u8::from(u < probit(gamma[(i, t)]))
    })
}

pub fn sample_support(gamma: &DMatrix<f64>, seed: u64) -> DMatrix<u8> {
    sample_support_with(gamma, &mut rng_from_seed(seed))
}

/// Standard-normal coefficients on the support, zero elsewhere.
pub fn sample_coefficients<R: Rng + ?Sized>(z: &DMatrix<u8>, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(z.nrows(), z.ncols(), |i, t| {
        let v: f64 = rng.sample(StandardNormal);
        if z[(i, t)] == 1 {
            v
        } else {
            0.0
        }
    })
}

pub fn sample_forward_matrix<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    kind: ForwardKind,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::config("forward matrix dimensions must be positive"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    match kind {
        ForwardKind::GaussianIid => Ok(DMatrix::from_fn(n, d, |_, _| {
            scale * rng.sample::<f64, _>(StandardNormal)
        })),
        ForwardKind::ColumnCorrelated { r } => {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::config(format!("correlation r must lie in [0, 1), got {r}")));
            }
            // Each row is a stationary AR(1) sequence over the column index,
            // whose covariance is exactly r^|i−j|.
            let innov = (1.0 - r * r).sqrt();
            let mut a = DMatrix::zeros(n, d);
            for row in 0..n {
                let mut prev = 0.0;
                for col in 0..d {
                    let e: f64 = rng.sample(StandardNormal);
                    let v = if col == 0 { e } else { r * prev + innov * e };
                    a[(row, col)] = scale * v;
                    prev = v;
                }
            }
            Ok(a)
        }
    }
}

/// Measurement noise rescaled so that `10·log10(‖AX‖²/‖E‖²) = snr_db` exactly.
/// An infinite `snr_db` yields `E = 0`. Returns `(E, implied noise variance)`.
pub fn sample_noise_at_snr<R: Rng + ?Sized>(
    signal: &DMatrix<f64>,
    snr_db: f64,
    rng: &mut R,
) -> Result<(DMatrix<f64>, f64)> {
    let (n, t) = signal.shape();
    let power = signal.norm_squared();
    if power == 0.0 {
        return Err(Error::config("signal is identically zero; SNR is undefined"));
    }
    if snr_db.is_nan() {
        return Err(Error::config("SNR must not be NaN"));
    }
    if snr_db == f64::INFINITY {
        // Noise-free data; the solver still needs a positive noise level.
        return Ok((DMatrix::zeros(n, t), NOISELESS_VAR_FRACTION * power / (n * t) as f64));
    }
    let raw = DMatrix::from_fn(n, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let target = power / 10f64.powf(snr_db / 10.0);
    let e = &raw * (target / raw.norm_squared()).sqrt();
    let noise_var = e.norm_squared() / (n * t) as f64;
    Ok((e, noise_var))
}

/// Noise variance reported for noise-free instances, relative to the mean
/// signal power per entry.
pub const NOISELESS_VAR_FRACTION: f64 = 1e-12;

/// Builds a problem from an already-sampled support.
pub fn problem_from_support<R: Rng + ?Sized>(
    gamma: DMatrix<f64>,
    z: DMatrix<u8>,
    n: usize,
    kind: ForwardKind,
    snr_db: f64,
    rng: &mut R,
) -> Result<(MmvProblem, GroundTruth)> {
    let x = sample_coefficients(&z, rng);
    let a = sample_forward_matrix(n, z.nrows(), kind, rng)?;
    let signal = &a * &x;
    let (e, noise_var) = sample_noise_at_snr(&signal, snr_db, rng)?;
    let y = signal + &e;
    Ok((MmvProblem { a, y, noise_var }, GroundTruth { gamma, z, x, e }))
}

/// Samples a complete synthetic instance. An empty support is resampled once
/// (given the same latent field) before giving up.
pub fn sample_problem(
    cfg: &PriorConfig,
    n: usize,
    kind: ForwardKind,
    snr_db: f64,
    seed: u64,
) -> Result<(MmvProblem, GroundTruth)> {
    let mut rng = rng_from_seed(seed);
    let gamma = sample_gamma_chain_with(cfg, &mut rng)?;
    let mut z = sample_support_with(&gamma, &mut rng);
    if z.iter().all(|&v| v == 0) {
        z = sample_support_with(&gamma, &mut rng);
        if z.iter().all(|&v| v == 0) {
            return Err(Error::config("sampled support is empty twice; prior is too sparse"));
        }
    }
    problem_from_support(gamma, z, n, kind, snr_db, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(d: usize, t: usize, alpha: f64) -> PriorConfig {
        PriorConfig::stationary(d, t, 0.0, KernelSpec::squared_exponential(1.0, 2.0), alpha, 1.0, 0.1)
    }

    #[test]
    fn joint_sparsity_chain_is_constant() {
        let g = sample_gamma_chain(&cfg(6, 5, 1.0), 4).unwrap();
        for t in 1..5 {
            assert_eq!(g.column(t), g.column(0));
        }
    }

    #[test]
    fn independent_chain_columns_differ() {
        let g = sample_gamma_chain(&cfg(6, 5, 0.0), 4).unwrap();
        assert_ne!(g.column(1), g.column(0));
    }

    #[test]
    fn stationary_chain_monte_carlo() {
        let c = PriorConfig::stationary(3, 50, 0.4, KernelSpec::diagonal(1.5), 0.99, 1.0, 0.1);
        let n = 10_000;
        let mut rng = rng_from_seed(99);
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let g = sample_gamma_chain_with(&c, &mut rng).unwrap();
            for i in 0..3 {
                let v = g[(i, 49)];
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            let se = (1.5f64 / n as f64).sqrt();
            assert!((mean - 0.4).abs() < 4.0 * se, "mean {mean}");
            assert!((var / 1.5 - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn variance_scales() {
        for &alpha in &[0.0, 0.3, 0.9, 0.99, 1.0] {
            let v = marginal_variance_scales(alpha, 1.0 - alpha * alpha, 100);
            assert!(v.iter().all(|&x| x == 1.0), "alpha {alpha}: {v:?}");
        }
        let v = marginal_variance_scales(0.5, 1.0, 3);
        assert_eq!(v, vec![1.0, 1.25, 1.3125]);
    }

    #[test]
    fn saturated_support() {
        let hi = DMatrix::from_element(10, 10, 8.0);
        assert!(sample_support(&hi, 1).iter().all(|&z| z == 1));
        let lo = DMatrix::from_element(10, 10, -8.0);
        assert!(sample_support(&lo, 1).iter().all(|&z| z == 0));
    }

    #[test]
    fn balanced_support_fraction() {
        let z = sample_support(&DMatrix::zeros(100, 100), 5);
        let frac = z.iter().map(|&v| v as f64).sum::<f64>() / 1e4;
        assert!((frac - 0.5).abs() < 0.02);
    }

    #[test]
    fn activation_prob_examples() {
        for &s in &[0.0, 0.5, 7.0] {
            assert_eq!(marginal_activation_prob(0.0, s), 0.5);
        }
        assert_abs_diff_eq!(marginal_activation_prob(-3.0, 0.0), 0.001_349_898_031_630_1, epsilon = 1e-12);
        assert_abs_diff_eq!(marginal_activation_prob(1.0, 3.0), probit(0.5), epsilon = 1e-15);
    }

    #[test]
    fn calibration() {
        assert_eq!(calibrate_mu0_for_sparsity(50.0, 100, 1.0).unwrap(), 0.0);
        let mu = calibrate_mu0_for_sparsity(20.0, 100, 1.0).unwrap();
        assert_abs_diff_eq!(mu, 2f64.sqrt() * probit_inverse(0.2), epsilon = 1e-15);
        assert_abs_diff_eq!(100.0 * marginal_activation_prob(mu, 1.0), 20.0, epsilon = 1e-9);
        assert!(calibrate_mu0_for_sparsity(0.0, 100, 1.0).is_err());
        assert!(calibrate_mu0_for_sparsity(100.0, 100, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(4, 3, 0.5);
        assert!(c.validate().is_ok());
        c.beta = 0.5;
        assert!(c.validate().is_err());
        c.stationary = false;
        assert!(c.validate().is_ok());
        c.alpha = 1.2;
        assert!(c.validate().is_err());
        let mut c = cfg(4, 3, 0.0);
        c.beta = 0.0;
        c.stationary = false;
        assert!(c.validate().is_err());
    }

    #[test]
    fn noiseless_problem() {
        let (p, g) = sample_problem(&cfg(10, 4, 0.9), 6, ForwardKind::GaussianIid, f64::INFINITY, 8).unwrap();
        assert_eq!(p.y, &p.a * &g.x);
        assert!(g.e.iter().all(|&v| v == 0.0));
        assert!(p.noise_var > 0.0);
    }

    #[test]
    fn realized_snr_is_exact() {
        let (p, g) = sample_problem(&cfg(30, 10, 0.9), 12, ForwardKind::GaussianIid, 10.0, 21).unwrap();
        let signal = &p.a * &g.x;
        let snr = 10.0 * (signal.norm_squared() / g.e.norm_squared()).log10();
        assert_abs_diff_eq!(snr, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.noise_var, g.e.norm_squared() / 120.0, epsilon = 1e-15);
    }

    #[test]
    fn iid_forward_variance() {
        let n = 50;
        let d = 200;
        let a = sample_forward_matrix(n, d, ForwardKind::GaussianIid, &mut rng_from_seed(2)).unwrap();
        let m = a.iter().map(|v| v * v).sum::<f64>() / (n * d) as f64;
        // Var(A²) = 2/N² for Gaussian entries.
        let se = (2.0 / (n * n) as f64 / (n * d) as f64).sqrt();
        assert!((m - 1.0 / n as f64).abs() < 3.0 * se);
    }

    #[test]
    fn correlated_forward_columns() {
        let n = 10_000;
        let a = sample_forward_matrix(n, 100, ForwardKind::ColumnCorrelated { r: 0.9 }, &mut rng_from_seed(3))
            .unwrap();
        for &i in &[0usize, 40, 98] {
            let c1 = a.column(i);
            let c2 = a.column(i + 1);
            let corr = c1.dot(&c2) / (c1.norm() * c2.norm());
            assert!((corr - 0.9).abs() < 0.02, "corr {corr}");
        }
        let mean_sq = a.iter().map(|v| v * v).sum::<f64>() / (n * 100) as f64;
        assert!((mean_sq * n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_correlation_matches_iid_statistics() {
        let n = 5000;
        let a = sample_forward_matrix(n, 20, ForwardKind::ColumnCorrelated { r: 0.0 }, &mut rng_from_seed(4))
            .unwrap();
        let c1 = a.column(3);
        let c2 = a.column(4);
        let corr = c1.dot(&c2) / (c1.norm() * c2.norm());
        assert!(corr.abs() < 0.05);
    }

    #[test]
    fn support_and_coefficients_consistent() {
        for seed in 0..5 {
            let (_, g) = sample_problem(&cfg(20, 8, 0.9), 10, ForwardKind::GaussianIid, 10.0, seed).unwrap();
            for (x, z) in g.x.iter().zip(g.z.iter()) {
                if *z == 0 {
                    assert_eq!(*x, 0.0);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = cfg(15, 6, 0.9);
        let a = sample_problem(&c, 7, ForwardKind::ColumnCorrelated { r: 0.5 }, 10.0, 77).unwrap();
        let b = sample_problem(&c, 7, ForwardKind::ColumnCorrelated { r: 0.5 }, 10.0, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_support_is_an_error() {
        let mut c = cfg(3, 2, 0.9);
        c.mu0 = DVector::from_element(3, -40.0);
        assert!(matches!(
            sample_problem(&c, 2, ForwardKind::GaussianIid, 10.0, 1),
            Err(Error::Config(_))
        ));
    }
}
