//! Dense Gaussian algebra: moment and natural parameterisations, covariance
//! kernels, and Cholesky-based solves with jitter escalation.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest jitter tried, relative to `trace / D`.
const JITTER_START: f64 = 1e-10;
/// Largest jitter tried, relative to `trace / D`.
const JITTER_MAX: f64 = 1e-4;

/// Multivariate Gaussian in moment form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNd {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Multivariate Gaussian in natural (information) form: `precision = Λ`,
/// `precision_mean = Λμ`. A zero precision is a vacuous (flat) factor.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalGaussianNd {
    pub precision_mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl GaussianNd {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::dim(format!(
                "mean has length {d} but covariance is {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(GaussianNd { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn to_natural(&self) -> Result<NaturalGaussianNd> {
        let precision = spd_inverse(&self.cov)?;
        let precision_mean = &precision * &self.mean;
        Ok(NaturalGaussianNd {
            precision_mean,
            precision,
        })
    }
}

impl NaturalGaussianNd {
    pub fn new(precision_mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let d = precision_mean.len();
        if precision.nrows() != d || precision.ncols() != d {
            return Err(Error::dim(format!(
                "precision-mean has length {d} but precision is {}x{}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        Ok(NaturalGaussianNd {
            precision_mean,
            precision,
        })
    }

    /// The flat factor: zero precision, zero precision-mean.
    pub fn vacuous(d: usize) -> Self {
        NaturalGaussianNd {
            precision_mean: DVector::zeros(d),
            precision: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.precision_mean.len()
    }

    pub fn is_vacuous(&self) -> bool {
        self.precision.iter().all(|&v| v == 0.0) && self.precision_mean.iter().all(|&v| v == 0.0)
    }

    pub fn to_moments(&self) -> Result<GaussianNd> {
        let cov = spd_inverse(&self.precision)?;
        let mean = &cov * &self.precision_mean;
        Ok(GaussianNd { mean, cov })
    }

    /// Product of two Gaussian factors.
    pub fn product(&self, other: &NaturalGaussianNd) -> NaturalGaussianNd {
        NaturalGaussianNd {
            precision_mean: &self.precision_mean + &other.precision_mean,
            precision: &self.precision + &other.precision,
        }
    }

    /// Multiplies in a fully factorised (diagonal) Gaussian factor.
    pub fn add_diagonal(&mut self, precision: &[f64], precision_mean: &[f64]) {
        for (i, (&p, &h)) in precision.iter().zip(precision_mean).enumerate() {
            self.precision[(i, i)] += p;
            self.precision_mean[i] += h;
        }
    }
}

/// A Cholesky factor together with the diagonal jitter that was needed to
/// obtain it.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

/// Cholesky factorisation of a symmetric matrix, escalating diagonal jitter by
/// factors of ten from `1e-10·trace/D` up to `1e-4·trace/D` when the plain
/// factorisation fails.
pub fn robust_cholesky(m: &DMatrix<f64>) -> Result<JitteredCholesky> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::dim(format!("expected square matrix, got {}x{}", d, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    if let Some(factor) = sym.clone().cholesky() {
        return Ok(JitteredCholesky {
            factor,
            jitter: 0.0,
        });
    }

    let scale = if d == 0 { 1.0 } else { sym.trace().abs() / d as f64 };
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut jitter = JITTER_START * scale;
    while jitter <= JITTER_MAX * scale * (1.0 + 1e-12) {
        let mut trial = sym.clone();
        for i in 0..d {
            trial[(i, i)] += jitter;
        }
        if let Some(factor) = trial.cholesky() {
            return Ok(JitteredCholesky { factor, jitter });
        }
        jitter *= 10.0;
    }

    let eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
    Err(Error::NotPositiveDefinite {
        message: format!("matrix of size {d} is not positive definite after jitter escalation"),
        eigenvalue,
    })
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Inverse of a symmetric positive-definite matrix, with the same jitter
/// schedule as [`robust_cholesky`]. The factorisation runs through a blocked
/// kernel, which is several times faster than the unblocked one at the sizes
/// the chain recursions see.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    use faer::linalg::solvers::DenseSolveCore;

    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::dim(format!("expected square matrix, got {}x{}", d, m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut sym = to_faer(m);
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (sym[(i, j)] + sym[(j, i)]);
            sym[(i, j)] = v;
            sym[(j, i)] = v;
        }
    }
    let scale = if d == 0 { 1.0 } else { (0..d).map(|i| sym[(i, i)]).sum::<f64>().abs() / d as f64 };
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut jitter = 0.0;
    loop {
        let mut trial = sym.clone();
        for i in 0..d {
            trial[(i, i)] += jitter;
        }
        if let Ok(llt) = trial.llt(faer::Side::Lower) {
            let mut inv = from_faer(llt.inverse().as_ref());
            symmetrize(&mut inv);
            return Ok(inv);
        }
        jitter = if jitter == 0.0 { JITTER_START * scale } else { jitter * 10.0 };
        if jitter > JITTER_MAX * scale * (1.0 + 1e-12) {
            break;
        }
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();
    Err(Error::NotPositiveDefinite {
        message: format!("matrix of size {d} is not positive definite after jitter escalation"),
        eigenvalue,
    })
}

/// Solves the general square system `m·x = rhs` by LU with partial pivoting;
/// `None` if `m` is numerically singular.
pub fn lu_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    use faer::linalg::solvers::Solve;

    let lu = to_faer(m).partial_piv_lu();
    let x = from_faer(lu.solve(to_faer(rhs).as_ref()).as_ref());
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SquaredExponential,
    Diagonal,
}

/// Covariance function over coefficient indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub variance: f64,
    /// In index units; ignored by the diagonal kernel.
    pub lengthscale: f64,
    pub jitter: f64,
}

impl KernelSpec {
    /// Squared-exponential kernel with the default jitter `1e-8·variance`.
    pub fn squared_exponential(variance: f64, lengthscale: f64) -> Self {
        KernelSpec {
            kind: KernelKind::SquaredExponential,
            variance,
            lengthscale,
            jitter: 1e-8 * variance,
        }
    }

    pub fn diagonal(variance: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Diagonal,
            variance,
            lengthscale: 1.0,
            jitter: 0.0,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::config(format!(
                "kernel variance must be positive, got {}",
                self.variance
            )));
        }
        if self.kind == KernelKind::SquaredExponential
            && !(self.lengthscale.is_finite() && self.lengthscale > 0.0)
        {
            return Err(Error::config(format!(
                "kernel lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::config(format!(
                "kernel jitter must be non-negative, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Kernel value between indices `i` and `j`, jitter included on the diagonal.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let diag = if i == j { self.jitter } else { 0.0 };
        match self.kind {
            KernelKind::Diagonal => {
                if i == j {
                    self.variance + diag
                } else {
                    0.0
                }
            }
            KernelKind::SquaredExponential => {
                let r = i as f64 - j as f64;
                let k = if i == j {
                    self.variance
                } else {
                    self.variance * (-r * r / (2.0 * self.lengthscale * self.lengthscale)).exp()
                };
                k + diag
            }
        }
    }
}

/// Builds the `d × d` Gram matrix of `spec` over indices `0..d`.
pub fn build_covariance(spec: &KernelSpec, d: usize) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if d == 0 {
        return Err(Error::config("covariance dimension must be at least 1"));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| spec.entry(i, j)))
}

/// Combines a Gaussian likelihood and prior given in natural form and returns
/// the posterior moments.
pub fn posterior_from_likelihood_and_prior(
    lik: &NaturalGaussianNd,
    prior: &NaturalGaussianNd,
) -> Result<GaussianNd> {
    if lik.dim() != prior.dim() {
        return Err(Error::dim(format!(
            "likelihood has dimension {} but prior has {}",
            lik.dim(),
            prior.dim()
        )));
    }
    lik.product(prior).to_moments()
}

/// Posterior of `x` under `y ~ N(Ax, noise_var·I)` and a diagonal Gaussian
/// site `N(x | site_precmean / site_prec, 1 / site_prec)`, computed with the
/// matrix inversion lemma in `O(N D²)`:
///
/// `V = S − S Aᵀ (noise_var·I + A S Aᵀ)⁻¹ A S`, with `S = diag(1 / site_prec)`.
///
/// `y_projection` is `Aᵀy`.
pub fn woodbury_posterior(
    a: &DMatrix<f64>,
    noise_var: f64,
    site_prec: &[f64],
    site_precmean: &[f64],
    y_projection: &[f64],
) -> Result<GaussianNd> {
    let (n, d) = a.shape();
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::config(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    if site_prec.len() != d || site_precmean.len() != d || y_projection.len() != d {
        return Err(Error::dim(format!(
            "forward matrix has {d} columns but site vectors have lengths {}, {}, {}",
            site_prec.len(),
            site_precmean.len(),
            y_projection.len()
        )));
    }
    if let Some(bad) = site_prec.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::config(format!(
            "site precisions must be positive and finite, got {bad}"
        )));
    }

    let s: Vec<f64> = site_prec.iter().map(|p| 1.0 / p).collect();
    // W = A S
    let mut w = a.clone();
    for (j, mut col) in w.column_iter_mut().enumerate() {
        col *= s[j];
    }
    let mut k = &w * a.transpose();
    for i in 0..n {
        k[(i, i)] += noise_var;
    }
    let chol = robust_cholesky(&k)?;
    // U = L⁻¹ W, so that S Aᵀ K⁻¹ A S = Uᵀ U.
    let u = chol
        .factor
        .l()
        .solve_lower_triangular(&w)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor in Woodbury solve".into()))?;
    let mut cov = -(u.transpose() * &u);
    for i in 0..d {
        cov[(i, i)] += s[i];
    }
    symmetrize(&mut cov);

    let h = DVector::from_fn(d, |i, _| y_projection[i] / noise_var + site_precmean[i]);
    let mean = &cov * h;
    Ok(GaussianNd { mean, cov })
}

/// Direct `O(D³)` counterpart of [`woodbury_posterior`] taking the precomputed
/// Gram matrix `AᵀA`.
pub fn direct_posterior(
    gram: &DMatrix<f64>,
    noise_var: f64,
    site_prec: &[f64],
    site_precmean: &[f64],
    y_projection: &[f64],
) -> Result<GaussianNd> {
    let d = gram.nrows();
    if !(noise_var.is_finite() && noise_var > 0.0) {
        return Err(Error::config(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    if site_prec.len() != d || site_precmean.len() != d || y_projection.len() != d {
        return Err(Error::dim("site vectors do not match the Gram matrix"));
    }
    let mut lik = NaturalGaussianNd {
        precision_mean: DVector::from_fn(d, |i, _| y_projection[i] / noise_var),
        precision: gram / noise_var,
    };
    lik.add_diagonal(site_prec, site_precmean);
    lik.to_moments()
}
