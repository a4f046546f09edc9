use nalgebra::DMatrix;

use crate::gaussian::NaturalGaussianNd;

/// A `D × T` grid of one-dimensional Gaussian sites in natural form.
///
/// A site with zero precision is inactive (a flat factor); its variance reads
/// as `+∞` and its mean as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSiteGrid {
    pub precision: DMatrix<f64>,
    pub precision_mean: DMatrix<f64>,
}

impl GaussianSiteGrid {
    pub fn inactive(d: usize, t: usize) -> Self {
        GaussianSiteGrid {
            precision: DMatrix::zeros(d, t),
            precision_mean: DMatrix::zeros(d, t),
        }
    }

    pub fn is_active(&self, i: usize, t: usize) -> bool {
        self.precision[(i, t)] > 0.0
    }

    pub fn var(&self, i: usize, t: usize) -> f64 {
        let p = self.precision[(i, t)];
        if p > 0.0 {
            1.0 / p
        } else {
            f64::INFINITY
        }
    }

    pub fn mean(&self, i: usize, t: usize) -> f64 {
        let p = self.precision[(i, t)];
        if p > 0.0 {
            self.precision_mean[(i, t)] / p
        } else {
            0.0
        }
    }
}

/// All approximating terms of the factorised posterior.
///
/// * `f2`/`f2_prob`: Gaussian-on-`x` times Bernoulli-on-`z` sites of the
///   spike-and-slab factors.
/// * `f3`/`f3_prob`: Bernoulli-on-`z` times Gaussian-on-`γ` sites of the probit
///   link factors.
/// * `fwd[t]`/`bwd[t]`: Gaussian chain messages into `γ_t` from the past and
///   from the future. `fwd[0]` is the exact initial-state prior and `bwd[T-1]`
///   is flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Sites {
    pub f2: GaussianSiteGrid,
    pub f2_prob: DMatrix<f64>,
    pub f3: GaussianSiteGrid,
    pub f3_prob: DMatrix<f64>,
    pub fwd: Vec<NaturalGaussianNd>,
    pub bwd: Vec<NaturalGaussianNd>,
}

impl Sites {
    pub fn d(&self) -> usize {
        self.f2_prob.nrows()
    }

    pub fn t(&self) -> usize {
        self.f2_prob.ncols()
    }

    pub fn f2_mean(&self, i: usize, t: usize) -> f64 {
        self.f2.mean(i, t)
    }

    pub fn f2_var(&self, i: usize, t: usize) -> f64 {
        self.f2.var(i, t)
    }

    pub fn f3_mean(&self, i: usize, t: usize) -> f64 {
        self.f3.mean(i, t)
    }

    pub fn f3_var(&self, i: usize, t: usize) -> f64 {
        self.f3.var(i, t)
    }
}
