//! Numerical-integration oracles for the tilted moments.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Moments of an (unnormalised) one-dimensional tilted density.
#[derive(Debug, Clone, Copy)]
pub struct OracleMoments {
    /// Zeroth moment (not logged).
    pub norm: f64,
    pub mean: f64,
    pub var: f64,
    /// Probability of the binary variable being one, where applicable.
    pub prob: f64,
}

const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Composite 5-point Gauss–Legendre rule on `[a, b]` with `panels` panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let c = a + (k as f64 + 0.5) * h;
        let mut s = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            s += w * f(c + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

pub fn reference_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

fn gauss_pdf(x: f64, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).unwrap().pdf(x)
}

/// Moments of `w(γ)·N(γ | mu, var)` by quadrature over `mu ± 12σ`.
pub fn tilted<W: Fn(f64) -> f64>(weight: W, mu: f64, var: f64) -> (f64, f64, f64) {
    let sd = var.sqrt();
    let (a, b) = (mu - 12.0 * sd, mu + 12.0 * sd);
    let panels = 2000;
    let dens = |g: f64| weight(g) * gauss_pdf(g, mu, var);
    let z = integrate(dens, a, b, panels);
    let m = integrate(|g| g * dens(g), a, b, panels) / z;
    let v = integrate(|g| (g - m) * (g - m) * dens(g), a, b, panels) / z;
    (z, m, v)
}

/// Moments of `Φ(γ)·N(γ | mu, var)`.
pub fn probit_tilted(mu: f64, var: f64) -> OracleMoments {
    let (norm, mean, var) = tilted(reference_cdf, mu, var);
    OracleMoments {
        norm,
        mean,
        var,
        prob: norm,
    }
}

/// Moments of `Σ_z Ber(z | q)·Ber(z | Φ(γ))·N(γ | mu, var)`: enumeration over
/// `z`, quadrature over `γ`.
pub fn bernoulli_probit_tilted(mu: f64, var: f64, q: f64) -> OracleMoments {
    let (z1, m1, v1) = tilted(reference_cdf, mu, var);
    let (z0, m0, v0) = tilted(|g| 1.0 - reference_cdf(g), mu, var);
    let w1 = q * z1;
    let w0 = (1.0 - q) * z0;
    let norm = w1 + w0;
    let prob = w1 / norm;
    let mean = prob * m1 + (1.0 - prob) * m0;
    let second = prob * (v1 + m1 * m1) + (1.0 - prob) * (v0 + m0 * m0);
    OracleMoments {
        norm,
        mean,
        var: second - mean * mean,
        prob,
    }
}

/// Spike-and-slab tilted moments: enumerate `z`; the spike branch is a point
/// mass at zero, the slab branch is integrated numerically.
pub fn spike_slab_enumerated(m: f64, v: f64, p: f64, slab_var: f64) -> OracleMoments {
    let spike = (1.0 - p) * gauss_pdf(0.0, m, v);
    let (z1, m1, v1) = tilted(|x| gauss_pdf(x, 0.0, slab_var), m, v);
    let slab = p * z1;
    let norm = spike + slab;
    let prob = slab / norm;
    let mean = prob * m1;
    let second = prob * (v1 + m1 * m1);
    OracleMoments {
        norm,
        mean,
        var: second - mean * mean,
        prob,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_gaussian_mass() {
        let z = integrate(|x| gauss_pdf(x, 0.3, 2.0), -20.0, 20.0, 400);
        assert!((z - 1.0).abs() < 1e-13);
    }

    #[test]
    fn probit_norm_matches_closed_form_at_zero_mean() {
        let o = probit_tilted(0.0, 3.0);
        assert!((o.norm - 0.5).abs() < 1e-12);
    }
}
