//! Parallel moment-matching sweeps over the spike-and-slab and probit sites.
//!
//! Every site in a sweep reads the same pre-sweep joint, so the per-column
//! work is independent and the new grids are written back afterwards.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gaussian::GaussianNd;
use crate::moments::{
    bernoulli_probit_tilted_moments, clamp_prob, logit, sigmoid, spike_slab_tilted_moments, Gaussian1d,
};
use crate::par;

use super::sites::{GaussianSiteGrid, Sites};
use super::SolverOptions;

/// Floor on tilted variances before they are turned into site parameters.
pub const TILTED_VAR_FLOOR: f64 = 1e-12;
/// A sweep that has to skip more than this fraction of its sites fails.
/// Sites that only hold their Gaussian part do not count.
pub const MAX_SKIP_FRACTION: f64 = 0.5;
/// Where a flat site is allowed, implied precisions this far below zero
/// (relative to the cavity precision) are rounding noise and read as zero.
pub const FLAT_SITE_ROUNDOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SweepStats {
    pub total: usize,
    /// Sites left entirely at their previous value (improper cavity or
    /// non-finite moments).
    pub skipped: usize,
    /// Sites whose Gaussian part kept its previous value because the matched
    /// precision was negative; their Bernoulli part was still refreshed.
    pub held: usize,
}

impl SweepStats {
    /// Sites whose Gaussian part was not refreshed.
    pub fn not_updated(&self) -> usize {
        self.skipped + self.held
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Updated,
    Held,
    Skipped,
}

/// New values for one scalar site.
#[derive(Debug, Clone, Copy)]
struct SiteValue {
    prec: f64,
    h: f64,
    prob: f64,
    outcome: Outcome,
}

/// Gaussian division of a marginal by a site; `None` if the cavity is improper.
fn cavity(marg_mean: f64, marg_var: f64, site_prec: f64, site_h: f64) -> Option<Gaussian1d> {
    let prec = 1.0 / marg_var - site_prec;
    if !(prec > 0.0 && prec.is_finite()) {
        return None;
    }
    let var = 1.0 / prec;
    Some(Gaussian1d {
        mean: var * (marg_mean / marg_var - site_h),
        var,
    })
}

/// Damped natural-parameter update `tilted ÷ cavity`. Returns `None` when the
/// implied site precision is negative (or zero, unless `allow_zero`).
#[allow(clippy::too_many_arguments)]
fn gaussian_site(
    old_prec: f64,
    old_h: f64,
    cav: Gaussian1d,
    tilt_mean: f64,
    tilt_var: f64,
    damping: f64,
    max_prec: f64,
    allow_zero: bool,
) -> Option<(f64, f64)> {
    let tv = tilt_var.max(TILTED_VAR_FLOOR);
    let cav_prec = 1.0 / cav.var;
    let mut np = 1.0 / tv - cav_prec;
    let mut nh = tilt_mean / tv - cav.mean * cav_prec;
    if allow_zero && np < 0.0 && np >= -FLAT_SITE_ROUNDOFF * cav_prec {
        np = 0.0;
    }
    let ok = if allow_zero { np >= 0.0 } else { np > 0.0 };
    if !ok || !np.is_finite() || !nh.is_finite() {
        return None;
    }
    if np > max_prec {
        // Keep the site mean, cap its precision.
        nh *= max_prec / np;
        np = max_prec;
    }
    Some((damping * np + (1.0 - damping) * old_prec, damping * nh + (1.0 - damping) * old_h))
}

/// Bernoulli division `tilted ÷ cavity`, damped in log-odds.
fn bernoulli_site(old: f64, cavity_prob: f64, tilted_prob: f64, damping: f64) -> f64 {
    let fresh = logit(clamp_prob(tilted_prob)) - logit(clamp_prob(cavity_prob));
    let damped = damping * fresh + (1.0 - damping) * logit(clamp_prob(old));
    clamp_prob(sigmoid(damped))
}

fn write_back(grid: &mut GaussianSiteGrid, probs: &mut DMatrix<f64>, cols: Vec<Vec<SiteValue>>) -> SweepStats {
    let mut stats = SweepStats::default();
    for (t, col) in cols.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            grid.precision[(i, t)] = v.prec;
            grid.precision_mean[(i, t)] = v.h;
            probs[(i, t)] = v.prob;
            stats.total += 1;
            match v.outcome {
                Outcome::Updated => {}
                Outcome::Held => stats.held += 1,
                Outcome::Skipped => stats.skipped += 1,
            }
        }
    }
    stats
}

fn check_skips(stats: SweepStats, what: &str) -> Result<SweepStats> {
    if stats.skipped as f64 > MAX_SKIP_FRACTION * stats.total as f64 {
        return Err(Error::Numerical(format!(
            "{what} sweep skipped {} of {} sites",
            stats.skipped, stats.total
        )));
    }
    Ok(stats)
}

/// Refreshes all spike-and-slab sites from the current `x` marginals.
///
/// The cavity on `z[i,t]` is the probit site's Bernoulli part. A site whose
/// cavity is improper is skipped (left untouched); a site whose implied
/// precision is nonpositive is held: it keeps its Gaussian part but still
/// refreshes its Bernoulli part.
pub fn update_f2_parallel(
    sites: &mut Sites,
    x_marginals: &[GaussianNd],
    slab_var: f64,
    opts: &SolverOptions,
) -> Result<SweepStats> {
    let d = sites.d();
    let max_prec = 1.0 / opts.min_site_var;
    let s = &*sites;
    let cols = par::map_range(opts.execution, s.t(), |t| {
        let xt = &x_marginals[t];
        (0..d)
            .map(|i| {
                let old = SiteValue {
                    prec: s.f2.precision[(i, t)],
                    h: s.f2.precision_mean[(i, t)],
                    prob: s.f2_prob[(i, t)],
                    outcome: Outcome::Skipped,
                };
                let Some(cav) = cavity(xt.mean[i], xt.cov[(i, i)], old.prec, old.h) else {
                    return old;
                };
                let q = clamp_prob(s.f3_prob[(i, t)]);
                let tilt = spike_slab_tilted_moments(cav, q, slab_var);
                let prob = bernoulli_site(old.prob, q, tilt.bernoulli_prob, opts.damping);
                match gaussian_site(old.prec, old.h, cav, tilt.mean, tilt.var, opts.damping, max_prec, false) {
                    Some((prec, h)) => SiteValue {
                        prec,
                        h,
                        prob,
                        outcome: Outcome::Updated,
                    },
                    None => SiteValue {
                        prob,
                        outcome: Outcome::Held,
                        ..old
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    let stats = write_back(&mut sites.f2, &mut sites.f2_prob, cols);
    check_skips(stats, "spike-and-slab")
}

/// Refreshes all probit sites from the current `γ` marginals.
///
/// Same policy as [`update_f2_parallel`], with the spike-and-slab site's
/// Bernoulli part as the cavity on `z[i,t]`. A zero implied precision is a
/// valid (flat) Gaussian part here.
pub fn update_f3_parallel(
    sites: &mut Sites,
    gamma_marginals: &[(DVector<f64>, DMatrix<f64>)],
    opts: &SolverOptions,
) -> Result<SweepStats> {
    let d = sites.d();
    let max_prec = 1.0 / opts.min_site_var;
    let s = &*sites;
    let cols = par::map_range(opts.execution, s.t(), |t| {
        let (mean, cov) = &gamma_marginals[t];
        (0..d)
            .map(|i| {
                let old = SiteValue {
                    prec: s.f3.precision[(i, t)],
                    h: s.f3.precision_mean[(i, t)],
                    prob: s.f3_prob[(i, t)],
                    outcome: Outcome::Skipped,
                };
                let Some(cav) = cavity(mean[i], cov[(i, i)], old.prec, old.h) else {
                    return old;
                };
                let q = clamp_prob(s.f2_prob[(i, t)]);
                let tilt = bernoulli_probit_tilted_moments(cav, q);
                let prob = bernoulli_site(old.prob, q, tilt.bernoulli_prob, opts.damping);
                match gaussian_site(old.prec, old.h, cav, tilt.mean, tilt.var, opts.damping, max_prec, true) {
                    Some((prec, h)) => SiteValue {
                        prec,
                        h,
                        prob,
                        outcome: Outcome::Updated,
                    },
                    None => SiteValue {
                        prob,
                        outcome: Outcome::Held,
                        ..old
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    let stats = write_back(&mut sites.f3, &mut sites.f3_prob, cols);
    check_skips(stats, "probit")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::NaturalGaussianNd;

    fn sites_1x1(p2: f64, p3: f64) -> Sites {
        Sites {
            f2: GaussianSiteGrid::inactive(1, 1),
            f2_prob: DMatrix::from_element(1, 1, p2),
            f3: GaussianSiteGrid::inactive(1, 1),
            f3_prob: DMatrix::from_element(1, 1, p3),
            fwd: vec![NaturalGaussianNd::vacuous(1)],
            bwd: vec![NaturalGaussianNd::vacuous(1)],
        }
    }

    fn marginal(m: f64, v: f64) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::from_element(1, m), DMatrix::from_element(1, 1, v))
    }

    #[test]
    fn symmetric_probit_site_is_neutral() {
        let mut s = sites_1x1(0.5, 0.5);
        let opts = SolverOptions {
            damping: 1.0,
            ..SolverOptions::default()
        };
        update_f3_parallel(&mut s, &[marginal(0.0, 2.0)], &opts).unwrap();
        assert!((s.f3_prob[(0, 0)] - 0.5).abs() < 1e-12);
        assert!(s.f3.precision[(0, 0)].abs() < 1e-9);
        assert!(s.f3.precision_mean[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn active_cavity_pushes_gamma_up() {
        let mut s = sites_1x1(0.999, 0.5);
        let opts = SolverOptions::default();
        update_f3_parallel(&mut s, &[marginal(0.0, 1.0)], &opts).unwrap();
        assert!(s.f3.precision[(0, 0)] > 0.0);
        assert!(s.f3_mean(0, 0) > 0.0);
        // The Bernoulli part only reports the cavity odds Φ(0) / (1 − Φ(0)).
        assert!((s.f3_prob[(0, 0)] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn improper_cavity_skips_site_and_fails_sweep() {
        let mut s = sites_1x1(0.5, 0.5);
        s.f3.precision[(0, 0)] = 2.0;
        // Marginal precision 1 < site precision 2.
        let before = s.clone();
        let err = update_f3_parallel(&mut s, &[marginal(0.0, 1.0)], &SolverOptions::default());
        assert!(matches!(err, Err(Error::Numerical(_))));
        assert_eq!(s, before);
    }

    #[test]
    fn held_gaussian_parts_do_not_fail_the_sweep() {
        // q < 1/2 makes the probit weight non-log-concave: the tilted variance
        // exceeds the cavity's, so the Gaussian part is held.
        let mut s = sites_1x1(0.3, 0.5);
        let stats = update_f3_parallel(&mut s, &[marginal(0.5, 1.0)], &SolverOptions::default()).unwrap();
        assert_eq!((stats.total, stats.skipped, stats.held), (1, 0, 1));
        assert_eq!(s.f3.precision[(0, 0)], 0.0);
        assert!(s.f3_prob[(0, 0)] != 0.5);
    }

    #[test]
    fn site_precision_is_capped() {
        let cav = Gaussian1d::new(0.3, 1.0);
        let (p, h) = gaussian_site(0.0, 0.0, cav, 0.3, 1e-20, 1.0, 1e10, false).unwrap();
        assert_eq!(p, 1e10);
        assert!((h / p - 0.3).abs() < 1e-6);
    }

    #[test]
    fn damping_interpolates_log_odds() {
        let p = bernoulli_site(0.5, 0.5, 0.9, 0.5);
        let expected = sigmoid(0.5 * logit(0.9));
        assert!((p - expected).abs() < 1e-15);
    }
}
