//! Equivalence checks of the solver against the brute-force oracles.
//!
//! Used by the `selftest` subcommand (small sizes) and by the acceptance
//! suite (full sizes).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use stss_core::ep::{solve, JointPath, SolverOptions};
use stss_core::gaussian::{direct_posterior, woodbury_posterior, KernelSpec};
use stss_core::moments::{
    bernoulli_probit_tilted_moments, probit_gaussian_moments, spike_slab_tilted_moments, Gaussian1d,
};
use stss_core::prior::{calibrate_mu0_for_sparsity, rng_from_seed, sample_problem, ForwardKind, MmvProblem, PriorConfig};
use stss_oracles::bayes::{posterior_by_enumeration, support_prior_table, ChainPrior};
use stss_oracles::quadrature;
use stss_oracles::reference_ep::{independent_spike_slab, joint_sparsity, RefOptions};

pub const MOMENT_TOL: f64 = 1e-8;
pub const WOODBURY_TOL: f64 = 1e-8;
pub const LIMITING_TOL: f64 = 1e-6;
/// Mean absolute deviation of `x_mean` from the exact posterior mean.
pub const BAYES_MAD_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Largest deviation of the three tilted-moment kernels from quadrature and
/// enumeration over `cases` random cavities.
pub fn moment_kernels(cases: usize, seed: u64) -> Check {
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let mu = rng.random_range(-5.0..5.0);
        let var = rng.random_range(1e-3..10.0);
        let p = rng.random_range(1e-3..(1.0 - 1e-3));
        let slab = rng.random_range(0.1..5.0);
        let c = Gaussian1d::new(mu, var);

        let t = probit_gaussian_moments(c);
        let o = quadrature::probit_tilted(mu, var);
        for e in [t.log_norm.exp() - o.norm, t.mean - o.mean, t.var - o.var] {
            worst = worst.max(e.abs());
        }
        let t = bernoulli_probit_tilted_moments(c, p);
        let o = quadrature::bernoulli_probit_tilted(mu, var, p);
        for e in [t.log_norm.exp() - o.norm, t.bernoulli_prob - o.prob, t.mean - o.mean, t.var - o.var] {
            worst = worst.max(e.abs());
        }
        let t = spike_slab_tilted_moments(c, p, slab);
        let o = quadrature::spike_slab_enumerated(mu, var, p, slab);
        for e in [t.log_norm.exp() - o.norm, t.bernoulli_prob - o.prob, t.mean - o.mean, t.var - o.var] {
            worst = worst.max(e.abs());
        }
    }
    Check::new(
        "moment kernels",
        worst <= MOMENT_TOL,
        format!("{cases} cavities, max |error| = {worst:.2e} (tol {MOMENT_TOL:e})"),
    )
}

/// Low-rank and dense `x` posteriors on `instances` random `N < D` problems.
pub fn woodbury(instances: usize, seed: u64) -> Check {
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let d = rng.random_range(3..40);
        let n = rng.random_range(1..d);
        let a = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let noise = rng.random_range(0.01..2.0);
        let prec: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-2.0..2.0))).collect();
        let h: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let proj: Vec<f64> = (a.transpose() * y).iter().copied().collect();
        let gram = a.transpose() * &a;
        let (w, dd) = match (
            woodbury_posterior(&a, noise, &prec, &h, &proj),
            direct_posterior(&gram, noise, &prec, &h, &proj),
        ) {
            (Ok(w), Ok(dd)) => (w, dd),
            (w, dd) => {
                return Check::new(
                    "woodbury",
                    false,
                    format!("solve failed: {:?} / {:?}", w.err(), dd.err()),
                )
            }
        };
        worst = worst.max((&w.mean - &dd.mean).amax()).max((&w.cov - &dd.cov).amax());
    }
    Check::new(
        "woodbury",
        worst <= WOODBURY_TOL,
        format!("{instances} instances, max |error| = {worst:.2e} (tol {WOODBURY_TOL:e})"),
    )
}

/// Fixed-length runs, so solver and references stop at the same iterate.
pub fn fixed_iterations(iters: usize) -> SolverOptions {
    SolverOptions {
        max_iters: iters,
        tol: 0.0,
        keep_best_iterate: false,
        ..SolverOptions::default()
    }
}

fn reference_options(opts: &SolverOptions) -> RefOptions {
    RefOptions {
        damping: opts.damping,
        iterations: opts.max_iters,
        min_site_var: opts.min_site_var,
    }
}

/// A small instance drawn from a correlated chain, scored under a prior with
/// the given kernel and chain. `N > D` keeps the probit sites of the shared
/// field mostly log-concave; with weak data the copy chain skips most of them
/// and its sweeps are rejected.
pub fn limiting_instance(kernel: KernelSpec, alpha: f64, beta: f64, seed: u64) -> (MmvProblem, PriorConfig) {
    let (d, t, n) = (8, 5, 12);
    let truth = PriorConfig::stationary(d, t, -0.2, KernelSpec::squared_exponential(1.0, 2.0), 0.9, 1.0, 0.1);
    let (problem, _) = sample_problem(&truth, n, ForwardKind::GaussianIid, 20.0, seed).expect("valid truth prior");
    let mut cfg = PriorConfig::stationary(d, t, -0.2, kernel, alpha, 1.0, problem.noise_var);
    cfg.beta = beta;
    (problem, cfg)
}

fn limiting_check(name: &str, instances: usize, f: impl Fn(u64) -> Result<f64, String>) -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..instances as u64 {
        match f(k) {
            Ok(e) => worst = worst.max(e),
            Err(e) => return Check::new(name, false, format!("instance {k}: {e}")),
        }
    }
    Check::new(
        name,
        worst <= LIMITING_TOL,
        format!("{instances} instances, max |error| = {worst:.2e} (tol {LIMITING_TOL:e})"),
    )
}

/// `α = 0, β = 1` against one single-column solve per column.
pub fn memoryless_vs_columns(instances: usize, iters: usize, seed: u64) -> Check {
    let opts = fixed_iterations(iters);
    limiting_check("memoryless chain = per-column solves", instances, |k| {
        let (problem, cfg) = limiting_instance(KernelSpec::squared_exponential(1.0, 2.0), 0.0, 1.0, seed + k);
        let post = solve(&problem, &cfg, &opts).map_err(|e| e.to_string())?;
        let mut worst: f64 = 0.0;
        for t in 0..cfg.t {
            let column = MmvProblem::new(problem.a.clone(), problem.y.columns(t, 1).into_owned(), problem.noise_var)
                .map_err(|e| e.to_string())?;
            let mut col_cfg = cfg.clone();
            col_cfg.t = 1;
            let single = solve(&column, &col_cfg, &opts).map_err(|e| e.to_string())?;
            worst = worst
                .max((post.x_mean.column(t) - single.x_mean.column(0)).amax())
                .max((post.support_prob.column(t) - single.support_prob.column(0)).amax());
        }
        Ok(worst)
    })
}

/// `α = 0, β = 1` with a diagonal kernel against plain spike-and-slab EP.
pub fn memoryless_diagonal_vs_independent(instances: usize, iters: usize, seed: u64) -> Check {
    let opts = fixed_iterations(iters);
    limiting_check("memoryless diagonal chain = independent spike-and-slab", instances, |k| {
        let (problem, cfg) = limiting_instance(KernelSpec::diagonal(1.0), 0.0, 1.0, seed + k);
        let post = solve(&problem, &cfg, &opts).map_err(|e| e.to_string())?;
        let r = independent_spike_slab(
            &problem.a,
            &problem.y,
            cfg.noise_var,
            cfg.slab_var,
            &cfg.activation_probs(),
            &reference_options(&opts),
        );
        Ok((&post.x_mean - &r.x_mean).amax().max((&post.support_prob - &r.support).amax()))
    })
}

/// `α = 1, β = 0` against EP with one shared latent vector.
pub fn copy_chain_vs_joint(instances: usize, iters: usize, seed: u64) -> Check {
    let opts = fixed_iterations(iters);
    limiting_check("copy chain = joint sparsity", instances, |k| {
        let (problem, cfg) = limiting_instance(KernelSpec::squared_exponential(1.0, 2.0), 1.0, 0.0, seed + k);
        let post = solve(&problem, &cfg, &opts).map_err(|e| e.to_string())?;
        let sigma0 = cfg.covariance().map_err(|e| e.to_string())?;
        let r = joint_sparsity(
            &problem.a,
            &problem.y,
            cfg.noise_var,
            cfg.slab_var,
            &cfg.mu0,
            &sigma0,
            &reference_options(&opts),
        );
        let g = r.gamma_mean.expect("joint reference reports the shared field");
        let dg = post.gamma_mean.column_iter().map(|c| (c - &g).amax()).fold(0.0, f64::max);
        Ok((&post.x_mean - &r.x_mean).amax().max((&post.support_prob - &r.support).amax()).max(dg))
    })
}

/// Solver `x_mean` against the exact posterior mean of tiny problems
/// (`D = 3, T = 2, N = 2`, 10 dB), whose support prior is estimated from
/// `mc_samples` chain draws. The prior matches the experiments' sparsity
/// (20% expected activation). Passes if the absolute deviation averaged over
/// every coefficient of every instance is within tolerance; any solver error
/// fails the check.
pub fn bayes_oracle(instances: usize, mc_samples: usize, seed: u64) -> Check {
    let (d, t, n) = (3, 2, 2);
    let mu0 = calibrate_mu0_for_sparsity(0.2 * d as f64, d, 1.0).expect("valid target");
    let cfg = PriorConfig::stationary(d, t, mu0, KernelSpec::squared_exponential(1.0, 1.5), 0.8, 1.0, 1.0);
    let prior = ChainPrior {
        mu0: cfg.mu0.clone(),
        sigma0: cfg.covariance().expect("valid kernel"),
        alpha: cfg.alpha,
        beta: cfg.beta,
    };
    let table = support_prior_table(&prior, t, mc_samples, seed);
    let opts = SolverOptions {
        max_iters: 1000,
        tol: 1e-9,
        ..SolverOptions::default()
    };
    let mut mads = Vec::with_capacity(instances);
    let mut next = seed;
    while mads.len() < instances {
        next += 1;
        // An empty sampled support has no defined SNR; draw the next seed.
        let Ok((problem, _)) = sample_problem(&cfg, n, ForwardKind::GaussianIid, 10.0, next) else {
            continue;
        };
        let mut c = cfg.clone();
        c.noise_var = problem.noise_var;
        let post = match solve(&problem, &c, &opts) {
            Ok(p) => p,
            Err(e) => return Check::new("bayes oracle", false, format!("seed {next}: {e}")),
        };
        let (x_exact, _) = posterior_by_enumeration(&problem.a, &problem.y, c.noise_var, c.slab_var, &table);
        mads.push((&post.x_mean - x_exact).abs().mean());
    }
    let worst = mads.iter().cloned().fold(0.0, f64::max);
    let mean = mads.iter().sum::<f64>() / mads.len() as f64;
    Check::new(
        "bayes oracle",
        mean <= BAYES_MAD_TOL,
        format!(
            "{instances} instances, mean abs deviation per coefficient {mean:.4} (tol {BAYES_MAD_TOL}), worst instance {worst:.4}"
        ),
    )
}

/// Both `x` paths of the full solver agree.
pub fn solver_paths(instances: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    for k in 0..instances as u64 {
        let (problem, cfg) = limiting_instance(KernelSpec::squared_exponential(1.0, 2.0), 0.9, 0.19, seed + k);
        let run = |path| {
            solve(
                &problem,
                &cfg,
                &SolverOptions {
                    joint_path: path,
                    ..fixed_iterations(20)
                },
            )
        };
        match (run(JointPath::Woodbury), run(JointPath::Direct)) {
            (Ok(a), Ok(b)) => worst = worst.max((&a.x_mean - &b.x_mean).amax()),
            (a, b) => {
                return Check::new(
                    "solver paths",
                    false,
                    format!("instance {k}: {:?} / {:?}", a.err(), b.err()),
                )
            }
        }
    }
    Check::new(
        "solver paths",
        worst <= WOODBURY_TOL,
        format!("{instances} instances, max |Δx| = {worst:.2e} (tol {WOODBURY_TOL:e})"),
    )
}

/// The quick suite run by `stss selftest`.
/// Reduced versions of every check. All but the last compare two exact
/// computations; the last measures approximation error, and with a handful of
/// instances it is a noisy estimate.
pub fn quick_suite(seed: u64) -> Vec<Check> {
    vec![
        moment_kernels(200, seed),
        woodbury(20, seed),
        solver_paths(3, seed),
        memoryless_vs_columns(3, 30, seed),
        memoryless_diagonal_vs_independent(3, 30, seed),
        copy_chain_vs_joint(3, 30, seed),
        bayes_oracle(3, 100_000, seed),
    ]
}
