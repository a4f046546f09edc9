//! Experiment configuration, read from TOML.
//!
//! Every key is optional; missing keys take the defaults below.
//!
//! ```toml
//! d = 100
//! t = 100
//! alpha = 0.99
//! # beta = 0.0199          # defaults to 1 - alpha^2
//! target_active = 20.0
//! lengthscale = 5.0
//! kernel_variance = 16.0
//! slab_var = 1.0
//! snr_db = 10.0
//! ratios = [0.05, 0.1]      # experiment 1 sweep
//! coherence = [0.05, 0.95]  # experiment 2 sweep
//! exp2_ratio = 0.4
//! # repetitions = 25        # defaults to 100 (exp1) / 50 (exp2)
//! base_seed = 0
//! methods = ["spatiotemporal", "spatial", "mmv_joint", "independent"]
//! max_iters = 200
//! tol = 1e-6
//! damping = 0.7
//! record_wall_time = false
//! ```

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use stss_core::ep::SolverOptions;
use stss_core::gaussian::KernelSpec;
use stss_core::prior::{calibrate_mu0_for_sparsity, PriorConfig};

use crate::{BenchError, Result};

/// The solver configurations compared by the experiments. All four are the
/// same solver with a different chain and kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Configured `alpha`, squared-exponential kernel.
    Spatiotemporal,
    /// No temporal memory (`alpha = 0`, `beta = 1`).
    Spatial,
    /// One support shared by every column (`alpha = 1`, `beta = 0`).
    MmvJoint,
    /// No temporal memory and a diagonal kernel.
    Independent,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Spatiotemporal, Method::Spatial, Method::MmvJoint, Method::Independent];

    pub fn name(self) -> &'static str {
        match self {
            Method::Spatiotemporal => "spatiotemporal",
            Method::Spatial => "spatial",
            Method::MmvJoint => "mmv_joint",
            Method::Independent => "independent",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    /// Undersampling sweep.
    Exp1,
    /// Coherence sweep at a fixed ratio.
    Exp2,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
        }
    }

    pub(crate) fn id(self) -> u64 {
        match self {
            Experiment::Exp1 => 1,
            Experiment::Exp2 => 2,
        }
    }

    pub fn default_repetitions(self) -> usize {
        match self {
            Experiment::Exp1 => 100,
            Experiment::Exp2 => 50,
        }
    }
}

/// `0.05, 0.10, …, 0.95`.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub t: usize,
    pub alpha: f64,
    pub beta: Option<f64>,
    /// Expected non-zeros per column; sets the prior mean.
    pub target_active: f64,
    pub lengthscale: f64,
    pub kernel_variance: f64,
    pub slab_var: f64,
    pub snr_db: f64,
    pub ratios: Vec<f64>,
    pub coherence: Vec<f64>,
    pub exp2_ratio: f64,
    pub repetitions: Option<usize>,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub max_iters: usize,
    pub tol: f64,
    pub damping: f64,
    /// Wall-clock times make the output nondeterministic, so they are
    /// written as 0 unless asked for.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverOptions::default();
        ExperimentConfig {
            d: 100,
            t: 100,
            alpha: 0.99,
            beta: None,
            target_active: 20.0,
            lengthscale: 5.0,
            kernel_variance: 16.0,
            slab_var: 1.0,
            snr_db: 10.0,
            ratios: default_grid(),
            coherence: default_grid(),
            exp2_ratio: 0.4,
            repetitions: None,
            base_seed: 0,
            methods: Method::ALL.to_vec(),
            max_iters: solver.max_iters,
            tol: solver.tol,
            damping: solver.damping,
            record_wall_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(1.0 - self.alpha * self.alpha)
    }

    pub fn repetitions(&self, exp: Experiment) -> usize {
        self.repetitions.unwrap_or(exp.default_repetitions())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.d == 0 || self.t == 0 {
            return bad("d and t must be positive".into());
        }
        if let Some(&r) = self.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return bad(format!("undersampling ratios must lie in (0, 1], got {r}"));
        }
        if !(self.exp2_ratio > 0.0 && self.exp2_ratio <= 1.0) {
            return bad(format!("exp2_ratio must lie in (0, 1], got {}", self.exp2_ratio));
        }
        if let Some(&r) = self.coherence.iter().find(|&&r| !(0.0..1.0).contains(&r)) {
            return bad(format!("coherence values must lie in [0, 1), got {r}"));
        }
        if self.repetitions == Some(0) {
            return bad("repetitions must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.snr_db.is_nan() {
            return bad("snr_db must not be NaN".into());
        }
        self.truth_prior()?;
        self.solver_options().validate()?;
        Ok(())
    }

    /// Constant prior mean matching `target_active`.
    pub fn mu0(&self) -> Result<f64> {
        Ok(calibrate_mu0_for_sparsity(self.target_active, self.d, self.kernel_variance)?)
    }

    fn se_kernel(&self) -> KernelSpec {
        KernelSpec::squared_exponential(self.kernel_variance, self.lengthscale)
    }

    /// Prior the ground truth is sampled from.
    pub fn truth_prior(&self) -> Result<PriorConfig> {
        let mut cfg = PriorConfig::stationary(self.d, self.t, self.mu0()?, self.se_kernel(), self.alpha, self.slab_var, 1.0);
        cfg.beta = self.beta();
        cfg.stationary = self.beta.is_none();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Prior used by `method`, with the given noise variance.
    pub fn method_prior(&self, method: Method, noise_var: f64) -> Result<PriorConfig> {
        let mut cfg = self.truth_prior()?;
        cfg.noise_var = noise_var;
        match method {
            Method::Spatiotemporal => {}
            Method::Spatial => {
                cfg.alpha = 0.0;
                cfg.beta = 1.0;
            }
            Method::MmvJoint => {
                cfg.alpha = 1.0;
                cfg.beta = 0.0;
            }
            Method::Independent => {
                cfg.alpha = 0.0;
                cfg.beta = 1.0;
                cfg.kernel = KernelSpec::diagonal(self.kernel_variance);
            }
        }
        cfg.stationary = method != Method::Spatiotemporal || self.beta.is_none();
        Ok(cfg)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            damping: self.damping,
            ..SolverOptions::default()
        }
    }

    /// Measurements per column at undersampling ratio `ratio`.
    pub fn measurements(&self, ratio: f64) -> usize {
        ((ratio * self.d as f64).round() as usize).max(1)
    }
}
