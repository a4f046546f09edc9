//! The two sweeps: undersampling ratio and forward-matrix coherence.
//!
//! Each experiment samples one latent field and support, shared by every
//! sweep point and repetition. Each repetition then draws fresh coefficients,
//! a fresh forward matrix and fresh noise from its own seed, and every method
//! solves that same instance.

use std::time::Instant;

use nalgebra::DMatrix;
use stss_core::ep::solve;
use stss_core::metrics::score;
use stss_core::par::Execution;
use stss_core::prior::{
    problem_from_support, rng_from_seed, sample_gamma_chain_with, sample_support_with, ForwardKind, GroundTruth,
    MmvProblem,
};

use crate::config::{Experiment, ExperimentConfig, Method};
use crate::seed::{instance_seed, support_seed};
use crate::{BenchError, Result};

pub const RESULT_HEADER: &str =
    "experiment,method,sweep_value,seed,nmse,precision,recall,f_measure,iterations,converged,wall_ms";

/// Outcome of one method on one instance. A failed solve has NaN scores,
/// zero iterations, and `converged = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: Experiment,
    pub method: Method,
    pub sweep_value: f64,
    pub seed: u64,
    pub nmse: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.nmse.is_nan()
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment.name(),
            self.method,
            self.sweep_value,
            self.seed,
            self.nmse,
            self.precision,
            self.recall,
            self.f_measure,
            self.iterations,
            self.converged,
            self.wall_ms
        )
    }
}

/// Row order of the final CSV.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.method, a.experiment)
            .cmp(&(b.method, b.experiment))
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.seed.cmp(&b.seed))
    });
}

/// Sweep values of an experiment, in configuration order.
pub fn sweep_values(cfg: &ExperimentConfig, exp: Experiment) -> &[f64] {
    match exp {
        Experiment::Exp1 => &cfg.ratios,
        Experiment::Exp2 => &cfg.coherence,
    }
}

/// The latent field and support shared by an experiment. An all-zero support
/// is redrawn (with the same field) up to ten times.
pub fn shared_support(cfg: &ExperimentConfig, exp: Experiment) -> Result<(DMatrix<f64>, DMatrix<u8>)> {
    let prior = cfg.truth_prior()?;
    let mut rng = rng_from_seed(support_seed(cfg.base_seed, exp.id()));
    let gamma = sample_gamma_chain_with(&prior, &mut rng)?;
    for _ in 0..10 {
        let z = sample_support_with(&gamma, &mut rng);
        if z.iter().any(|&v| v == 1) {
            return Ok((gamma, z));
        }
    }
    Err(BenchError::Config("sampled support is empty; the prior is too sparse".into()))
}

/// One instance of the experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub sweep_index: usize,
    pub sweep_value: f64,
    pub rep: usize,
    pub seed: u64,
}

pub fn instance(
    cfg: &ExperimentConfig,
    exp: Experiment,
    support: &(DMatrix<f64>, DMatrix<u8>),
    job: &Job,
) -> Result<(MmvProblem, GroundTruth)> {
    let (n, kind) = match exp {
        Experiment::Exp1 => (cfg.measurements(job.sweep_value), ForwardKind::GaussianIid),
        Experiment::Exp2 => (
            cfg.measurements(cfg.exp2_ratio),
            ForwardKind::ColumnCorrelated { r: job.sweep_value },
        ),
    };
    let mut rng = rng_from_seed(job.seed);
    Ok(problem_from_support(support.0.clone(), support.1.clone(), n, kind, cfg.snr_db, &mut rng)?)
}

/// Solves and scores one instance with one method. Solver failures are
/// logged and recorded in the row.
pub fn run_method(
    cfg: &ExperimentConfig,
    exp: Experiment,
    job: &Job,
    method: Method,
    problem: &MmvProblem,
    truth: &GroundTruth,
    execution: Execution,
) -> Result<ResultRow> {
    let prior = cfg.method_prior(method, problem.noise_var)?;
    let opts = stss_core::ep::SolverOptions {
        execution,
        ..cfg.solver_options()
    };
    let mut row = ResultRow {
        experiment: exp,
        method,
        sweep_value: job.sweep_value,
        seed: job.seed,
        nmse: f64::NAN,
        precision: f64::NAN,
        recall: f64::NAN,
        f_measure: f64::NAN,
        iterations: 0,
        converged: false,
        wall_ms: 0.0,
    };
    let start = Instant::now();
    let outcome = solve(problem, &prior, &opts).and_then(|post| {
        let s = score(&truth.x, &post.x_mean, &truth.z, &post.support_prob)?;
        Ok((post.iterations, post.converged, s))
    });
    if cfg.record_wall_time {
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    match outcome {
        Ok((iterations, converged, s)) => {
            row.nmse = s.nmse;
            row.precision = s.precision;
            row.recall = s.recall;
            row.f_measure = s.f_measure;
            row.iterations = iterations;
            row.converged = converged;
        }
        Err(e) => log::warn!(
            "{} {method} at {} (seed {}) failed: {e}",
            exp.name(),
            job.sweep_value,
            job.seed
        ),
    }
    Ok(row)
}

/// Every (sweep point, repetition) of the experiment.
pub fn jobs(cfg: &ExperimentConfig, exp: Experiment) -> Vec<Job> {
    let reps = cfg.repetitions(exp);
    sweep_values(cfg, exp)
        .iter()
        .enumerate()
        .flat_map(|(si, &v)| {
            (0..reps).map(move |rep| Job {
                sweep_index: si,
                sweep_value: v,
                rep,
                seed: instance_seed(cfg.base_seed, exp.id(), si as u64, rep as u64),
            })
        })
        .collect()
}

/// Runs the experiment for every configured method and sweep point.
pub fn run_experiment(cfg: &ExperimentConfig, exp: Experiment) -> Result<Vec<ResultRow>> {
    run_experiment_filtered(cfg, exp, |_, _| true)
}

/// Like [`run_experiment`], but only solves the (method, sweep value) cells
/// accepted by `keep`. Seeds do not depend on the filter.
pub fn run_experiment_filtered<F>(cfg: &ExperimentConfig, exp: Experiment, keep: F) -> Result<Vec<ResultRow>>
where
    F: Fn(Method, f64) -> bool + Sync,
{
    cfg.validate()?;
    let support = shared_support(cfg, exp)?;
    let jobs = jobs(cfg, exp);
    let run_job = |job: &Job, exec: Execution| -> Result<Vec<ResultRow>> {
        let methods: Vec<Method> = cfg.methods.iter().copied().filter(|&m| keep(m, job.sweep_value)).collect();
        if methods.is_empty() {
            return Ok(Vec::new());
        }
        let (problem, truth) = instance(cfg, exp, &support, job)?;
        methods
            .into_iter()
            .map(|m| run_method(cfg, exp, job, m, &problem, &truth, exec))
            .collect()
    };

    #[cfg(feature = "parallel")]
    let per_job: Vec<Result<Vec<ResultRow>>> = {
        use rayon::prelude::*;
        // Repetitions already saturate the pool; the solver's own column
        // parallelism is nested inside and only helps on small sweeps.
        jobs.par_iter().map(|j| run_job(j, Execution::Parallel)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_job: Vec<Result<Vec<ResultRow>>> = jobs.iter().map(|j| run_job(j, Execution::Sequential)).collect();

    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    sort_rows(&mut rows);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            d: 12,
            t: 6,
            target_active: 4.0,
            lengthscale: 2.0,
            ratios: vec![0.5, 1.0],
            coherence: vec![0.0, 0.9],
            repetitions: Some(2),
            max_iters: 30,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_row_per_cell_and_repetition() {
        let cfg = tiny();
        let rows = run_experiment(&cfg, Experiment::Exp1).unwrap();
        assert_eq!(rows.len(), 4 * 2 * 2);
        let mut sorted = rows.clone();
        sort_rows(&mut sorted);
        assert_eq!(rows, sorted);
        for r in &rows {
            assert!(r.f_measure.is_nan() || (0.0..=1.0).contains(&r.f_measure));
            assert_eq!(r.wall_ms, 0.0);
        }
    }

    #[test]
    fn support_is_shared_across_the_sweep() {
        let cfg = tiny();
        let s = shared_support(&cfg, Experiment::Exp2).unwrap();
        let js = jobs(&cfg, Experiment::Exp2);
        let (_, a) = instance(&cfg, Experiment::Exp2, &s, &js[0]).unwrap();
        let (_, b) = instance(&cfg, Experiment::Exp2, &s, &js[3]).unwrap();
        assert_eq!(a.z, b.z);
        assert_ne!(a.x, b.x);
    }

    #[test]
    fn filter_does_not_move_seeds() {
        let cfg = tiny();
        let all = run_experiment(&cfg, Experiment::Exp1).unwrap();
        let some = run_experiment_filtered(&cfg, Experiment::Exp1, |m, v| m == Method::Independent && v == 1.0).unwrap();
        assert_eq!(some.len(), 2);
        for r in &some {
            assert!(all.contains(r));
        }
    }

    #[test]
    fn failed_rows_format_as_nan() {
        let row = ResultRow {
            experiment: Experiment::Exp1,
            method: Method::Spatial,
            sweep_value: 0.25,
            seed: 9,
            nmse: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
            f_measure: f64::NAN,
            iterations: 0,
            converged: false,
            wall_ms: 0.0,
        };
        assert!(row.failed());
        assert_eq!(row.to_csv(), "exp1,spatial,0.25,9,NaN,NaN,NaN,NaN,0,false,0");
    }
}
