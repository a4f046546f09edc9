use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stss_bench::aggregate::aggregate;
use stss_bench::config::{Experiment, ExperimentConfig, Method};
use stss_bench::{output, run_experiment, selftest, BenchError};
use stss_core::ep::{solve, write_diagnostics_csv};
use stss_core::io::{read_problem, write_problem};
use stss_core::metrics::score;
use stss_core::prior::{problem_from_support, rng_from_seed, sample_gamma_chain_with, sample_support_with, ForwardKind};

#[derive(Parser)]
#[command(name = "stss", version, about = "Spatio-temporal spike-and-slab EP: solver and experiment harness")]
struct Cli {
    /// TOML experiment configuration; unset keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `base_seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one synthetic problem and write it, with ground truth, to `<out>/problem.txt`.
    Synth {
        /// Undersampling ratio N/D.
        #[arg(long, default_value_t = 0.4)]
        ratio: f64,
        /// Column correlation r of the forward matrix; i.i.d. if unset.
        #[arg(long)]
        coherence: Option<f64>,
    },
    /// Solve a problem file; writes `<out>/posterior.csv` and `<out>/diagnostics.csv`.
    Solve {
        problem: PathBuf,
        #[arg(long, default_value = "spatiotemporal", value_parser = parse_method)]
        method: Method,
    },
    /// Undersampling sweep.
    Exp1,
    /// Coherence sweep.
    Exp2,
    /// Quick equivalence checks against the brute-force oracles.
    Selftest,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method `{s}`; expected one of {}", names.join(", "))
    })
}

/// Failures that map to distinct exit codes.
enum Failure {
    Config(String),
    Numerical(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(_) => Failure::Config(e.to_string()),
            BenchError::Solver(stss_core::Error::Config(_) | stss_core::Error::Dimension(_) | stss_core::Error::Parse { .. }) => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<stss_core::Error> for Failure {
    fn from(e: stss_core::Error) -> Self {
        BenchError::from(e).into()
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.base_seed = s;
    }
    Ok(cfg)
}

fn init_threads(threads: Option<usize>) -> Result<(), Failure> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Failure::Config("--threads must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("cannot build thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    log::warn!("built without the `parallel` feature; --threads {n} is ignored");
    Ok(())
}

fn synth(cfg: &ExperimentConfig, out: &Path, ratio: f64, coherence: Option<f64>) -> Result<(), Failure> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Failure::Config(format!("--ratio must lie in (0, 1], got {ratio}")));
    }
    let kind = match coherence {
        Some(r) => ForwardKind::ColumnCorrelated { r },
        None => ForwardKind::GaussianIid,
    };
    let prior = cfg.truth_prior()?;
    let mut rng = rng_from_seed(cfg.base_seed);
    let gamma = sample_gamma_chain_with(&prior, &mut rng)?;
    let z = sample_support_with(&gamma, &mut rng);
    if z.iter().all(|&v| v == 0) {
        return Err(Failure::Config("sampled support is empty; raise target_active".into()));
    }
    let (problem, truth) = problem_from_support(gamma, z, cfg.measurements(ratio), kind, cfg.snr_db, &mut rng)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("problem.txt");
    let mut w = BufWriter::new(File::create(&path)?);
    write_problem(&mut w, &problem, Some(&truth))?;
    w.flush()?;
    println!(
        "wrote {} (N = {}, D = {}, T = {}, noise variance {:e})",
        path.display(),
        problem.n(),
        problem.d(),
        problem.t(),
        problem.noise_var
    );
    Ok(())
}

fn solve_file(cfg: &ExperimentConfig, out: &Path, path: &Path, method: Method) -> Result<(), Failure> {
    let file = read_problem(BufReader::new(File::open(path)?))?;
    let problem = &file.problem;
    let mut cfg = cfg.clone();
    cfg.d = problem.d();
    cfg.t = problem.t();
    let prior = cfg.method_prior(method, problem.noise_var)?;
    let post = solve(problem, &prior, &cfg.solver_options())?;

    std::fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("posterior.csv"))?);
    writeln!(w, "i,t,x_mean,x_var,support_prob,gamma_mean,gamma_var")?;
    for t in 0..cfg.t {
        for i in 0..cfg.d {
            writeln!(
                w,
                "{i},{t},{},{},{},{},{}",
                post.x_mean[(i, t)],
                post.x_cov[t][(i, i)],
                post.support_prob[(i, t)],
                post.gamma_mean[(i, t)],
                post.gamma_cov[t][(i, i)]
            )?;
        }
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(out.join("diagnostics.csv"))?);
    write_diagnostics_csv(&mut w, &post.diagnostics)?;
    w.flush()?;

    println!(
        "{method}: {} iterations, converged = {}, final change {:e}",
        post.iterations,
        post.converged,
        post.max_delta_trace.last().copied().unwrap_or(f64::NAN)
    );
    if let (Some(x), Some(z)) = (&file.x, &file.z) {
        let s = score(x, &post.x_mean, z, &post.support_prob)?;
        println!(
            "nmse {:.4}, precision {:.4}, recall {:.4}, F {:.4}",
            s.nmse, s.precision, s.recall, s.f_measure
        );
    }
    Ok(())
}

fn experiment(cfg: &ExperimentConfig, out: &Path, exp: Experiment) -> Result<(), Failure> {
    let rows = run_experiment(cfg, exp)?;
    let (rows_path, summary_path) = output::write_experiment(out, exp, &rows)?;
    for c in aggregate(&rows) {
        println!(
            "{} {:>14} {:>5}: nmse {:.4} ± {:.4}, F {:.4} ± {:.4} ({} runs, {} failed)",
            exp.name(),
            c.method.name(),
            c.sweep_value,
            c.nmse_mean,
            c.nmse_stderr,
            c.f_mean,
            c.f_stderr,
            c.n,
            c.failures
        );
    }
    println!("wrote {} and {}", rows_path.display(), summary_path.display());
    if !rows.is_empty() && rows.iter().all(|r| r.failed()) {
        return Err(Failure::Numerical("every solve failed".into()));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    init_threads(cli.threads)?;
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth { ratio, coherence } => synth(&cfg, &cli.out, *ratio, *coherence),
        Command::Solve { problem, method } => solve_file(&cfg, &cli.out, problem, *method),
        Command::Exp1 => experiment(&cfg, &cli.out, Experiment::Exp1),
        Command::Exp2 => experiment(&cfg, &cli.out, Experiment::Exp2),
        Command::Selftest => {
            let checks = selftest::quick_suite(cfg.base_seed);
            for c in &checks {
                println!("{}", c.line());
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(Failure::Numerical("self-test failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
