//! `stochemu` command-line tool.
//!
//! Exit codes: 0 on success, 2 for input or configuration errors, 3 when a
//! numerical stage fails. `STOCHEMU_THREADS` caps the worker pool.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochemu::data::TrajectorySet;
use stochemu::dist::InferenceOption;
use stochemu::emulator::{fit_emulator_timed, EmulatorConfig, StochasticEmulator};
use stochemu::metrics::{eps_cov, eps_marg, lower_bound_band, ErrorReport};
use stochemu::pce::FitConfig;
use stochemu::rng::derive_seed;
use stochemu::study::{run_study, ExperimentConfig};
use stochemu::testbeds::{generate_dataset, generate_validation, Benchmark, HESTON_DEFAULT_STEPS};
use stochemu::{Error, Result};

#[derive(Parser)]
#[command(name = "stochemu", version, about = "Spectral surrogates for stochastic simulators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct BenchmarkArgs {
    /// ishigami, borehole, heston or additive.
    #[arg(long)]
    benchmark: String,
    /// Euler-Maruyama steps on [0, 1] (heston only).
    #[arg(long, default_value_t = HESTON_DEFAULT_STEPS)]
    steps: usize,
    /// Noise standard deviation (additive only).
    #[arg(long, default_value_t = 2.0)]
    noise_sd: f64,
}

impl BenchmarkArgs {
    fn benchmark(&self) -> Result<Benchmark> {
        match Benchmark::from_name(&self.benchmark, self.steps)? {
            Benchmark::Additive { .. } if !(self.noise_sd >= 0.0) => {
                Err(Error::Config(format!("noise SD {} must be non-negative", self.noise_sd)))
            }
            Benchmark::Additive { .. } => Ok(Benchmark::Additive { sd: self.noise_sd }),
            b => Ok(b),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample trajectories of a benchmark simulator.
    Simulate {
        #[command(flatten)]
        bench: BenchmarkArgs,
        /// Design points per trajectory.
        #[arg(long)]
        n: usize,
        /// Number of trajectories.
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output dataset (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also write one CSV per trajectory into this directory.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
    },
    /// Fit an emulator to a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// gaussian, parametric, kde or kde-copula (or 1 to 4).
        #[arg(long, default_value = "gaussian")]
        option: String,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        /// Largest total degree tried by the sparse fits.
        #[arg(long, default_value_t = 5)]
        pmax: u32,
        /// Comma-separated q-norm candidates.
        #[arg(long, default_value = "0.5,0.75,1")]
        q: String,
        /// Accepted for interface symmetry; fitting uses no randomness.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample new trajectories and evaluate them on a grid (one row per trajectory).
    Sample {
        #[arg(long)]
        emulator: PathBuf,
        #[arg(long)]
        n: usize,
        /// CSV of evaluation points, one per row.
        #[arg(long)]
        at_grid: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the sampled trajectories as expansions (JSON).
        #[arg(long)]
        trajectories_out: Option<PathBuf>,
    },
    /// Samples of the response at a single input point.
    PredictMarginal {
        #[arg(long)]
        emulator: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emulator covariance matrix between points.
    Covariance {
        #[arg(long)]
        emulator: PathBuf,
        #[arg(long)]
        points: PathBuf,
        /// Second point set (defaults to the first).
        #[arg(long)]
        points2: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Marginal and covariance errors against fresh simulator replications.
    Validate {
        #[arg(long)]
        emulator: PathBuf,
        #[command(flatten)]
        bench: BenchmarkArgs,
        #[arg(long, default_value_t = 200)]
        n_val: usize,
        #[arg(long, default_value_t = 2000)]
        r_val: usize,
        /// Emulator draws per point (defaults to r_val).
        #[arg(long)]
        n_emu: Option<usize>,
        /// Simulator sample-set pairs for the lower-bound band (0 skips it).
        #[arg(long, default_value_t = 0)]
        band_pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Error report (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Per-point normalized distances (CSV).
        #[arg(long)]
        per_point_csv: Option<PathBuf>,
    },
    /// Run a convergence study described by a JSON config.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_emulator(path: &Path) -> Result<StochasticEmulator> {
    StochasticEmulator::from_json(&read(path)?)
}

/// Numeric CSV, one point per row. A first line that does not parse as
/// numbers is taken as a header.
fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(
        |e| Error::Config(format!("cannot read {}: {e}", path.display())),
    )?;
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match row {
            Ok(r) => points.push(r),
            Err(_) if i == 0 => {}
            Err(e) => return Err(Error::Schema(format!("{} line {}: {e}", path.display(), i + 1))),
        }
    }
    if points.is_empty() {
        return Err(Error::Schema(format!("{} holds no points", path.display())));
    }
    Ok(points)
}

fn check_dims(e: &StochasticEmulator, points: &[Vec<f64>]) -> Result<()> {
    let d = e.input_model.dims();
    match points.iter().find(|p| p.len() != d) {
        Some(p) => Err(Error::Domain(format!("point has {} coordinates but the emulator expects {d}", p.len()))),
        None => Ok(()),
    }
}

fn matrix_csv(rows: usize, cols: usize, prefix: &str, at: impl Fn(usize, usize) -> f64) -> String {
    let mut s = (1..=cols).map(|j| format!("{prefix}{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{}", at(i, j)).unwrap();
        }
        s.push('\n');
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { bench, n, r, seed, out, csv_dir } => {
            let b = bench.benchmark()?;
            let data = generate_dataset(&b, n, r, seed)?;
            write(&out, &data.to_json()?)?;
            if let Some(dir) = csv_dir {
                fs::create_dir_all(&dir)?;
                data.export_csv(&dir)?;
            }
            println!("{}: d = {}, N = {n}, R = {r}", b.name(), data.dims());
        }
        Command::Fit { data, option, epsilon, pmax, q, seed: _, out } => {
            let data = TrajectorySet::from_json(&read(&data)?)?;
            let option: InferenceOption = option.parse()?;
            let q_candidates = q
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Config(format!("q grid '{q}': {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let cfg = EmulatorConfig {
                fit: FitConfig { q_candidates, ..FitConfig::with_max_degree(pmax) },
                epsilon,
                option,
            };
            let (e, t) = fit_emulator_timed(&data, &cfg)?;
            write(&out, &e.to_json()?)?;
            let rep = &e.fit_report;
            println!("option: {option}");
            println!("P = {}", rep.n_basis);
            println!("K = {}", rep.k);
            let eig: Vec<String> = e.kle.eigenvalues.iter().map(|v| format!("{v:.6e}")).collect();
            println!("eigenvalues: {}", eig.join(" "));
            println!("explained fraction: {:.10}", rep.explained_fraction);
            let mean_loo = rep.sparse_loo.iter().sum::<f64>() / rep.sparse_loo.len() as f64;
            println!("mean sparse LOO error: {mean_loo:.3e}");
            println!(
                "timings [s]: sparse-fit {:.3}, joint-basis {:.3}, decomposition {:.3}, inference {:.3}",
                t.sparse_fit.as_secs_f64(),
                t.joint_basis.as_secs_f64(),
                t.decomposition.as_secs_f64(),
                t.inference.as_secs_f64()
            );
        }
        Command::Sample { emulator, n, at_grid, seed, out, trajectories_out } => {
            let e = load_emulator(&emulator)?;
            let grid = read_points(&at_grid)?;
            check_dims(&e, &grid)?;
            let v = e.sample_at(&grid, n, seed)?;
            emit(out.as_deref(), &matrix_csv(n, grid.len(), "p", |i, j| v[(i, j)]))?;
            if let Some(p) = trajectories_out {
                let trajs = e.sample_trajectories(n, seed)?;
                write(&p, &serde_json::to_string(&trajs)?)?;
            }
        }
        Command::PredictMarginal { emulator, x, n, seed, out } => {
            let e = load_emulator(&emulator)?;
            let point = x
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|err| Error::Config(format!("point '{x}': {err}"))))
                .collect::<Result<Vec<_>>>()?;
            check_dims(&e, std::slice::from_ref(&point))?;
            let s = e.marginal_samples(&point, n, seed)?;
            let mut text = String::from("y\n");
            for v in s {
                writeln!(text, "{v}").unwrap();
            }
            emit(out.as_deref(), &text)?;
        }
        Command::Covariance { emulator, points, points2, out } => {
            let e = load_emulator(&emulator)?;
            let a = read_points(&points)?;
            let b = match points2 {
                Some(p) => read_points(&p)?,
                None => a.clone(),
            };
            check_dims(&e, &a)?;
            check_dims(&e, &b)?;
            let c = e.covariance(&a, &b)?;
            emit(out.as_deref(), &matrix_csv(c.nrows(), c.ncols(), "p", |i, j| c[(i, j)]))?;
        }
        Command::Validate { emulator, bench, n_val, r_val, n_emu, band_pairs, seed, out, per_point_csv } => {
            let e = load_emulator(&emulator)?;
            let b = bench.benchmark()?;
            if b.input_model() != e.input_model {
                return Err(Error::Config(format!("emulator input model does not match benchmark {}", b.name())));
            }
            let val = generate_validation(&b, n_val, r_val, derive_seed(seed, &[0]))?;
            let marg = eps_marg(&e, &val, n_emu.unwrap_or(r_val), derive_seed(seed, &[3]))?;
            let cov = eps_cov(&e, &val)?;
            let band = match band_pairs {
                0 => None,
                p => Some(lower_bound_band(&b, n_val, r_val, p, derive_seed(seed, &[2]))?),
            };
            let report = ErrorReport::new(marg, cov, band);
            write(&out, &report.to_json()?)?;
            if let Some(p) = per_point_csv {
                write(&p, &report.per_point_csv())?;
            }
            println!("eps_marg = {:.6e}", report.eps_marg);
            println!("eps_cov = {:.6e}", report.eps_cov);
            if report.excluded_points > 0 {
                println!("excluded zero-spread points: {}", report.excluded_points);
            }
            if let Some(b) = &report.band {
                println!("lower bound: median {:.6e}, 5-95% [{:.6e}, {:.6e}]", b.median, b.q05, b.q95);
            }
        }
        Command::Study { config, out } => {
            let mut cfg = ExperimentConfig::from_json(&read(&config)?)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            if cfg.output_dir.is_none() {
                return Err(Error::Config("no output directory (set output_dir or pass --out)".into()));
            }
            let res = run_study(&cfg)?;
            let failed = res.rows.iter().filter(|r| r.status != "ok").count();
            println!("{} rows written, {failed} failed", res.rows.len());
            for &n in &cfg.n_values {
                for &r in &cfg.r_values {
                    for &o in &cfg.options {
                        if let Some(m) = res.median_of(o, n, r, |row| row.eps_marg) {
                            println!("N = {n}, R = {r}, {o}: median eps_marg {m:.4e}");
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(v) = std::env::var("STOCHEMU_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: thread pool: {e}");
                    return ExitCode::from(3);
                }
            }
            _ => {
                eprintln!("error: STOCHEMU_THREADS must be a positive integer, got '{v}'");
                return ExitCode::from(2);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
