//! Convergence study over a grid of experimental-design sizes `N`, trajectory
//! counts `R`, repetitions and inference options.
//!
//! Seeds: the validation set uses `derive_seed(seed, [0])`, the lower-bound
//! band `[2]`, the training data of cell `(N, R, rep)` uses
//! `[1, N, R, rep]` (shared by every option), and emulator sampling
//! `[3, N, R, rep, option]`. Each `(N, R, rep)` cell is written to its own
//! file named by a hash of its inputs, so an interrupted run resumes where it
//! stopped and produces the same tables.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::InferenceOption;
use crate::emulator::{assemble, fit_kle_stage, PceKdeBaseline};
use crate::error::{Error, Result};
use crate::metrics::{
    baseline_samples, empirical_covariance, eps_cov, eps_cov_from_matrices, eps_marg, eps_marg_from_samples,
    lower_bound_band, median, Band,
};
use crate::pce::FitConfig;
use crate::rng::derive_seed;
use crate::testbeds::{generate_dataset, generate_validation, Benchmark, ValidationSet};

/// An emulator inference option, or the trajectory-wise KDE baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StudyOption {
    Emulator(InferenceOption),
    PceKde,
}

impl StudyOption {
    fn code(self) -> u64 {
        match self {
            StudyOption::Emulator(o) => o as u64,
            StudyOption::PceKde => 5,
        }
    }
}

impl fmt::Display for StudyOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyOption::Emulator(o) => o.fmt(f),
            StudyOption::PceKde => f.write_str("pce-kde"),
        }
    }
}

impl FromStr for StudyOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "pce-kde" {
            Ok(StudyOption::PceKde)
        } else {
            s.parse().map(StudyOption::Emulator)
        }
    }
}

impl TryFrom<String> for StudyOption {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StudyOption> for String {
    fn from(o: StudyOption) -> String {
        o.to_string()
    }
}

fn default_q_grid() -> Vec<f64> {
    vec![0.5, 0.75, 1.0]
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_band_pairs() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub n_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub repetitions: usize,
    pub options: Vec<StudyOption>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub max_degree: u32,
    #[serde(default = "default_q_grid")]
    pub q_grid: Vec<f64>,
    pub seed: u64,
    pub n_val: usize,
    pub r_val: usize,
    /// Emulator draws per validation point; defaults to `r_val`.
    #[serde(default)]
    pub n_emu: Option<usize>,
    /// Simulator sample-set pairs for the lower-bound band; 0 skips it.
    #[serde(default = "default_band_pairs")]
    pub band_pairs: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("n_values", self.n_values.is_empty()),
            ("r_values", self.r_values.is_empty()),
            ("options", self.options.is_empty()),
            ("q_grid", self.q_grid.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Config(format!("{name} must not be empty")));
        }
        if self.repetitions == 0 || self.n_val == 0 || self.r_val < 2 {
            return Err(Error::Config("repetitions and n_val must be positive and r_val at least 2".into()));
        }
        if self.r_values.iter().any(|&r| r < 2) || self.n_values.contains(&0) {
            return Err(Error::Config("every R must be at least 2 and every N positive".into()));
        }
        if self.n_emu == Some(0) {
            return Err(Error::Config("n_emu must be positive".into()));
        }
        self.fit_config().validate()
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig { q_candidates: self.q_grid.clone(), ..FitConfig::with_max_degree(self.max_degree) }
    }

    /// Inputs that determine every cell, excluding where results are written.
    fn fingerprint(&self) -> String {
        let c = ExperimentConfig { output_dir: None, band_pairs: 0, ..self.clone() };
        serde_json::to_string(&c).expect("config serializes")
    }

    fn cell_key(&self, n: usize, r: usize, rep: usize) -> String {
        format!("{:016x}", fnv1a(format!("{}|{n}|{r}|{rep}", self.fingerprint()).as_bytes()))
    }
}

/// 64-bit FNV-1a, stable across platforms and toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub r: usize,
    pub repetition: usize,
    pub option: StudyOption,
    pub eps_marg: Option<f64>,
    pub eps_cov: Option<f64>,
    pub k: Option<usize>,
    /// `ok`, or the error that stopped this cell.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub band: Option<Band>,
}

impl StudyResult {
    /// Median of a metric over the successful repetitions of one grid point.
    pub fn median_of(&self, option: StudyOption, n: usize, r: usize, metric: fn(&StudyRow) -> Option<f64>) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|row| row.option == option && row.n == n && row.r == r)
            .filter_map(metric)
            .collect();
        (!v.is_empty()).then(|| median(&v))
    }

    pub fn convergence_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("N,R,repetition,option,eps_marg,eps_cov,K,status\n");
        for row in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.n,
                row.r,
                row.repetition,
                row.option,
                opt(row.eps_marg),
                opt(row.eps_cov),
                row.k.map(|k| k.to_string()).unwrap_or_default(),
                csv_field(&row.status)
            ));
        }
        s
    }
}

pub fn band_csv(b: &Band) -> String {
    format!(
        "statistic,value\nq05,{}\nq25,{}\nmedian,{}\nq75,{}\nq95,{}\n",
        b.q05, b.q25, b.median, b.q75, b.q95
    )
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn run_cell(cfg: &ExperimentConfig, val: &ValidationSet, n: usize, r: usize, rep: usize) -> Vec<StudyRow> {
    let row = |option, outcome: Result<(f64, f64, Option<usize>)>| match outcome {
        Ok((m, c, k)) => StudyRow { n, r, repetition: rep, option, eps_marg: Some(m), eps_cov: Some(c), k, status: "ok".into() },
        Err(e) => StudyRow { n, r, repetition: rep, option, eps_marg: None, eps_cov: None, k: None, status: e.to_string() },
    };
    let data_seed = derive_seed(cfg.seed, &[1, n as u64, r as u64, rep as u64]);
    let stage = generate_dataset(&cfg.benchmark, n, r, data_seed)
        .and_then(|d| fit_kle_stage(&d, &cfg.fit_config(), cfg.epsilon));
    let stage = match stage {
        Ok(s) => s,
        Err(e) => {
            log::warn!("cell N={n} R={r} rep={rep} failed: {e}");
            let msg = e.to_string();
            return cfg.options.iter().map(|&o| row(o, Err(Error::Data(msg.clone())))).collect();
        }
    };
    let n_emu = cfg.n_emu.unwrap_or(cfg.r_val);
    cfg.options
        .iter()
        .map(|&option| {
            let sample_seed = derive_seed(cfg.seed, &[3, n as u64, r as u64, rep as u64, option.code()]);
            let outcome = match option {
                StudyOption::Emulator(o) => assemble(&stage, o).and_then(|e| {
                    let m = eps_marg(&e, val, n_emu, sample_seed)?;
                    Ok((m.value, eps_cov(&e, val)?, Some(e.k())))
                }),
                StudyOption::PceKde => {
                    let b = PceKdeBaseline::from_joint_basis(&stage.joint);
                    (|| {
                        let samples = baseline_samples(&b, &val.points, n_emu, sample_seed)?;
                        let m = eps_marg_from_samples(&val.values, &samples)?;
                        let c_model = empirical_covariance(&b.values_at(&val.points)?);
                        let c = eps_cov_from_matrices(&empirical_covariance(&val.values), &c_model)?;
                        Ok((m.value, c, None))
                    })()
                }
            };
            row(option, outcome)
        })
        .collect()
}

fn read_cached<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs (or resumes) the study. With an output directory, per-cell results
/// go to `cells/` and the tables to `convergence.csv` and `band.csv`.
pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    cfg.validate()?;
    let cells_dir = match &cfg.output_dir {
        Some(dir) => {
            let c = dir.join("cells");
            fs::create_dir_all(&c)?;
            Some(c)
        }
        None => None,
    };
    let val = generate_validation(&cfg.benchmark, cfg.n_val, cfg.r_val, derive_seed(cfg.seed, &[0]))?;

    let mut grid = Vec::new();
    for &n in &cfg.n_values {
        for &r in &cfg.r_values {
            for rep in 0..cfg.repetitions {
                grid.push((n, r, rep));
            }
        }
    }
    let cells: Vec<Vec<StudyRow>> = grid
        .par_iter()
        .map(|&(n, r, rep)| -> Result<Vec<StudyRow>> {
            let path = cells_dir.as_ref().map(|d| d.join(format!("{}.json", cfg.cell_key(n, r, rep))));
            if let Some(rows) = path.as_deref().and_then(read_cached::<Vec<StudyRow>>) {
                return Ok(rows);
            }
            let rows = run_cell(cfg, &val, n, r, rep);
            if let Some(p) = path {
                write_atomic(&p, &serde_json::to_string(&rows)?)?;
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<StudyRow> = cells.into_iter().flatten().collect();

    let band = if cfg.band_pairs > 0 {
        let path = cells_dir.as_ref().map(|d| {
            d.join(format!("band-{:016x}.json", fnv1a(format!("{}|{}", cfg.fingerprint(), cfg.band_pairs).as_bytes())))
        });
        match path.as_deref().and_then(read_cached::<Band>) {
            Some(b) => Some(b),
            None => {
                let b = lower_bound_band(&cfg.benchmark, cfg.n_val, cfg.r_val, cfg.band_pairs, derive_seed(cfg.seed, &[2]))?;
                if let Some(p) = path {
                    write_atomic(&p, &serde_json::to_string(&b)?)?;
                }
                Some(b)
            }
        }
    } else {
        None
    };

    let result = StudyResult { rows, band };
    if let Some(dir) = &cfg.output_dir {
        fs::write(dir.join("convergence.csv"), result.convergence_csv())?;
        if let Some(b) = &result.band {
            fs::write(dir.join("band.csv"), band_csv(b))?;
        }
    }
    Ok(result)
}
