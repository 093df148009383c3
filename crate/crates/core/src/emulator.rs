//! The assembled stochastic emulator
//! `Y(x) = mu(x) + sum_k sqrt(lambda_k) xi_k phi_k(x)`.
//!
//! Fitting chains sparse per-trajectory regression, the joint basis, the KL
//! decomposition and the inference of the KL variables. A sampled trajectory
//! is itself an expansion in the shared basis, so it can be evaluated
//! anywhere.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::InputModel;
use crate::data::TrajectorySet;
use crate::dist::{fit_joint, sample_joint, InferenceOption, JointDistModel};
use crate::error::{Error, Result, Stage, StageExt};
use crate::kle::{build_joint_basis, JointBasisResult, KleModel};
use crate::pce::{fit_sparse, FitConfig, PceModel};

/// Version tag written into every serialized emulator.
pub const FORMAT_VERSION: &str = "stochemu-emulator/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatorConfig {
    pub fit: FitConfig,
    /// Fraction of variance the truncated expansion may leave unexplained.
    pub epsilon: f64,
    pub option: InferenceOption,
}

impl EmulatorConfig {
    pub fn new(max_degree: u32, option: InferenceOption) -> Self {
        Self { fit: FitConfig::with_max_degree(max_degree), epsilon: 1e-3, option }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Relative LOO error of each sparse trajectory fit.
    pub sparse_loo: Vec<f64>,
    /// Relative LOO error of each re-fit on the joint basis.
    pub joint_loo: Vec<f64>,
    /// Size of the joint basis.
    pub n_basis: usize,
    pub k: usize,
    pub explained_fraction: f64,
    /// Every eigenvalue of the coefficient covariance.
    pub eigenvalues: Vec<f64>,
    pub epsilon: f64,
    pub max_degree: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticEmulator {
    pub version: String,
    pub input_model: InputModel,
    pub kle: KleModel,
    pub dist: JointDistModel,
    pub fit_report: FitReport,
}

/// Everything up to (not including) the inference of the KL variables.
/// Shared by all inference options fitted to the same data.
#[derive(Debug, Clone)]
pub struct KleStage {
    pub sparse: Vec<PceModel>,
    pub joint: JointBasisResult,
    pub kle: KleModel,
    pub epsilon: f64,
    pub max_degree: u32,
}

/// Wall-clock time per pipeline stage.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub sparse_fit: Duration,
    pub joint_basis: Duration,
    pub decomposition: Duration,
    pub inference: Duration,
}

/// Steps 1 to 6: sparse fits, joint basis, eigendecomposition, truncation
/// and projection.
pub fn fit_kle_stage(data: &TrajectorySet, fit: &FitConfig, epsilon: f64) -> Result<KleStage> {
    fit_kle_stage_timed(data, fit, epsilon, &mut StageTimings::default())
}

fn fit_kle_stage_timed(data: &TrajectorySet, fit: &FitConfig, epsilon: f64, t: &mut StageTimings) -> Result<KleStage> {
    data.validate()?;
    let r = data.trajectories.len();
    if r < 2 {
        return Err(Error::Data(format!("{r} trajectories; at least two are required")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("truncation threshold {epsilon} not in (0, 1)")));
    }
    let input = &data.input_model;
    let start = Instant::now();
    let sparse = data
        .trajectories
        .par_iter()
        .map(|tr| fit_sparse(&tr.x, &tr.y, input, fit))
        .collect::<Result<Vec<_>>>()
        .stage(Stage::SparseFit)?;
    t.sparse_fit = start.elapsed();

    let start = Instant::now();
    let joint = build_joint_basis(&sparse, &data.trajectories, input).stage(Stage::JointBasis)?;
    t.joint_basis = start.elapsed();

    let start = Instant::now();
    let kle = KleModel::from_joint_basis(&joint, epsilon)?;
    t.decomposition = start.elapsed();
    Ok(KleStage { sparse, joint, kle, epsilon, max_degree: fit.max_degree })
}

/// Step 7 for one inference option.
pub fn assemble(stage: &KleStage, option: InferenceOption) -> Result<StochasticEmulator> {
    let dist = if stage.kle.k() == 0 {
        JointDistModel { option_tag: option, ..JointDistModel::standard_gaussian(0) }
    } else {
        fit_joint(&stage.kle.xi, option).stage(Stage::Inference)?
    };
    Ok(StochasticEmulator {
        version: FORMAT_VERSION.to_string(),
        input_model: stage.kle.input_model.clone(),
        kle: stage.kle.clone(),
        dist,
        fit_report: FitReport {
            sparse_loo: stage.sparse.iter().map(|m| m.loo_error).collect(),
            joint_loo: stage.joint.loo_errors.clone(),
            n_basis: stage.kle.n_basis(),
            k: stage.kle.k(),
            explained_fraction: stage.kle.explained_fraction,
            eigenvalues: stage.kle.all_eigenvalues.clone(),
            epsilon: stage.epsilon,
            max_degree: stage.max_degree,
        },
    })
}

/// The full pipeline. Fitting involves no randomness.
pub fn fit_emulator(data: &TrajectorySet, cfg: &EmulatorConfig) -> Result<StochasticEmulator> {
    fit_emulator_timed(data, cfg).map(|(e, _)| e)
}

pub fn fit_emulator_timed(data: &TrajectorySet, cfg: &EmulatorConfig) -> Result<(StochasticEmulator, StageTimings)> {
    let mut t = StageTimings::default();
    let stage = fit_kle_stage_timed(data, &cfg.fit, cfg.epsilon, &mut t)?;
    let start = Instant::now();
    let e = assemble(&stage, cfg.option)?;
    t.inference = start.elapsed();
    Ok((e, t))
}

impl StochasticEmulator {
    pub fn k(&self) -> usize {
        self.kle.k()
    }

    pub fn mean_function(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.kle.mean_model().predict(points)
    }

    /// Mercer sum `sum_k lambda_k phi_k(x_i) phi_k(x'_j)`.
    pub fn covariance(&self, x: &[Vec<f64>], x2: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let mut a = self.kle.eigenfunctions_at(x)?;
        let b = self.kle.eigenfunctions_at(x2)?;
        for (k, mut col) in a.column_iter_mut().enumerate() {
            col *= self.kle.eigenvalues[k];
        }
        Ok(a * b.transpose())
    }

    /// Draws of the KL coordinates, one row per trajectory.
    pub fn sample_z(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        sample_joint(&self.dist, n, seed)
    }

    /// `n` new trajectories as expansions in the shared basis.
    pub fn sample_trajectories(&self, n: usize, seed: u64) -> Result<Vec<PceModel>> {
        Ok(self.sample_z(n, seed)?.iter().map(|z| self.trajectory_from_z(z)).collect())
    }

    pub fn trajectory_from_z(&self, z: &[f64]) -> PceModel {
        PceModel {
            input_model: self.input_model.clone(),
            indices: self.kle.indices.clone(),
            coeffs: self.kle.trajectory_coeffs(z),
            loo_error: 0.0,
        }
    }

    /// Values of `n` sampled trajectories at `points` (n x points).
    pub fn sample_at(&self, points: &[Vec<f64>], n: usize, seed: u64) -> Result<DMatrix<f64>> {
        let psi = self.kle.basis_at(points)?;
        let mean = &psi * nalgebra::DVector::from_column_slice(&self.kle.mean_coeffs);
        let mut phi = psi * &self.kle.eigvecs;
        for (k, mut col) in phi.column_iter_mut().enumerate() {
            col *= self.kle.eigenvalues[k].sqrt();
        }
        let z = self.sample_z(n, seed)?;
        let k = self.k();
        let zm = DMatrix::from_fn(n, k, |i, j| z[i][j]);
        let mut out = zm * phi.transpose();
        for mut row in out.row_iter_mut() {
            row += mean.transpose();
        }
        Ok(out)
    }

    /// `n` samples of the response at one point.
    pub fn marginal_samples(&self, x: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
        Ok(self.sample_at(&[x.to_vec()], n, seed)?.column(0).iter().copied().collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        match raw.get("version").and_then(|v| v.as_str()) {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Schema(format!("unsupported emulator version '{v}' (expected {FORMAT_VERSION})"))),
            None => return Err(Error::Schema("emulator file has no version field".into())),
        }
        let e: Self = serde_json::from_value(raw).map_err(|e| Error::Schema(e.to_string()))?;
        e.validate()?;
        Ok(e)
    }

    fn validate(&self) -> Result<()> {
        let p = self.kle.indices.len();
        let k = self.kle.eigenvalues.len();
        if self.kle.input_model != self.input_model {
            return Err(Error::Schema("input model differs from the one of the expansion".into()));
        }
        if self.kle.mean_coeffs.len() != p || self.kle.eigvecs.nrows() != p || self.kle.eigvecs.ncols() != k {
            return Err(Error::Schema("coefficient arrays do not match the basis size".into()));
        }
        if self.kle.indices.dims().is_some_and(|d| d != self.input_model.dims()) {
            return Err(Error::Schema("multi-index length differs from the input dimension".into()));
        }
        if self.dist.dims() != k {
            return Err(Error::Schema(format!("{} KL variables modeled but {k} modes stored", self.dist.dims())));
        }
        self.dist.validate()
    }
}

/// Marginal predictor that evaluates every trajectory expansion at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PceKdeBaseline {
    pub models: Vec<PceModel>,
}

impl PceKdeBaseline {
    /// Trajectory expansions re-fitted on the joint basis.
    pub fn from_joint_basis(jb: &JointBasisResult) -> Self {
        let models = (0..jb.n_trajectories())
            .map(|r| PceModel {
                input_model: jb.input_model.clone(),
                indices: jb.indices.clone(),
                coeffs: jb.trajectory_coeffs(r),
                loo_error: jb.loo_errors[r],
            })
            .collect();
        Self { models }
    }

    /// The `R` trajectory values at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.predict_one(x)).collect()
    }

    /// Trajectory values at many points (R x points).
    pub fn values_at(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let first = &self.models[0];
        let psi = crate::basis::eval_basis(&first.indices, &first.input_model, points)?;
        let coeffs = DMatrix::from_fn(first.indices.len(), self.models.len(), |i, r| self.models[r].coeffs[i]);
        Ok((psi * coeffs).transpose())
    }
}

/// The `R` trajectory values at `x`; smoothing them is left to the caller.
pub fn pce_kde_baseline_predict(b: &PceKdeBaseline, x: &[f64]) -> Result<Vec<f64>> {
    b.predict(x)
}
