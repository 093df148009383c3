//! Karhunen-Loeve expansion of a set of trajectory expansions.
//!
//! Once every trajectory is expressed in one shared orthonormal basis, the
//! integral eigenproblem of the covariance function reduces to PCA of the
//! coefficient vectors: with centered coefficients `a~` (P x R), the
//! eigenvalues of `a~ a~^T / (R - 1)` are the KL eigenvalues, its
//! eigenvectors hold the basis coefficients of the eigenfunctions, and the
//! KL random variables of trajectory `r` are `b_k^T a~_r / sqrt(lambda_k)`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{eval_basis, InputModel, MultiIndex, MultiIndexSet};
use crate::data::Trajectory;
use crate::error::{Error, Result};
use crate::pce::{self, PceModel};

/// Trajectories re-fitted on one shared basis, then centered.
#[derive(Debug, Clone, PartialEq)]
pub struct JointBasisResult {
    pub input_model: InputModel,
    pub indices: MultiIndexSet,
    /// P x R centered coefficients, one column per trajectory.
    pub coeff_matrix: DMatrix<f64>,
    /// Coefficients of the sample-mean function.
    pub mean_coeffs: Vec<f64>,
    /// Relative LOO error of each OLS re-fit.
    pub loo_errors: Vec<f64>,
}

impl JointBasisResult {
    pub fn n_trajectories(&self) -> usize {
        self.coeff_matrix.ncols()
    }

    /// Uncentered coefficients of trajectory `r`.
    pub fn trajectory_coeffs(&self, r: usize) -> Vec<f64> {
        self.coeff_matrix.column(r).iter().zip(&self.mean_coeffs).map(|(a, m)| a + m).collect()
    }
}

/// Keeps the `cap` indices with the largest scores. The constant index is
/// never dropped; ties drop the index that comes later in graded order.
fn prune(union: &MultiIndexSet, scores: &[f64], cap: usize) -> Result<MultiIndexSet> {
    let mut order: Vec<usize> = (0..union.len()).collect();
    order.sort_by(|&i, &j| {
        let zi = union.as_slice()[i].is_zero();
        let zj = union.as_slice()[j].is_zero();
        zj.cmp(&zi)
            .then(scores[j].partial_cmp(&scores[i]).unwrap_or(std::cmp::Ordering::Equal))
            .then(i.cmp(&j))
    });
    order.truncate(cap);
    MultiIndexSet::new(order.iter().map(|&i| union.as_slice()[i].clone()).collect())
}

/// Union of the sparse supports, pruned to at most `N_min / 2` regressors by
/// dropping the smallest summed squared coefficients, followed by an OLS
/// re-fit of every trajectory and centering.
pub fn build_joint_basis(models: &[PceModel], trajectories: &[Trajectory], input: &InputModel) -> Result<JointBasisResult> {
    let r = models.len();
    if r < 2 {
        return Err(Error::Data(format!("{r} trajectories; at least two are required")));
    }
    if trajectories.len() != r {
        return Err(Error::Data("model and trajectory counts differ".into()));
    }
    if models.iter().any(|m| &m.input_model != input) {
        return Err(Error::Config("trajectory models use different input models".into()));
    }
    let mut all: Vec<MultiIndex> = Vec::new();
    for m in models {
        all.extend(m.indices.iter().cloned());
    }
    let union = MultiIndexSet::new(all)?;
    let n_min = trajectories.iter().map(Trajectory::len).min().unwrap_or(0);
    let cap = n_min / 2;
    let indices = if union.len() > cap {
        let scores: Vec<f64> = union
            .iter()
            .map(|a| models.iter().map(|m| m.coeff(a).powi(2)).sum())
            .collect();
        prune(&union, &scores, cap)?
    } else {
        union
    };
    if indices.is_empty() {
        return Err(Error::Degenerate("no regressor survives pruning".into()));
    }

    let p = indices.len();
    let mut coeffs = DMatrix::zeros(p, r);
    let mut loo_errors = Vec::with_capacity(r);
    for (j, t) in trajectories.iter().enumerate() {
        let psi = eval_basis(&indices, input, &t.x)?;
        let (c, loo) = pce::ols_on_design(&psi, &t.y)?;
        coeffs.column_mut(j).copy_from_slice(&c);
        loo_errors.push(loo);
    }
    let mean_coeffs: Vec<f64> = coeffs.row_iter().map(|row| row.sum() / r as f64).collect();
    for (i, m) in mean_coeffs.iter().enumerate() {
        coeffs.row_mut(i).add_scalar_mut(-m);
    }
    Ok(JointBasisResult {
        input_model: input.clone(),
        indices,
        coeff_matrix: coeffs,
        mean_coeffs,
        loo_errors,
    })
}

/// Total variance below this fraction of the mean's energy is treated as
/// round-off between identical trajectories.
const ZERO_VARIANCE_RATIO: f64 = 1e-24;

/// Full eigendecomposition of the coefficient covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpairs {
    /// Non-increasing.
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors as columns, largest-magnitude entry positive.
    pub vectors: DMatrix<f64>,
}

impl Eigenpairs {
    /// Number of eigenvalues that are positive beyond round-off.
    pub fn positive_count(&self) -> usize {
        let top = self.values.first().copied().unwrap_or(0.0);
        let tol = top.abs() * 1e-12 * self.values.len() as f64;
        self.values.iter().filter(|&&v| v > tol && v > 0.0).count()
    }
}

/// Eigenpairs of `a~ a~^T / (R - 1)`.
pub fn eigendecompose(jb: &JointBasisResult) -> Result<Eigenpairs> {
    let r = jb.n_trajectories();
    if r < 2 {
        return Err(Error::Data("at least two trajectories are required".into()));
    }
    let a = &jb.coeff_matrix;
    let sigma = (a * a.transpose()) / (r as f64 - 1.0);
    Ok(symmetric_eigenpairs(sigma))
}

pub(crate) fn symmetric_eigenpairs(sigma: DMatrix<f64>) -> Eigenpairs {
    let p = sigma.nrows();
    let eig = SymmetricEigen::new(sigma);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(p, p);
    for (k, &i) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(i);
        let lead = col.iter().fold(0.0f64, |m, &v| if v.abs() > m.abs() { v } else { m });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        vectors.column_mut(k).copy_from(&(col * sign));
    }
    Eigenpairs { values, vectors }
}

/// Smallest `K` whose leading eigenvalues explain more than `1 - epsilon` of
/// the total variance, capped at the number of positive eigenvalues.
pub fn truncate(values: &[f64], epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(format!("truncation threshold {epsilon} not in (0, 1)")));
    }
    let total: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all eigenvalues are zero".into()));
    }
    let top = values.iter().copied().fold(0.0, f64::max);
    let positive = values.iter().filter(|&&v| v > top * 1e-12 * values.len() as f64).count();
    let mut cum = 0.0;
    for (k, &v) in values.iter().enumerate() {
        cum += v.max(0.0);
        if cum / total > 1.0 - epsilon {
            return Ok((k + 1).min(positive));
        }
    }
    Ok(positive)
}

/// KL random variable realizations, `K x R`.
pub fn project_xi(jb: &JointBasisResult, eig: &Eigenpairs, k: usize) -> Result<DMatrix<f64>> {
    if k == 0 || k > eig.positive_count() {
        return Err(Error::Degenerate(format!(
            "{k} modes requested but only {} eigenvalues are positive",
            eig.positive_count()
        )));
    }
    let b = eig.vectors.columns(0, k);
    let mut xi = b.transpose() * &jb.coeff_matrix;
    for (i, mut row) in xi.row_iter_mut().enumerate() {
        row /= eig.values[i].sqrt();
    }
    Ok(xi)
}

/// Truncated expansion `mu(x) + sum_k sqrt(lambda_k) xi_k phi_k(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleModel {
    pub input_model: InputModel,
    pub indices: MultiIndexSet,
    pub mean_coeffs: Vec<f64>,
    /// Retained eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// P x K eigenfunction coefficients.
    #[serde(with = "crate::rows")]
    pub eigvecs: DMatrix<f64>,
    /// K x R realizations of the KL random variables, stored one trajectory per row.
    #[serde(with = "crate::rows::columns")]
    pub xi: DMatrix<f64>,
    pub explained_fraction: f64,
    /// Every eigenvalue of the coefficient covariance, for diagnostics.
    pub all_eigenvalues: Vec<f64>,
}

impl KleModel {
    /// Eigendecomposition, truncation and projection of a joint basis.
    pub fn from_joint_basis(jb: &JointBasisResult, epsilon: f64) -> Result<Self> {
        use crate::error::{Stage, StageExt};
        let eig = eigendecompose(jb).stage(Stage::Eigen)?;
        let energy: f64 = jb.mean_coeffs.iter().map(|c| c * c).sum();
        let trace: f64 = eig.values.iter().filter(|&&v| v > 0.0).sum();
        if trace <= ZERO_VARIANCE_RATIO * energy || trace == 0.0 {
            // Trajectories agree to round-off: a deterministic model.
            return Ok(Self {
                input_model: jb.input_model.clone(),
                indices: jb.indices.clone(),
                mean_coeffs: jb.mean_coeffs.clone(),
                eigenvalues: Vec::new(),
                eigvecs: DMatrix::zeros(jb.indices.len(), 0),
                xi: DMatrix::zeros(0, jb.n_trajectories()),
                explained_fraction: 1.0,
                all_eigenvalues: eig.values,
            });
        }
        let k = truncate(&eig.values, epsilon).stage(Stage::Truncation)?;
        let xi = project_xi(jb, &eig, k).stage(Stage::Projection)?;
        let total: f64 = eig.values.iter().filter(|&&v| v > 0.0).sum();
        let kept: f64 = eig.values[..k].iter().sum();
        Ok(Self {
            input_model: jb.input_model.clone(),
            indices: jb.indices.clone(),
            mean_coeffs: jb.mean_coeffs.clone(),
            eigenvalues: eig.values[..k].to_vec(),
            eigvecs: eig.vectors.columns(0, k).into_owned(),
            xi,
            explained_fraction: kept / total,
            all_eigenvalues: eig.values,
        })
    }

    /// Number of retained modes.
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_basis(&self) -> usize {
        self.indices.len()
    }

    pub fn mean_model(&self) -> PceModel {
        PceModel {
            input_model: self.input_model.clone(),
            indices: self.indices.clone(),
            coeffs: self.mean_coeffs.clone(),
            loo_error: 0.0,
        }
    }

    /// Eigenfunction `k` (zero-based) as an expansion.
    pub fn eigenfunction_model(&self, k: usize) -> Result<PceModel> {
        if k >= self.k() {
            return Err(Error::Config(format!("mode {k} out of range (K = {})", self.k())));
        }
        Ok(PceModel {
            input_model: self.input_model.clone(),
            indices: self.indices.clone(),
            coeffs: self.eigvecs.column(k).iter().copied().collect(),
            loo_error: 0.0,
        })
    }

    /// Coefficients `mu + sum_k sqrt(lambda_k) z_k b_k` of the trajectory with
    /// KL coordinates `z`.
    pub fn trajectory_coeffs(&self, z: &[f64]) -> Vec<f64> {
        let mut c = self.mean_coeffs.clone();
        for (k, (&zk, &lk)) in z.iter().zip(&self.eigenvalues).enumerate() {
            let s = lk.sqrt() * zk;
            for (ci, &b) in c.iter_mut().zip(self.eigvecs.column(k).iter()) {
                *ci += s * b;
            }
        }
        c
    }

    /// Basis design matrix at `points` (N x P).
    pub fn basis_at(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        eval_basis(&self.indices, &self.input_model, points)
    }

    /// Eigenfunction values at `points`, N x K.
    pub fn eigenfunctions_at(&self, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        Ok(self.basis_at(points)? * &self.eigvecs)
    }
}

/// Values of eigenfunction `k` (zero-based) at `points`.
pub fn eigenfunction_eval(kle: &KleModel, k: usize, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    kle.eigenfunction_model(k)?.predict(points)
}
