//! Polynomial chaos expansions of single trajectories.
//!
//! [`fit_sparse`] runs degree- and q-norm-adaptive hybrid LARS and keeps the
//! candidate basis with the smallest relative leave-one-out error;
//! [`fit_ols`] re-fits on a fixed basis.

mod lars;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{eval_basis, total_degree_set, InputModel, MultiIndex, MultiIndexSet, UnivariateTable};
use crate::error::{Error, Result};

/// Design-matrix condition numbers above this are rejected.
pub const MAX_CONDITION: f64 = 1e10;

/// A truncated expansion `sum_a c_a psi_a(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceModel {
    pub input_model: InputModel,
    pub indices: MultiIndexSet,
    pub coeffs: Vec<f64>,
    /// Relative leave-one-out error (normalized by the sample variance of y).
    pub loo_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    LarsHybrid,
    Ols,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_degree: u32,
    pub degree_candidates: Vec<u32>,
    pub q_candidates: Vec<f64>,
    pub solver: Solver,
}

impl FitConfig {
    /// Degrees `1..=max_degree`, q-norms {0.5, 0.75, 1}, hybrid LARS.
    pub fn with_max_degree(max_degree: u32) -> Self {
        Self {
            max_degree,
            degree_candidates: (1..=max_degree.max(1)).collect(),
            q_candidates: vec![0.5, 0.75, 1.0],
            solver: Solver::LarsHybrid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree_candidates.is_empty() || self.q_candidates.is_empty() {
            return Err(Error::Config("degree and q-norm candidate sets must be non-empty".into()));
        }
        if let Some(&q) = self.q_candidates.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
            return Err(Error::Config(format!("q-norm candidate {q} not in (0, 1]")));
        }
        if let Some(&p) = self.degree_candidates.iter().find(|&&p| p > self.max_degree) {
            return Err(Error::Config(format!("degree candidate {p} exceeds max_degree {}", self.max_degree)));
        }
        Ok(())
    }
}

impl PceModel {
    /// Model with a single constant term.
    pub fn constant(input_model: InputModel, value: f64) -> Self {
        let d = input_model.dims();
        Self {
            input_model,
            indices: MultiIndexSet::new(vec![MultiIndex::zero(d)]).expect("single index"),
            coeffs: vec![value],
            loo_error: 0.0,
        }
    }

    /// Coefficient of `alpha`, zero if it is not in the basis.
    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.indices.position(alpha).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn mean(&self) -> f64 {
        self.indices
            .iter()
            .zip(&self.coeffs)
            .filter(|(a, _)| a.is_zero())
            .map(|(_, c)| c)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        self.indices
            .iter()
            .zip(&self.coeffs)
            .filter(|(a, _)| !a.is_zero())
            .map(|(_, c)| c * c)
            .sum()
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        let t = self.input_model.to_standard(x)?;
        let table = UnivariateTable::new(&self.input_model, &self.indices.max_degrees(), &t);
        Ok(self.indices.iter().zip(&self.coeffs).map(|(a, c)| c * table.product(a)).sum())
    }

    pub fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        predict(self, points)
    }
}

/// Evaluates the expansion at every point.
pub fn predict(model: &PceModel, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let max_deg = model.indices.max_degrees();
    points
        .iter()
        .map(|x| {
            let t = model.input_model.to_standard(x)?;
            let table = UnivariateTable::new(&model.input_model, &max_deg, &t);
            Ok(model.indices.iter().zip(&model.coeffs).map(|(a, c)| c * table.product(a)).sum())
        })
        .collect()
}

fn sample_variance(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn is_constant(y: &[f64], mean: f64, var: f64) -> bool {
    var <= 1e-28 * mean.abs().max(1.0).powi(2) || y.iter().all(|&v| v == y[0])
}

fn check_data(points: &[Vec<f64>], y: &[f64], input: &InputModel) -> Result<()> {
    if points.len() != y.len() {
        return Err(Error::Data(format!("{} points but {} responses", points.len(), y.len())));
    }
    if y.len() < 2 {
        return Err(Error::Data("at least two samples are required".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite response value".into()));
    }
    if points.iter().any(|x| x.len() != input.dims()) {
        return Err(Error::Data("point dimension does not match the input model".into()));
    }
    Ok(())
}

/// Least-squares solution on a fixed design, with its relative LOO error.
pub(crate) fn ols_on_design(psi: &DMatrix<f64>, y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let (n, k) = psi.shape();
    if k == 0 {
        return Err(Error::Fit { msg: "empty basis".into(), condition: f64::INFINITY });
    }
    if k > n {
        return Err(Error::Fit {
            msg: format!("{k} regressors exceed {n} samples"),
            condition: f64::INFINITY,
        });
    }
    let qr = psi.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Fit { msg: "singular normal equations".into(), condition });
    }
    let q = qr.q();
    let yv = DVector::from_column_slice(y);
    let qty = q.transpose() * &yv;
    let coeffs = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::Fit { msg: "triangular solve failed".into(), condition })?;
    let fitted = psi * &coeffs;
    let (mean, var) = sample_variance(y);
    let loo = if is_constant(y, mean, var) {
        0.0
    } else {
        let mut s = 0.0;
        for i in 0..n {
            let hi: f64 = q.row(i).iter().map(|v| v * v).sum();
            let denom = 1.0 - hi;
            if denom <= 1e-10 {
                s = f64::INFINITY;
                break;
            }
            s += ((y[i] - fitted[i]) / denom).powi(2);
        }
        s / n as f64 / var
    };
    Ok((coeffs.iter().copied().collect(), loo))
}

/// Ordinary least squares on exactly the regressors in `set`.
pub fn fit_ols(points: &[Vec<f64>], y: &[f64], input: &InputModel, set: &MultiIndexSet) -> Result<PceModel> {
    check_data(points, y, input)?;
    let psi = eval_basis(set, input, points)?;
    let (coeffs, loo_error) = ols_on_design(&psi, y)?;
    Ok(PceModel {
        input_model: input.clone(),
        indices: set.clone(),
        coeffs,
        loo_error,
    })
}

struct Candidate {
    columns: Vec<usize>,
    loo: f64,
}

/// Degree- and q-norm-adaptive sparse regression of one trajectory.
pub fn fit_sparse(points: &[Vec<f64>], y: &[f64], input: &InputModel, cfg: &FitConfig) -> Result<PceModel> {
    cfg.validate()?;
    check_data(points, y, input)?;
    let d = input.dims();
    if y.len() < d + 1 {
        return Err(Error::Data(format!("{} samples are too few for {d} inputs", y.len())));
    }
    let (mean, var) = sample_variance(y);
    if is_constant(y, mean, var) {
        return Ok(PceModel::constant(input.clone(), mean));
    }

    let mut degrees = cfg.degree_candidates.clone();
    degrees.sort_unstable();
    degrees.dedup();
    let p_top = *degrees.last().unwrap();
    let full = total_degree_set(d, p_top, 1.0)?;
    let psi = eval_basis(&full, input, points)?;
    let centered = lars::CenteredDesign::new(&psi);
    let y_c: Vec<f64> = y.iter().map(|v| v - mean).collect();

    let mut candidates: Vec<Candidate> = Vec::new();
    for &q in &cfg.q_candidates {
        let mut prev = f64::INFINITY;
        let mut increases = 0;
        for &p in &degrees {
            let set = total_degree_set(d, p, q)?;
            let cols: Vec<usize> = set
                .iter()
                .filter(|a| !a.is_zero())
                .filter_map(|a| full.position(a))
                .collect();
            let cand = match cfg.solver {
                Solver::LarsHybrid => {
                    let path = lars::hybrid_path(&centered, &cols, &y_c, var);
                    let (k, loo) = path.best();
                    Candidate { columns: path.order[..k].to_vec(), loo }
                }
                Solver::Ols => {
                    let mut columns = vec![0];
                    columns.extend(&cols);
                    let loo = if columns.len() < y.len() {
                        let sub = psi.select_columns(&columns);
                        ols_on_design(&sub, y).map_or(f64::INFINITY, |(_, l)| l)
                    } else {
                        f64::INFINITY
                    };
                    Candidate { columns: cols, loo }
                }
            };
            let loo = cand.loo;
            candidates.push(cand);
            if loo > prev {
                increases += 1;
                if increases >= 2 {
                    break;
                }
            } else {
                increases = 0;
            }
            prev = loo;
        }
    }

    let mut ranked: Vec<&Candidate> = candidates.iter().filter(|c| !c.loo.is_nan()).collect();
    ranked.sort_by(|a, b| a.loo.partial_cmp(&b.loo).unwrap_or(std::cmp::Ordering::Equal));
    let mut last_err = None;
    for cand in ranked {
        let mut chosen: Vec<MultiIndex> = vec![MultiIndex::zero(d)];
        chosen.extend(cand.columns.iter().map(|&j| full.as_slice()[j].clone()));
        let set = MultiIndexSet::new(chosen)?;
        let columns: Vec<usize> = set.iter().map(|a| full.position(a).unwrap()).collect();
        let sub = psi.select_columns(&columns);
        match ols_on_design(&sub, y) {
            Ok((coeffs, loo_error)) => {
                return Ok(PceModel {
                    input_model: input.clone(),
                    indices: set,
                    coeffs,
                    loo_error,
                })
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(Error::Fit {
        msg: "no admissible candidate basis".into(),
        condition: f64::INFINITY,
    }))
}

/// Variance shares of groups of input dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
}

/// First-order and total Sobol' indices of each group, from squared coefficients.
pub fn sobol_indices(model: &PceModel, groups: &[Vec<usize>]) -> Result<SobolIndices> {
    let d = model.input_model.dims();
    let mut owner = vec![usize::MAX; d];
    for (g, dims) in groups.iter().enumerate() {
        for &i in dims {
            if i >= d {
                return Err(Error::Config(format!("group dimension {i} out of range")));
            }
            if owner[i] != usize::MAX {
                return Err(Error::Config(format!("dimension {i} appears in two groups")));
            }
            owner[i] = g;
        }
    }
    if owner.contains(&usize::MAX) {
        return Err(Error::Config("groups do not cover every dimension".into()));
    }
    let total_var = model.variance();
    if !(total_var > 0.0) {
        return Err(Error::UndefinedIndex("model has zero variance".into()));
    }
    let mut first = vec![0.0; groups.len()];
    let mut total = vec![0.0; groups.len()];
    let mut touched = vec![false; groups.len()];
    for (a, c) in model.indices.iter().zip(&model.coeffs) {
        if a.is_zero() {
            continue;
        }
        touched.iter_mut().for_each(|t| *t = false);
        for i in a.support() {
            touched[owner[i]] = true;
        }
        let c2 = c * c;
        let n_touched = touched.iter().filter(|&&t| t).count();
        for (g, &t) in touched.iter().enumerate() {
            if t {
                total[g] += c2;
                if n_touched == 1 {
                    first[g] += c2;
                }
            }
        }
    }
    Ok(SobolIndices {
        first_order: first.iter().map(|v| v / total_var).collect(),
        total: total.iter().map(|v| v / total_var).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Marginal;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;

    fn uniform_input(d: usize) -> InputModel {
        InputModel::new(vec![Marginal::Uniform { a: -1.0, b: 1.0 }; d]).unwrap()
    }

    fn design(input: &InputModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
        input.sample_n(&mut substream(seed, 0), n)
    }

    fn idx(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn constant_response() {
        let input = uniform_input(2);
        let x = design(&input, 12, 1);
        let y = vec![3.5; 12];
        let m = fit_sparse(&x, &y, &input, &FitConfig::with_max_degree(3)).unwrap();
        assert_eq!(m.indices.len(), 1);
        assert_eq!(m.coeffs, vec![3.5]);
        assert_eq!(m.loo_error, 0.0);
    }

    #[test]
    fn recovers_single_term() {
        let input = uniform_input(2);
        let x = design(&input, 20, 2);
        let set = MultiIndexSet::new(vec![idx(&[1, 0])]).unwrap();
        let y: Vec<f64> = eval_basis(&set, &input, &x).unwrap().column(0).iter().map(|v| 2.0 * v).collect();
        let m = fit_sparse(&x, &y, &input, &FitConfig::with_max_degree(3)).unwrap();
        assert_abs_diff_eq!(m.coeff(&idx(&[1, 0])), 2.0, epsilon = 1e-10);
        for (a, c) in m.indices.iter().zip(&m.coeffs) {
            if *a != idx(&[1, 0]) {
                assert!(c.abs() < 1e-10, "{a:?} -> {c}");
            }
        }
    }

    #[test]
    fn data_errors() {
        let input = uniform_input(2);
        let cfg = FitConfig::with_max_degree(2);
        assert!(matches!(fit_sparse(&[vec![0.0, 0.0]], &[1.0], &input, &cfg), Err(Error::Data(_))));
        assert!(matches!(
            fit_sparse(&[vec![0.0, 0.0], vec![0.1, 0.2]], &[1.0, 2.0], &input, &cfg),
            Err(Error::Data(_))
        ));
        let x = design(&input, 5, 3);
        assert!(matches!(fit_sparse(&x, &[1.0, 2.0, f64::NAN, 0.0, 1.0], &input, &cfg), Err(Error::Data(_))));
        let bad = FitConfig { q_candidates: vec![], ..cfg };
        assert!(matches!(fit_sparse(&x, &[1.0; 5], &input, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn ols_intercept_is_mean() {
        let input = uniform_input(1);
        let x = design(&input, 9, 4);
        let y: Vec<f64> = (0..9).map(|i| (i as f64).sin() * 3.0 + 1.0).collect();
        let set = MultiIndexSet::new(vec![idx(&[0])]).unwrap();
        let m = fit_ols(&x, &y, &input, &set).unwrap();
        assert_abs_diff_eq!(m.coeffs[0], y.iter().sum::<f64>() / 9.0, epsilon = 1e-13);
    }

    #[test]
    fn ols_exact_and_superset_recovery() {
        let input = uniform_input(2);
        let x = design(&input, 30, 5);
        let support = MultiIndexSet::new(vec![idx(&[0, 0]), idx(&[1, 0]), idx(&[1, 2]), idx(&[0, 3])]).unwrap();
        let truth = [0.5, -1.25, 2.0, 0.75];
        let psi = eval_basis(&support, &input, &x).unwrap();
        let y: Vec<f64> = (0..x.len()).map(|i| (0..4).map(|j| truth[j] * psi[(i, j)]).sum()).collect();
        let m = fit_ols(&x, &y, &input, &support).unwrap();
        for (c, t) in m.coeffs.iter().zip(truth) {
            assert_abs_diff_eq!(*c, t, epsilon = 1e-10);
        }
        let bigger = total_degree_set(2, 3, 1.0).unwrap();
        let m = fit_ols(&x, &y, &input, &bigger).unwrap();
        for a in bigger.iter() {
            let expect = support.position(a).map_or(0.0, |j| truth[j]);
            assert_abs_diff_eq!(m.coeff(a), expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn ols_rejects_singular_design() {
        let input = uniform_input(1);
        let x = vec![vec![0.5]; 6];
        let set = total_degree_set(1, 2, 1.0).unwrap();
        let err = fit_ols(&x, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &input, &set).unwrap_err();
        assert!(matches!(err, Error::Fit { .. }), "{err}");
    }

    #[test]
    fn hybrid_lars_equals_ols_on_support() {
        let input = uniform_input(3);
        let x = design(&input, 40, 6);
        let y: Vec<f64> = x.iter().map(|p| (2.0 * p[0]).sin() + p[1] * p[2] + 0.3 * p[2].powi(3)).collect();
        let m = fit_sparse(&x, &y, &input, &FitConfig::with_max_degree(5)).unwrap();
        let again = fit_ols(&x, &y, &input, &m.indices).unwrap();
        for (a, b) in m.coeffs.iter().zip(&again.coeffs) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(m.loo_error, again.loo_error, epsilon = 1e-12);
    }

    #[test]
    fn loo_shortcut_matches_refitting() {
        let input = uniform_input(2);
        for seed in 0..5 {
            let x = design(&input, 25 + seed as usize * 5, 10 + seed);
            let y: Vec<f64> = x.iter().map(|p| (p[0] * 1.7).exp() + p[1] * p[0] - p[1].powi(2)).collect();
            let set = total_degree_set(2, 3, 1.0).unwrap();
            let m = fit_ols(&x, &y, &input, &set).unwrap();
            let n = x.len();
            let mut sse = 0.0;
            for i in 0..n {
                let xs: Vec<Vec<f64>> = x.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| v.clone()).collect();
                let ys: Vec<f64> = y.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                let mi = fit_ols(&xs, &ys, &input, &set).unwrap();
                sse += (y[i] - mi.predict_one(&x[i]).unwrap()).powi(2);
            }
            let (_, var) = sample_variance(&y);
            let explicit = sse / n as f64 / var;
            assert!(((m.loo_error - explicit) / explicit).abs() < 1e-8, "{} vs {explicit}", m.loo_error);
        }
    }

    #[test]
    fn predict_trivial_models() {
        let input = uniform_input(2);
        let pts = design(&input, 7, 8);
        let c = PceModel::constant(input.clone(), 3.0);
        assert!(c.predict(&pts).unwrap().iter().all(|&v| v == 3.0));
        let set = total_degree_set(2, 2, 1.0).unwrap();
        let z = PceModel { input_model: input, coeffs: vec![0.0; set.len()], indices: set, loo_error: 0.0 };
        assert!(z.predict(&pts).unwrap().iter().all(|&v| v == 0.0));
        assert!(z.predict(&[vec![3.0, 0.0]]).is_err());
    }

    #[test]
    fn sobol_examples() {
        let input = uniform_input(3);
        let set = MultiIndexSet::new(vec![idx(&[0, 0, 0]), idx(&[1, 0, 0])]).unwrap();
        let m = PceModel { input_model: input.clone(), indices: set, coeffs: vec![1.0, 2.0], loo_error: 0.0 };
        let s = sobol_indices(&m, &[vec![0], vec![1], vec![2]]).unwrap();
        assert_eq!(s.first_order, vec![1.0, 0.0, 0.0]);
        assert_eq!(s.total, vec![1.0, 0.0, 0.0]);

        let set = MultiIndexSet::new(vec![idx(&[0, 0, 0]), idx(&[2, 0, 0]), idx(&[0, 1, 0]), idx(&[0, 0, 3])]).unwrap();
        let m = PceModel { input_model: input.clone(), indices: set, coeffs: vec![5.0, 1.0, 2.0, -1.5], loo_error: 0.0 };
        let s = sobol_indices(&m, &[vec![0, 1], vec![2]]).unwrap();
        assert_abs_diff_eq!(s.first_order[0] + s.first_order[1], 1.0, epsilon = 1e-15);
        assert_eq!(s.first_order, s.total);

        let z = PceModel::constant(input, 1.0);
        assert!(matches!(sobol_indices(&z, &[vec![0, 1, 2]]), Err(Error::UndefinedIndex(_))));
        assert!(sobol_indices(&m, &[vec![0, 1]]).is_err());
        assert!(sobol_indices(&m, &[vec![0, 1], vec![1, 2]]).is_err());
    }
}
