//! Validation metrics: the averaged normalized Wasserstein error of the
//! marginals, the scaled Frobenius error of the covariance, and the
//! Monte Carlo lower-bound band.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::marginal::kde_bandwidth;
use crate::emulator::{PceKdeBaseline, StochasticEmulator};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::testbeds::{replicate, Benchmark, ValidationSet};

/// Order-2 Wasserstein distance between two empirical distributions.
///
/// Equal sizes pair the order statistics. Otherwise the smaller sample's
/// quantile function is interpolated on the probability midpoints of the
/// larger one.
pub fn wasserstein2(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Data("Wasserstein distance of an empty sample".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(wasserstein2_sorted(&a, &b))
}

fn wasserstein2_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let m = big.len();
    let ss: f64 = if m == small.len() {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
    } else {
        big.iter()
            .enumerate()
            .map(|(j, &x)| (x - midpoint_quantile(small, (j as f64 + 0.5) / m as f64)).powi(2))
            .sum()
    };
    (ss / m as f64).sqrt()
}

/// Quantile of a sorted sample whose `i`-th value sits at probability
/// `(i + 0.5) / n`, linear in between and flat beyond the ends.
fn midpoint_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * n as f64 - 0.5;
    if pos <= 0.0 {
        return sorted[0];
    }
    let i = pos.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    let w = pos - i as f64;
    sorted[i] * (1.0 - w) + sorted[i + 1] * w
}

/// Unbiased sample standard deviation.
pub fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile (order statistics at `p (n - 1)`).
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    if i + 1 >= s.len() {
        s[s.len() - 1]
    } else {
        s[i] * (1.0 - w) + s[i + 1] * w
    }
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalError {
    /// Mean of the normalized distances over the retained points.
    pub value: f64,
    /// `W2 / SD` per validation point; `None` where the reference SD is zero.
    pub per_point: Vec<Option<f64>>,
    pub excluded: usize,
}

/// Averaged normalized W2 between reference samples and model samples at
/// the same points. Both matrices hold one column per point.
pub fn eps_marg_from_samples(reference: &DMatrix<f64>, model: &DMatrix<f64>) -> Result<MarginalError> {
    if reference.ncols() != model.ncols() {
        return Err(Error::Data(format!(
            "{} reference points but {} model points",
            reference.ncols(),
            model.ncols()
        )));
    }
    if reference.nrows() < 2 || model.nrows() == 0 {
        return Err(Error::Data("at least two reference replications and one model sample are required".into()));
    }
    let per_point: Vec<Option<f64>> = (0..reference.ncols())
        .into_par_iter()
        .map(|i| {
            let mut a: Vec<f64> = reference.column(i).iter().copied().collect();
            let sd = sample_sd(&a);
            if !(sd > 0.0) {
                return None;
            }
            let mut b: Vec<f64> = model.column(i).iter().copied().collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            Some(wasserstein2_sorted(&a, &b) / sd)
        })
        .collect();
    let kept: Vec<f64> = per_point.iter().flatten().copied().collect();
    let excluded = per_point.len() - kept.len();
    if excluded > 0 {
        log::warn!("{excluded} validation points with zero spread excluded from the marginal error");
    }
    if kept.is_empty() {
        return Err(Error::Degenerate("every validation point has zero spread".into()));
    }
    Ok(MarginalError { value: kept.iter().sum::<f64>() / kept.len() as f64, per_point, excluded })
}

/// Marginal error of an emulator using `n_emu` sampled trajectories.
pub fn eps_marg(e: &StochasticEmulator, val: &ValidationSet, n_emu: usize, seed: u64) -> Result<MarginalError> {
    let model = e.sample_at(&val.points, n_emu, seed)?;
    eps_marg_from_samples(&val.values, &model)
}

/// Samples of the trajectory-wise KDE at each point (n x points), drawn as
/// a smoothed bootstrap: a random trajectory value plus a Gaussian kernel
/// offset.
pub fn baseline_samples(b: &PceKdeBaseline, points: &[Vec<f64>], n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let values = b.values_at(points)?;
    let r = values.nrows();
    let cols: Vec<Vec<f64>> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let v: Vec<f64> = values.column(i).iter().copied().collect();
            let sd = sample_sd(&v);
            let h = if sd > 0.0 { kde_bandwidth(sd, r) } else { 0.0 };
            let mut rng = substream(seed, i as u64);
            (0..n)
                .map(|_| {
                    let j = rng.random_range(0..r);
                    let z: f64 = rng.sample(StandardNormal);
                    v[j] + h * z
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, points.len(), |j, i| cols[i][j]))
}

/// Empirical covariance of the columns of `values` (replications x points).
pub fn empirical_covariance(values: &DMatrix<f64>) -> DMatrix<f64> {
    let r = values.nrows();
    let mean = values.row_mean();
    let mut c = values.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c.transpose() * &c / (r as f64 - 1.0)
}

/// `(1 / N_val) * ||C_ref - C_model||_F`.
pub fn eps_cov_from_matrices(reference: &DMatrix<f64>, model: &DMatrix<f64>) -> Result<f64> {
    if reference.shape() != model.shape() {
        return Err(Error::Data("covariance matrices differ in shape".into()));
    }
    Ok((reference - model).norm() / reference.nrows() as f64)
}

pub fn eps_cov(e: &StochasticEmulator, val: &ValidationSet) -> Result<f64> {
    if val.values.nrows() < 2 {
        return Err(Error::Data("at least two validation replications are required".into()));
    }
    let model = e.covariance(&val.points, &val.points)?;
    eps_cov_from_matrices(&empirical_covariance(&val.values), &model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    pub values: Vec<f64>,
}

impl Band {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self {
            median: median(&values),
            q05: quantile(&values, 0.05),
            q25: quantile(&values, 0.25),
            q75: quantile(&values, 0.75),
            q95: quantile(&values, 0.95),
            values,
        }
    }
}

/// Marginal error between pairs of independent simulator sample sets on
/// shared points: the error a perfect emulator would show at this
/// validation size.
pub fn lower_bound_band(bench: &Benchmark, n_val: usize, r_val: usize, pairs: usize, seed: u64) -> Result<Band> {
    if pairs == 0 {
        return Err(Error::Config("the lower-bound band needs at least one pair".into()));
    }
    let input = bench.input_model();
    let mut values = Vec::with_capacity(pairs);
    for p in 0..pairs as u64 {
        let points = input.sample_n(&mut substream(derive_seed(seed, &[p, 0]), 0), n_val);
        let a = replicate(bench, &points, r_val, derive_seed(seed, &[p, 1]))?;
        let b = replicate(bench, &points, r_val, derive_seed(seed, &[p, 2]))?;
        values.push(match eps_marg_from_samples(&a, &b) {
            Ok(m) => m.value,
            // A simulator without latent noise.
            Err(Error::Degenerate(_)) => 0.0,
            Err(e) => return Err(e),
        });
    }
    Ok(Band::from_values(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub eps_marg: f64,
    pub eps_cov: f64,
    pub per_point_w2: Vec<Option<f64>>,
    pub excluded_points: usize,
    pub band: Option<Band>,
}

impl ErrorReport {
    pub fn new(marg: MarginalError, eps_cov: f64, band: Option<Band>) -> Self {
        Self { eps_marg: marg.value, eps_cov, per_point_w2: marg.per_point, excluded_points: marg.excluded, band }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per validation point: `point,normalized_w2` (empty when excluded).
    pub fn per_point_csv(&self) -> String {
        let mut s = String::from("point,normalized_w2\n");
        for (i, v) in self.per_point_w2.iter().enumerate() {
            match v {
                Some(v) => s.push_str(&format!("{i},{v}\n")),
                None => s.push_str(&format!("{i},\n")),
            }
        }
        s
    }
}
