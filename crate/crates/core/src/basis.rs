//! Orthonormal polynomial bases on independent input models.
//!
//! Uniform marginals are paired with Legendre polynomials, Gaussian and
//! lognormal marginals with probabilists' Hermite polynomials (lognormal
//! through the log transform). All families are normalized so that
//! `E[psi_m(X) psi_n(X)] = delta_mn` under the standardized density, and are
//! evaluated with their three-term recurrences.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of one independent input coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Marginal {
    Uniform { a: f64, b: f64 },
    Gaussian { mu: f64, sigma: f64 },
    /// Parameters of the underlying normal distribution of `ln X`.
    Lognormal { mu_ln: f64, sigma_ln: f64 },
}

/// Orthonormal polynomial family associated with a marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyFamily {
    Legendre,
    Hermite,
}

impl Marginal {
    /// Lognormal marginal with the given mean and standard deviation of `X`
    /// itself (not of `ln X`).
    pub fn lognormal_from_moments(mean: f64, sd: f64) -> Self {
        let s2 = (1.0 + (sd / mean).powi(2)).ln();
        Marginal::Lognormal {
            mu_ln: mean.ln() - 0.5 * s2,
            sigma_ln: s2.sqrt(),
        }
    }

    pub fn family(&self) -> PolyFamily {
        match self {
            Marginal::Uniform { .. } => PolyFamily::Legendre,
            Marginal::Gaussian { .. } | Marginal::Lognormal { .. } => PolyFamily::Hermite,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Uniform { a, b } => a.is_finite() && b.is_finite() && a < b,
            Marginal::Gaussian { mu, sigma } => mu.is_finite() && sigma.is_finite() && sigma > 0.0,
            Marginal::Lognormal { mu_ln, sigma_ln } => {
                mu_ln.is_finite() && sigma_ln.is_finite() && sigma_ln > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid marginal parameters {self:?}")))
        }
    }

    /// Isoprobabilistic map into the standardized space of the polynomial family.
    pub fn to_standard(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite input {x}")));
        }
        match *self {
            Marginal::Uniform { a, b } => {
                let slack = 1e-12 * (b - a);
                if x < a - slack || x > b + slack {
                    return Err(Error::Domain(format!("{x} outside uniform support [{a}, {b}]")));
                }
                Ok(((2.0 * x - a - b) / (b - a)).clamp(-1.0, 1.0))
            }
            Marginal::Gaussian { mu, sigma } => Ok((x - mu) / sigma),
            Marginal::Lognormal { mu_ln, sigma_ln } => {
                if x <= 0.0 {
                    return Err(Error::Domain(format!("non-positive lognormal value {x}")));
                }
                Ok((x.ln() - mu_ln) / sigma_ln)
            }
        }
    }

    /// Inverse of [`Marginal::to_standard`].
    pub fn from_standard(&self, t: f64) -> f64 {
        match *self {
            Marginal::Uniform { a, b } => a + 0.5 * (b - a) * (t + 1.0),
            Marginal::Gaussian { mu, sigma } => mu + sigma * t,
            Marginal::Lognormal { mu_ln, sigma_ln } => (mu_ln + sigma_ln * t).exp(),
        }
    }

    /// Draws a standardized variate (uniform on [-1,1] or standard normal).
    pub fn sample_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family() {
            PolyFamily::Legendre => 2.0 * rng.random::<f64>() - 1.0,
            PolyFamily::Hermite => rng.sample(StandardNormal),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.from_standard(self.sample_standard(rng))
    }

    /// Quantile of the marginal at probability `u`.
    pub fn quantile(&self, u: f64) -> f64 {
        match self.family() {
            PolyFamily::Legendre => self.from_standard(2.0 * u - 1.0),
            PolyFamily::Hermite => self.from_standard(crate::special::norm_inv(u)),
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

/// Independent joint input distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputModel {
    pub marginals: Vec<Marginal>,
}

impl InputModel {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::Config("input model needs at least one marginal".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn dims(&self) -> usize {
        self.marginals.len()
    }

    pub fn to_standard(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dims() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, input model has {}",
                x.len(),
                self.dims()
            )));
        }
        x.iter()
            .zip(&self.marginals)
            .map(|(&xi, m)| m.to_standard(xi))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.marginals.iter().map(|m| m.sample(rng)).collect()
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Fills `out[n]` with the orthonormal polynomial of degree `n` at `t`, for
/// `n = 0..out.len()`.
pub fn univariate_values(family: PolyFamily, t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    match family {
        PolyFamily::Legendre => {
            out[1] = 3f64.sqrt() * t;
            for n in 1..out.len() - 1 {
                let nf = n as f64;
                let a_n = nf / (4.0 * nf * nf - 1.0).sqrt();
                let a_next = (nf + 1.0) / (4.0 * (nf + 1.0) * (nf + 1.0) - 1.0).sqrt();
                out[n + 1] = (t * out[n] - a_n * out[n - 1]) / a_next;
            }
        }
        PolyFamily::Hermite => {
            out[1] = t;
            for n in 1..out.len() - 1 {
                let nf = n as f64;
                out[n + 1] = (t * out[n] - nf.sqrt() * out[n - 1]) / (nf + 1.0).sqrt();
            }
        }
    }
}

/// Degree-`degree` orthonormal polynomial of the marginal's family at the
/// standardized point `t`.
pub fn eval_univariate(marginal: &Marginal, degree: usize, t: f64) -> Result<f64> {
    let family = marginal.family();
    if family == PolyFamily::Legendre && !(-1.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("{t} outside the Legendre domain [-1, 1]")));
    }
    if !t.is_finite() {
        return Err(Error::Domain(format!("non-finite standardized point {t}")));
    }
    let mut vals = vec![0.0; degree + 1];
    univariate_values(family, t, &mut vals);
    Ok(vals[degree])
}

/// Exponent vector of one multivariate basis polynomial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dims: usize) -> Self {
        MultiIndex(vec![0; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn q_norm(&self, q: f64) -> f64 {
        self.0
            .iter()
            .filter(|&&a| a > 0)
            .map(|&a| (a as f64).powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }

    /// Dimensions with a non-zero exponent.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &a)| a > 0).map(|(i, _)| i)
    }
}

/// Graded order: total degree first, then reverse lexicographic on the
/// exponents, so that `(1,0)` precedes `(0,1)`.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sorted, duplicate-free set of multi-indices of equal length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MultiIndex>", into = "Vec<MultiIndex>")]
pub struct MultiIndexSet {
    indices: Vec<MultiIndex>,
}

impl MultiIndexSet {
    pub fn new(mut indices: Vec<MultiIndex>) -> Result<Self> {
        if let Some(first) = indices.first() {
            let d = first.dims();
            if indices.iter().any(|a| a.dims() != d) {
                return Err(Error::Config("multi-indices of different lengths".into()));
            }
        }
        indices.sort();
        indices.dedup();
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dims(&self) -> Option<usize> {
        self.indices.first().map(MultiIndex::dims)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.indices.iter()
    }

    pub fn as_slice(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn get(&self, i: usize) -> Option<&MultiIndex> {
        self.indices.get(i)
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.indices.binary_search(alpha).ok()
    }

    pub fn contains(&self, alpha: &MultiIndex) -> bool {
        self.position(alpha).is_some()
    }

    /// Largest exponent per dimension.
    pub fn max_degrees(&self) -> Vec<u32> {
        let d = self.dims().unwrap_or(0);
        let mut out = vec![0; d];
        for a in &self.indices {
            for (m, &e) in out.iter_mut().zip(&a.0) {
                *m = (*m).max(e);
            }
        }
        out
    }

    pub fn union(&self, other: &MultiIndexSet) -> Result<MultiIndexSet> {
        let mut all = self.indices.clone();
        all.extend(other.indices.iter().cloned());
        MultiIndexSet::new(all)
    }
}

impl TryFrom<Vec<MultiIndex>> for MultiIndexSet {
    type Error = Error;

    fn try_from(v: Vec<MultiIndex>) -> Result<Self> {
        MultiIndexSet::new(v)
    }
}

impl From<MultiIndexSet> for Vec<MultiIndex> {
    fn from(s: MultiIndexSet) -> Self {
        s.indices
    }
}

impl<'a> IntoIterator for &'a MultiIndexSet {
    type Item = &'a MultiIndex;
    type IntoIter = std::slice::Iter<'a, MultiIndex>;

    fn into_iter(self) -> Self::IntoIter {
        self.indices.iter()
    }
}

/// All multi-indices in `d` dimensions whose q-quasi-norm does not exceed `p`.
pub fn total_degree_set(d: usize, p: u32, q: f64) -> Result<MultiIndexSet> {
    if d == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!("q-norm parameter {q} not in (0, 1]")));
    }
    let mut out = Vec::new();
    let mut current = vec![0u32; d];
    enumerate_total_degree(0, p, &mut current, &mut out);
    let tol = 1e-10 * (p.max(1) as f64);
    out.retain(|a| q == 1.0 || a.q_norm(q) <= p as f64 + tol);
    MultiIndexSet::new(out)
}

fn enumerate_total_degree(dim: usize, remaining: u32, current: &mut [u32], out: &mut Vec<MultiIndex>) {
    if dim == current.len() {
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for e in 0..=remaining {
        current[dim] = e;
        enumerate_total_degree(dim + 1, remaining - e, current, out);
    }
    current[dim] = 0;
}

/// Per-dimension tables of univariate polynomial values at one standardized point.
pub(crate) struct UnivariateTable {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl UnivariateTable {
    pub(crate) fn new(input: &InputModel, max_degrees: &[u32], t: &[f64]) -> Self {
        let mut offsets = Vec::with_capacity(max_degrees.len());
        let mut total = 0;
        for &m in max_degrees {
            offsets.push(total);
            total += m as usize + 1;
        }
        let mut values = vec![0.0; total];
        for (i, (&m, marg)) in max_degrees.iter().zip(&input.marginals).enumerate() {
            let start = offsets[i];
            univariate_values(marg.family(), t[i], &mut values[start..start + m as usize + 1]);
        }
        Self { offsets, values }
    }

    #[inline]
    pub(crate) fn product(&self, alpha: &MultiIndex) -> f64 {
        let mut v = 1.0;
        for (i, &e) in alpha.0.iter().enumerate() {
            if e > 0 {
                v *= self.values[self.offsets[i] + e as usize];
            }
        }
        v
    }
}

fn check_dims(set: &MultiIndexSet, input: &InputModel) -> Result<()> {
    match set.dims() {
        Some(d) if d != input.dims() => Err(Error::Config(format!(
            "multi-index length {d} does not match input dimension {}",
            input.dims()
        ))),
        _ => Ok(()),
    }
}

/// Values of every basis polynomial of `set` at one physical point.
pub fn eval_basis_row(set: &MultiIndexSet, input: &InputModel, x: &[f64]) -> Result<Vec<f64>> {
    check_dims(set, input)?;
    let t = input.to_standard(x)?;
    let table = UnivariateTable::new(input, &set.max_degrees(), &t);
    Ok(set.iter().map(|a| table.product(a)).collect())
}

/// Design matrix with entry `(i, j) = psi_{alpha_j}(x_i)`.
pub fn eval_basis(set: &MultiIndexSet, input: &InputModel, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    check_dims(set, input)?;
    let max_deg = set.max_degrees();
    let mut psi = DMatrix::zeros(points.len(), set.len());
    for (i, x) in points.iter().enumerate() {
        let t = input.to_standard(x)?;
        let table = UnivariateTable::new(input, &max_deg, &t);
        for (j, a) in set.iter().enumerate() {
            psi[(i, j)] = table.product(a);
        }
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn u11() -> Marginal {
        Marginal::Uniform { a: -1.0, b: 1.0 }
    }

    #[test]
    fn univariate_examples() {
        assert_eq!(eval_univariate(&u11(), 0, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(eval_univariate(&u11(), 1, 0.5).unwrap(), 3f64.sqrt() * 0.5, epsilon = 1e-15);
        let g = Marginal::Gaussian { mu: 0.0, sigma: 1.0 };
        assert_abs_diff_eq!(eval_univariate(&g, 2, 0.0).unwrap(), -1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(eval_univariate(&u11(), 2, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn standardization() {
        let u = Marginal::Uniform { a: -std::f64::consts::PI, b: std::f64::consts::PI };
        assert_abs_diff_eq!(u.to_standard(0.0).unwrap(), 0.0);
        let g = Marginal::Gaussian { mu: 0.10, sigma: 0.0161812 };
        assert_abs_diff_eq!(g.to_standard(0.10).unwrap(), 0.0);
        let l = Marginal::Lognormal { mu_ln: 7.71, sigma_ln: 1.0056 };
        assert_abs_diff_eq!(l.to_standard(7.71f64.exp()).unwrap(), 0.0, epsilon = 1e-14);
        assert!(matches!(l.to_standard(0.0), Err(Error::Domain(_))));
        assert!(matches!(l.to_standard(-1.0), Err(Error::Domain(_))));
        assert!(matches!(u.to_standard(4.0), Err(Error::Domain(_))));
        for t in [-0.9, 0.0, 0.4] {
            assert_abs_diff_eq!(u.to_standard(u.from_standard(t)).unwrap(), t, epsilon = 1e-14);
            assert_abs_diff_eq!(l.to_standard(l.from_standard(t)).unwrap(), t, epsilon = 1e-12);
        }
    }

    #[test]
    fn lognormal_moment_conversion() {
        let m = Marginal::lognormal_from_moments(7.0, 0.7);
        let Marginal::Lognormal { mu_ln, sigma_ln } = m else { unreachable!() };
        let mean = (mu_ln + 0.5 * sigma_ln * sigma_ln).exp();
        let var = ((sigma_ln * sigma_ln).exp() - 1.0) * (2.0 * mu_ln + sigma_ln * sigma_ln).exp();
        assert_abs_diff_eq!(mean, 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var.sqrt(), 0.7, epsilon = 1e-12);
    }

    #[test]
    fn total_degree_examples() {
        let s = total_degree_set(1, 2, 1.0).unwrap();
        assert_eq!(s.as_slice(), &[MultiIndex(vec![0]), MultiIndex(vec![1]), MultiIndex(vec![2])]);
        let s = total_degree_set(2, 1, 1.0).unwrap();
        assert_eq!(
            s.as_slice(),
            &[MultiIndex(vec![0, 0]), MultiIndex(vec![1, 0]), MultiIndex(vec![0, 1])]
        );
        // q = 0.5 drops every index with two non-zero entries at p = 2.
        let s = total_degree_set(3, 2, 0.5).unwrap();
        let brute: Vec<MultiIndex> = (0..=2u32)
            .flat_map(|a| (0..=2u32).flat_map(move |b| (0..=2u32).map(move |c| MultiIndex(vec![a, b, c]))))
            .filter(|m| {
                let n: f64 = m.0.iter().map(|&e| (e as f64).sqrt()).sum::<f64>();
                n * n <= 2.0 + 1e-12
            })
            .collect();
        assert_eq!(s.len(), brute.len());
        assert!(!s.contains(&MultiIndex(vec![1, 1, 0])));
        assert!(s.contains(&MultiIndex(vec![2, 0, 0])));
        assert_eq!(s.len(), 7);
        assert!(total_degree_set(2, 2, 0.0).is_err());
        assert!(total_degree_set(2, 2, 1.5).is_err());
    }

    #[test]
    fn cardinality_binomial() {
        fn binom(n: u64, k: u64) -> u64 {
            (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
        }
        for d in 1..=5usize {
            for p in 0..=7u32 {
                let s = total_degree_set(d, p, 1.0).unwrap();
                assert_eq!(s.len() as u64, binom(d as u64 + p as u64, p as u64), "d={d} p={p}");
            }
        }
    }

    #[test]
    fn design_matrix_examples() {
        let input = InputModel::new(vec![u11(), u11()]).unwrap();
        let s = MultiIndexSet::new(vec![MultiIndex(vec![0, 0])]).unwrap();
        let pts = vec![vec![0.1, 0.2], vec![-0.7, 0.9], vec![0.3, -0.3]];
        let psi = eval_basis(&s, &input, &pts).unwrap();
        assert!(psi.iter().all(|&v| v == 1.0));
        let s = MultiIndexSet::new(vec![MultiIndex(vec![1, 0])]).unwrap();
        let psi = eval_basis(&s, &input, &[vec![0.5, 0.9]]).unwrap();
        assert_abs_diff_eq!(psi[(0, 0)], 0.8660254037844386, epsilon = 1e-12);
        assert!(eval_basis(&s, &input, &[vec![2.0, 0.0]]).is_err());
    }

    #[test]
    fn json_schema() {
        let input = InputModel::new(vec![
            Marginal::Uniform { a: 0.0, b: 1.0 },
            Marginal::Gaussian { mu: 0.0, sigma: 2.0 },
            Marginal::Lognormal { mu_ln: 1.0, sigma_ln: 0.5 },
        ])
        .unwrap();
        let s = serde_json::to_string(&input).unwrap();
        assert!(s.starts_with(r#"{"marginals":[{"type":"uniform","a":0.0,"b":1.0}"#));
        let back: InputModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, input);
        assert!(serde_json::from_str::<InputModel>(r#"{"marginals":[{"type":"weibull","k":1}]}"#).is_err());
    }
}
