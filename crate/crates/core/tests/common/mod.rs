//! Independent numerical oracles shared by the integration tests: a cyclic
//! Jacobi eigensolver and Golub-Welsch Gauss rules built on it.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, sorted by
/// decreasing eigenvalue. Eigenvectors are the columns of the second value.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        let scale: f64 = (0..n).map(|i| a[(i, i)].powi(2)).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                // Below rounding of both diagonal entries: annihilate without rotating.
                let diag = a[(p, p)].abs().min(a[(q, q)].abs());
                if apq == 0.0 || apq.abs() <= 1e-18 * diag {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = idx.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, idx[c])]);
    (values, vectors)
}

/// Gauss rule from the Jacobi matrix of a three-term recurrence with zero
/// diagonal and off-diagonal `b(k)`, `k = 1..n-1`, for a probability measure.
fn golub_welsch(n: usize, b: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        j[(k - 1, k)] = b(k);
        j[(k, k - 1)] = b(k);
    }
    let (vals, vecs) = jacobi_eigen(&j);
    let mut rule: Vec<(f64, f64)> = (0..n).map(|i| (vals[i], vecs[(0, i)].powi(2))).collect();
    rule.sort_by(|x, y| x.0.total_cmp(&y.0));
    rule.into_iter().unzip()
}

/// Gauss-Legendre rule for the uniform probability measure on [-1, 1].
pub fn gauss_uniform(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(n, |k| k as f64 / ((4 * k * k - 1) as f64).sqrt())
}

/// Gauss-Hermite rule for the standard normal measure.
pub fn gauss_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    golub_welsch(n, |k| (k as f64).sqrt())
}

/// Tensor product of one-dimensional rules.
pub fn tensor_rule(rules: &[(Vec<f64>, Vec<f64>)]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut points = vec![Vec::new()];
    let mut weights = vec![1.0];
    for (x, w) in rules {
        let mut np = Vec::with_capacity(points.len() * x.len());
        let mut nw = Vec::with_capacity(points.len() * x.len());
        for (p, pw) in points.iter().zip(&weights) {
            for (xi, wi) in x.iter().zip(w) {
                let mut q = p.clone();
                q.push(*xi);
                np.push(q);
                nw.push(pw * wi);
            }
        }
        points = np;
        weights = nw;
    }
    (points, weights)
}

/// Gauss rule for one input marginal, with nodes in physical units.
pub fn marginal_rule(m: &stochemu::basis::Marginal, n: usize) -> (Vec<f64>, Vec<f64>) {
    use stochemu::basis::Marginal;
    match *m {
        Marginal::Uniform { a, b } => {
            let (t, w) = gauss_uniform(n);
            (t.iter().map(|t| 0.5 * (a + b) + 0.5 * (b - a) * t).collect(), w)
        }
        Marginal::Gaussian { mu, sigma } => {
            let (t, w) = gauss_normal(n);
            (t.iter().map(|t| mu + sigma * t).collect(), w)
        }
        Marginal::Lognormal { mu_ln, sigma_ln } => {
            let (t, w) = gauss_normal(n);
            (t.iter().map(|t| (mu_ln + sigma_ln * t).exp()).collect(), w)
        }
    }
}

/// Tensor Gauss rule over an input model.
pub fn input_rule(input: &stochemu::basis::InputModel, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rules: Vec<_> = input.marginals.iter().map(|m| marginal_rule(m, n)).collect();
    tensor_rule(&rules)
}

/// `Psi^T diag(w) Psi` for a design matrix evaluated at quadrature nodes.
pub fn weighted_gram(psi: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut sw = psi.clone();
    for (i, mut row) in sw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    psi.transpose() * sw
}
