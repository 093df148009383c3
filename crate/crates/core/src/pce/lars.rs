//! Least-angle regression path with leave-one-out scoring of the OLS re-fit
//! at every step ("hybrid" LARS).
//!
//! The constant regressor is always part of the model: the response and the
//! remaining columns are centered, and the LAR path runs on the centered,
//! unit-normalized columns. The active design is kept as an incremental
//! Gram-Schmidt factorization `Z_A = Q R`, which gives in O(N) per step both
//! the hat-matrix diagonal and the OLS residual needed for the LOO error.

use nalgebra::DMatrix;

/// Columns whose orthogonal residual falls below this fraction of their norm
/// are treated as collinear with the active set; the path stops there. This
/// bounds the condition number of the active design by roughly 1e10.
const COLLINEAR_TOL: f64 = 1e-10;

/// Centered, unit-norm copies of the non-constant design columns.
pub(crate) struct CenteredDesign {
    n: usize,
    /// Column-major N x P storage; column 0 (the constant) is unused.
    z: Vec<f64>,
    usable: Vec<bool>,
}

impl CenteredDesign {
    /// `psi` must hold the constant polynomial in column 0.
    pub(crate) fn new(psi: &DMatrix<f64>) -> Self {
        let (n, p) = psi.shape();
        let mut z = vec![0.0; n * p];
        let mut usable = vec![false; p];
        for j in 1..p {
            let col = psi.column(j);
            let mean = col.sum() / n as f64;
            let dst = &mut z[j * n..(j + 1) * n];
            for (d, &v) in dst.iter_mut().zip(col.iter()) {
                *d = v - mean;
            }
            let norm = dst.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 * scale.max(1e-300) && norm > 0.0 {
                dst.iter_mut().for_each(|v| *v /= norm);
                usable[j] = true;
            }
        }
        Self { n, z, usable }
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.z[j * self.n..(j + 1) * self.n]
    }
}

/// Entry order of the LAR path and the LOO error of the OLS re-fit after
/// each step. `loo[k]` belongs to the model made of the constant plus the
/// first `k` entries of `order`.
#[derive(Debug, Clone)]
pub(crate) struct HybridPath {
    pub order: Vec<usize>,
    pub loo: Vec<f64>,
}

impl HybridPath {
    /// Step with the smallest LOO error (earliest on ties).
    pub(crate) fn best(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, &l) in self.loo.iter().enumerate() {
            if l < best.1 {
                best = (k, l);
            }
        }
        best
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn loo_error(resid: &[f64], h: &[f64], var_y: f64) -> f64 {
    let n = resid.len() as f64;
    let mut s = 0.0;
    for (&r, &hi) in resid.iter().zip(h) {
        let denom = 1.0 - hi;
        if denom <= 1e-10 {
            return f64::INFINITY;
        }
        let e = r / denom;
        s += e * e;
    }
    s / n / var_y
}

/// Runs the LAR path over the candidate columns `cols` (indices into the
/// design, never 0). `y_centered` is the mean-removed response, `var_y` its
/// sample variance (the LOO normalization).
pub(crate) fn hybrid_path(design: &CenteredDesign, cols: &[usize], y_centered: &[f64], var_y: f64) -> HybridPath {
    let n = design.n;
    let cols: Vec<usize> = cols.iter().copied().filter(|&j| design.usable[j]).collect();
    let m = cols.len();
    let max_active = m.min(n.saturating_sub(2));
    let early_stop = 10usize.max(max_active.div_ceil(10));

    let mut resid = y_centered.to_vec();
    let mut h = vec![1.0 / n as f64; n];
    let mut loo = vec![loo_error(&resid, &h, var_y)];
    let mut order = Vec::new();
    if max_active == 0 {
        return HybridPath { order, loo };
    }

    // Correlations of the LAR residual with every candidate column.
    let mut corr: Vec<f64> = cols.iter().map(|&j| dot(design.col(j), y_centered)).collect();
    let mut active = vec![false; m];
    let mut active_pos: Vec<usize> = Vec::new();
    let mut q_cols: Vec<Vec<f64>> = Vec::new();
    // Upper-triangular factor, stored by column: r_cols[k][i] = R[i][k].
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut a = vec![0.0; m];
    let mut u = vec![0.0; n];
    let mut best_k = 0usize;
    let mut best_loo = loo[0];

    let mut next = (0..m)
        .max_by(|&i, &j| corr[i].abs().partial_cmp(&corr[j].abs()).unwrap_or(std::cmp::Ordering::Equal))
        .filter(|&i| corr[i].abs() > 0.0);

    while let Some(j) = next.take() {
        // Orthogonalize the entering column (two Gram-Schmidt passes).
        let zj = design.col(cols[j]);
        let mut v = zj.to_vec();
        let mut rcol = vec![0.0; q_cols.len() + 1];
        for _ in 0..2 {
            for (k, q) in q_cols.iter().enumerate() {
                let c = dot(q, &v);
                rcol[k] += c;
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let rho = dot(&v, &v).sqrt();
        if rho < COLLINEAR_TOL {
            break;
        }
        v.iter_mut().for_each(|x| *x /= rho);
        *rcol.last_mut().unwrap() = rho;

        // Hybrid OLS bookkeeping: hat diagonal and residual of the projection.
        let t = dot(&v, y_centered);
        for i in 0..n {
            h[i] += v[i] * v[i];
            resid[i] -= t * v[i];
        }
        q_cols.push(v);
        r_cols.push(rcol);
        active[j] = true;
        active_pos.push(j);
        order.push(cols[j]);
        let l = loo_error(&resid, &h, var_y);
        loo.push(l);
        let k = order.len();
        if l < best_loo {
            best_loo = l;
            best_k = k;
        }
        if k >= max_active || k - best_k >= early_stop {
            break;
        }

        // Equiangular direction: w = G^{-1} s with G = R^T R.
        let ka = active_pos.len();
        let s: Vec<f64> = active_pos.iter().map(|&p| corr[p].signum()).collect();
        let mut w = s.clone();
        // Forward solve R^T x = s.
        for i in 0..ka {
            let mut acc = w[i];
            for l in 0..i {
                acc -= r_cols[i][l] * w[l];
            }
            w[i] = acc / r_cols[i][i];
        }
        // Backward solve R w = x.
        for i in (0..ka).rev() {
            let mut acc = w[i];
            for l in i + 1..ka {
                acc -= r_cols[l][i] * w[l];
            }
            w[i] = acc / r_cols[i][i];
        }
        let sw = dot(&s, &w);
        if !(sw > 0.0) || !sw.is_finite() {
            break;
        }
        let aa = 1.0 / sw.sqrt();
        w.iter_mut().for_each(|x| *x *= aa);
        u.iter_mut().for_each(|x| *x = 0.0);
        for (&p, &wk) in active_pos.iter().zip(&w) {
            let z = design.col(cols[p]);
            u.iter_mut().zip(z).for_each(|(ui, zi)| *ui += wk * zi);
        }
        let c_max = active_pos.iter().map(|&p| corr[p].abs()).fold(0.0, f64::max);
        let mut gamma = f64::INFINITY;
        let mut entering = None;
        for i in 0..m {
            if active[i] {
                a[i] = aa * corr[i].signum();
                continue;
            }
            a[i] = dot(design.col(cols[i]), &u);
            for cand in [(c_max - corr[i]) / (aa - a[i]), (c_max + corr[i]) / (aa + a[i])] {
                if cand > 1e-14 * c_max && cand < gamma {
                    gamma = cand;
                    entering = Some(i);
                }
            }
        }
        let Some(e) = entering else { break };
        for i in 0..m {
            corr[i] -= gamma * a[i];
        }
        next = Some(e);
    }
    HybridPath { order, loo }
}
