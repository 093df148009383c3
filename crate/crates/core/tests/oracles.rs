//! Library numerics checked against independent oracles: Gauss quadrature,
//! Gram-Schmidt on monomials, Jacobi eigen-iterations and a scalar borehole
//! implementation.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use stochemu::basis::{eval_basis, eval_univariate, total_degree_set, InputModel, Marginal, MultiIndex, MultiIndexSet};
use stochemu::data::{Trajectory, TrajectorySet};
use stochemu::emulator::fit_kle_stage;
use stochemu::kle::{eigendecompose, JointBasisResult};
use stochemu::pce::FitConfig;
use stochemu::rng::substream;
use stochemu::testbeds::{borehole, borehole_full_input_model};

#[test]
fn jacobi_matches_a_known_spectrum() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    let (vals, vecs) = jacobi_eigen(&a);
    let s = 2f64.sqrt();
    for (v, e) in vals.iter().zip([2.0 + s, 2.0, 2.0 - s]) {
        assert!((v - e).abs() < 1e-14);
    }
    let back = &vecs * DMatrix::from_diagonal(&DVector::from_vec(vals)) * vecs.transpose();
    assert!((back - a).norm() < 1e-13);
}

#[test]
fn gauss_rules_integrate_moments() {
    let (x, w) = gauss_uniform(6);
    let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
    assert!((m(0) - 1.0).abs() < 1e-14);
    assert!((m(10) - 1.0 / 11.0).abs() < 1e-14);
    let (x, w) = gauss_normal(6);
    let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
    assert!((m(4) - 3.0).abs() < 1e-12);
    assert!((m(10) - 945.0).abs() < 1e-9);
}

/// Orthonormal polynomials by Gram-Schmidt on monomials under a Gauss rule,
/// as monomial coefficient vectors.
fn gram_schmidt(nodes: &[f64], w: &[f64], p: usize) -> Vec<Vec<f64>> {
    let eval = |c: &[f64], t: f64| c.iter().rev().fold(0.0, |acc, &a| acc * t + a);
    let inner = |a: &[f64], b: &[f64]| nodes.iter().zip(w).map(|(&t, &w)| w * eval(a, t) * eval(b, t)).sum::<f64>();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..=p {
        let mut c = vec![0.0; p + 1];
        c[k] = 1.0;
        for _ in 0..2 {
            for q in &basis {
                let proj = inner(&c, q);
                for (ci, qi) in c.iter_mut().zip(q) {
                    *ci -= proj * qi;
                }
            }
        }
        let norm = inner(&c, &c).sqrt();
        c.iter_mut().for_each(|v| *v /= norm);
        basis.push(c);
    }
    basis
}

#[test]
fn univariate_families_match_gram_schmidt() {
    let p = 6;
    let cases = [
        (Marginal::Uniform { a: -1.0, b: 1.0 }, gauss_uniform(20)),
        (Marginal::Gaussian { mu: 0.0, sigma: 1.0 }, gauss_normal(20)),
    ];
    let mut rng = substream(3, 0);
    for (m, (nodes, w)) in cases {
        let polys = gram_schmidt(&nodes, &w, p);
        for _ in 0..25 {
            let t: f64 = rng.random_range(-1.0..1.0);
            for (deg, c) in polys.iter().enumerate() {
                // Gram-Schmidt fixes the sign by a positive leading coefficient.
                let oracle = c.iter().rev().fold(0.0, |acc, &a| acc * t + a);
                let got = eval_univariate(&m, deg, t).unwrap();
                assert!((got - oracle).abs() < 1e-10, "{m:?} degree {deg} at {t}: {got} vs {oracle}");
            }
        }
    }
}

fn marginal_strategy() -> impl Strategy<Value = Marginal> {
    prop_oneof![
        (-3.0f64..3.0, 0.1f64..4.0).prop_map(|(a, w)| Marginal::Uniform { a, b: a + w }),
        (-3.0f64..3.0, 0.1f64..3.0).prop_map(|(mu, sigma)| Marginal::Gaussian { mu, sigma }),
        (-1.0f64..2.0, 0.05f64..1.0).prop_map(|(mu_ln, sigma_ln)| Marginal::Lognormal { mu_ln, sigma_ln }),
    ]
}

fn max_identity_error(set: &MultiIndexSet, input: &InputModel, p: u32) -> f64 {
    let (points, w) = input_rule(input, p as usize + 1);
    let psi = eval_basis(set, input, &points).unwrap();
    let g = weighted_gram(&psi, &w);
    (g - DMatrix::identity(set.len(), set.len())).amax()
}

#[test]
fn full_total_degree_bases_are_orthonormal() {
    let fams = [
        Marginal::Uniform { a: -1.0, b: 3.0 },
        Marginal::Gaussian { mu: 1.0, sigma: 2.0 },
        Marginal::Lognormal { mu_ln: 0.3, sigma_ln: 0.5 },
    ];
    for d in 1..=3 {
        for f in fams {
            let input = InputModel::new(vec![f; d]).unwrap();
            let set = total_degree_set(d, 10, 1.0).unwrap();
            let err = max_identity_error(&set, &input, 10);
            assert!(err < 1e-10, "{f:?} d={d}: {err:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_index_sets_are_orthonormal(
        marginals in proptest::collection::vec(marginal_strategy(), 1..=3),
        raw in proptest::collection::vec(proptest::collection::vec(0u32..=10, 3), 1..20),
    ) {
        let d = marginals.len();
        let mut idx: Vec<MultiIndex> = raw
            .into_iter()
            .map(|v| MultiIndex(v[..d].to_vec()))
            .filter(|a| a.degree() <= 10)
            .collect();
        idx.push(MultiIndex::zero(d));
        idx.sort();
        idx.dedup();
        let set = MultiIndexSet::new(idx).unwrap();
        let input = InputModel::new(marginals).unwrap();
        let err = max_identity_error(&set, &input, 10);
        prop_assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn coefficient_eigenpairs_match_jacobi(v in proptest::collection::vec(-3.0f64..3.0, 32)) {
        let a = DMatrix::from_column_slice(4, 8, &v);
        let input = InputModel::new(vec![Marginal::Uniform { a: -1.0, b: 1.0 }]).unwrap();
        let set = MultiIndexSet::new((0..4).map(|k| MultiIndex(vec![k])).collect()).unwrap();
        let jb = JointBasisResult { input_model: input, indices: set, coeff_matrix: a.clone(), mean_coeffs: vec![0.0; 4], loo_errors: vec![0.0; 8] };
        let eig = eigendecompose(&jb).unwrap();
        let (vals, vecs) = jacobi_eigen(&(&a * a.transpose() / 7.0));
        for k in 0..4 {
            prop_assert!((eig.values[k] - vals[k]).abs() < 1e-10 * vals[0].max(1.0));
        }
        for k in 0..4 {
            let gap = (0..4).filter(|&j| j != k).map(|j| (vals[j] - vals[k]).abs()).fold(f64::INFINITY, f64::min);
            if gap > 1e-3 * vals[0] {
                let dot = eig.vectors.column(k).dot(&vecs.column(k));
                prop_assert!((dot.abs() - 1.0).abs() < 1e-10, "mode {k}: {dot}");
            }
        }
    }
}

#[test]
fn eigenfunctions_are_orthonormal_under_the_input_density() {
    let input = InputModel::new(vec![Marginal::Uniform { a: -1.0, b: 1.0 }, Marginal::Gaussian { mu: 0.0, sigma: 1.0 }]).unwrap();
    let mut trajectories = Vec::new();
    for r in 0..12u64 {
        let mut rng = substream(21, r);
        let (c1, c2, c3): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let x = input.sample_n(&mut rng, 30);
        let y = x.iter().map(|p| c1 * p[0] + c2 * p[1] * p[1] + c3 * p[0] * p[1] + 0.5).collect();
        trajectories.push(Trajectory { id: r, x, y });
    }
    let data = TrajectorySet { input_model: input.clone(), trajectories };
    let stage = fit_kle_stage(&data, &FitConfig::with_max_degree(3), 1e-6).unwrap();
    let (points, w) = input_rule(&input, 8);
    let phi = stage.kle.eigenfunctions_at(&points).unwrap();
    let g = weighted_gram(&phi, &w);
    assert!((g - DMatrix::identity(stage.kle.k(), stage.kle.k())).amax() < 1e-8);
}

/// Borehole flow rate written out term by term.
fn borehole_oracle(rw: f64, r: f64, tu: f64, hu: f64, tl: f64, hl: f64, l: f64, kw: f64) -> f64 {
    let log_ratio = f64::ln(r) - f64::ln(rw);
    let numerator = 2.0 * std::f64::consts::PI * tu * (hu - hl);
    let denominator = log_ratio * (1.0 + (2.0 * l * tu) / (log_ratio * rw.powi(2) * kw) + tu / tl);
    numerator / denominator
}

#[test]
fn borehole_matches_scalar_oracle() {
    let input = borehole_full_input_model();
    let med: Vec<f64> = input.marginals.iter().map(|m| m.median()).collect();
    let got = borehole(&med).unwrap();
    let want = borehole_oracle(med[0], med[1], med[2], med[3], med[4], med[5], med[6], med[7]);
    assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");

    let mut rng = substream(8, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut z = input.sample(&mut rng);
        z[2] *= 2.0;
        z[4] *= 2.0;
        let got = borehole(&z).unwrap();
        let want = borehole_oracle(z[0], z[1], z[2], z[3], z[4], z[5], z[6], z[7]);
        worst = worst.max(((got - want) / want).abs());
    }
    assert!(worst < 1e-12, "{worst:e}");
    let mut z = med.clone();
    z[5] = z[3];
    assert_eq!(borehole(&z).unwrap(), 0.0);
}
