//! Benchmark stochastic simulators.
//!
//! Each simulator splits its randomness into explicit inputs `x` (modeled by
//! an [`InputModel`]) and a latent event drawn once per trajectory. With the
//! event fixed, `x -> y` is deterministic.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{InputModel, Marginal};
use crate::data::{Trajectory, TrajectorySet};
use crate::dist::copula::{CopulaFamily, PairCopula};
use crate::dist::open_uniform;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};

/// Default number of Euler-Maruyama steps on `[0, 1]`.
pub const HESTON_DEFAULT_STEPS: usize = 1000;

/// Clayton parameter coupling the two Ishigami latents.
pub const ISHIGAMI_CLAYTON: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Benchmark {
    /// `sin x1 + A sin^2 x2 + B x3^4 sin x1` with dependent lognormal `(A, B)`.
    Ishigami,
    /// Borehole flow rate with inputs `(r_w, H_u, K_w)` and five latent parameters.
    Borehole,
    /// Heston asset price at time 1 with the Brownian increments latent.
    Heston { steps: usize },
    /// `m0 + m1(x) + m2(xi)` with `xi ~ N(0, sd^2)`, additive in `x` and the latent.
    Additive { sd: f64 },
}

impl Benchmark {
    /// Parses `ishigami`, `borehole`, `heston` or `additive`.
    pub fn from_name(name: &str, heston_steps: usize) -> Result<Self> {
        match name {
            "ishigami" => Ok(Benchmark::Ishigami),
            "borehole" => Ok(Benchmark::Borehole),
            "heston" => {
                if heston_steps == 0 {
                    return Err(Error::Config("Heston needs at least one time step".into()));
                }
                Ok(Benchmark::Heston { steps: heston_steps })
            }
            "additive" => Ok(Benchmark::Additive { sd: 2.0 }),
            _ => Err(Error::Config(format!(
                "unknown benchmark '{name}' (expected ishigami, borehole, heston or additive)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Ishigami => "ishigami",
            Benchmark::Borehole => "borehole",
            Benchmark::Heston { .. } => "heston",
            Benchmark::Additive { .. } => "additive",
        }
    }

    pub fn input_model(&self) -> InputModel {
        let m = match self {
            Benchmark::Ishigami => vec![Marginal::Uniform { a: -PI, b: PI }; 3],
            Benchmark::Borehole => vec![
                Marginal::Gaussian { mu: 0.10, sigma: 0.016_181_2 },
                Marginal::Uniform { a: 990.0, b: 1110.0 },
                Marginal::Uniform { a: 9855.0, b: 12045.0 },
            ],
            Benchmark::Heston { .. } => vec![
                Marginal::Uniform { a: 0.0, b: 0.1 },
                Marginal::Uniform { a: 0.3, b: 2.0 },
                Marginal::Uniform { a: 0.02, b: 0.07 },
                Marginal::Uniform { a: 0.2, b: 0.4 },
                Marginal::Uniform { a: -1.0, b: -0.5 },
                Marginal::Uniform { a: 0.02, b: 0.07 },
            ],
            Benchmark::Additive { .. } => vec![Marginal::Uniform { a: -1.0, b: 1.0 }; 2],
        };
        InputModel::new(m).expect("benchmark input models are valid")
    }

    /// Draws the latent event of one trajectory.
    pub fn sample_event<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match *self {
            Benchmark::Ishigami => {
                let (a, b) = ishigami_latents();
                let c = PairCopula::new(CopulaFamily::Clayton, ISHIGAMI_CLAYTON).expect("valid parameter");
                let v = open_uniform(rng);
                let u = c.h_inv(open_uniform(rng), v);
                vec![a.quantile(u), b.quantile(v)]
            }
            Benchmark::Borehole => borehole_latents().iter().map(|m| m.sample(rng)).collect(),
            Benchmark::Heston { steps } => (0..2 * steps).map(|_| StandardNormal.sample(rng)).collect(),
            Benchmark::Additive { sd } => {
                let z: f64 = StandardNormal.sample(rng);
                vec![sd * z]
            }
        }
    }

    /// Simulator output at `x` for a fixed latent event.
    pub fn eval(&self, x: &[f64], event: &[f64]) -> Result<f64> {
        match *self {
            Benchmark::Ishigami => Ok(ishigami_stochastic(x, event[0], event[1])),
            Benchmark::Borehole => borehole_stochastic(x, event),
            Benchmark::Heston { steps } => heston_stochastic(x, &event[..steps], &event[steps..2 * steps]),
            Benchmark::Additive { .. } => Ok(additive_synthetic(x, event[0])),
        }
    }
}

/// Lognormal laws of the Ishigami latents `A` and `B`.
pub fn ishigami_latents() -> (Marginal, Marginal) {
    (Marginal::lognormal_from_moments(7.0, 0.7), Marginal::lognormal_from_moments(0.1, 0.1))
}

pub fn ishigami_stochastic(x: &[f64], a: f64, b: f64) -> f64 {
    let s1 = x[0].sin();
    s1 + a * x[1].sin().powi(2) + b * x[2].powi(4) * s1
}

/// Names of the eight borehole parameters in the order used by [`borehole`].
pub const BOREHOLE_NAMES: [&str; 8] = ["r_w", "r", "T_u", "H_u", "T_l", "H_l", "L", "K_w"];

/// Laws of the five latent borehole parameters `(r, T_u, T_l, H_l, L)`.
pub fn borehole_latents() -> [Marginal; 5] {
    [
        Marginal::Lognormal { mu_ln: 7.71, sigma_ln: 1.0056 },
        Marginal::Uniform { a: 63070.0, b: 115600.0 },
        Marginal::Uniform { a: 63.1, b: 116.0 },
        Marginal::Uniform { a: 700.0, b: 820.0 },
        Marginal::Uniform { a: 1120.0, b: 1680.0 },
    ]
}

/// All eight borehole parameters as independent inputs, in [`BOREHOLE_NAMES`] order.
pub fn borehole_full_input_model() -> InputModel {
    let x = Benchmark::Borehole.input_model().marginals;
    let l = borehole_latents();
    InputModel::new(vec![x[0].clone(), l[0].clone(), l[1].clone(), x[1].clone(), l[2].clone(), l[3].clone(), l[4].clone(), x[2].clone()])
        .expect("valid input model")
}

/// Flow rate through a borehole, `z = (r_w, r, T_u, H_u, T_l, H_l, L, K_w)`.
pub fn borehole(z: &[f64]) -> Result<f64> {
    let &[rw, r, tu, hu, tl, hl, l, kw] = z else {
        return Err(Error::Domain("borehole needs eight parameters".into()));
    };
    if !(rw > 0.0 && r > rw && kw > 0.0 && tl > 0.0) {
        return Err(Error::Domain(format!("borehole parameters out of domain: r_w={rw}, r={r}, K_w={kw}, T_l={tl}")));
    }
    let lr = (r / rw).ln();
    Ok(2.0 * PI * tu * (hu - hl) / (lr * (1.0 + 2.0 * l * tu / (lr * rw * rw * kw) + tu / tl)))
}

/// `x = (r_w, H_u, K_w)`, `event = (r, T_u, T_l, H_l, L)`.
pub fn borehole_stochastic(x: &[f64], event: &[f64]) -> Result<f64> {
    borehole(&[x[0], event[0], event[1], x[1], event[2], event[3], event[4], x[2]])
}

/// Euler-Maruyama price `U_1` with `U_0 = 1` and `dt = 1 / T`.
///
/// `x = (mu, kappa, theta, sigma, rho, nu_0)`. The latent event holds the two
/// independent standard-normal sequences `z1`, `z2`; the correlation `rho` is
/// applied per call, so the event stays fixed across inputs.
pub fn heston_stochastic(x: &[f64], z1: &[f64], z2: &[f64]) -> Result<f64> {
    let &[mu, kappa, theta, sigma, rho, nu0] = x else {
        return Err(Error::Domain("Heston needs six parameters".into()));
    };
    let steps = z1.len();
    if steps == 0 || z2.len() != steps {
        return Err(Error::Config("Heston increments must be two equally long non-empty sequences".into()));
    }
    let dt = 1.0 / steps as f64;
    let sdt = dt.sqrt();
    let rho_c = (1.0 - rho * rho).max(0.0).sqrt();
    let mut u = 1.0;
    let mut nu = nu0.max(0.0);
    for (&a, &b) in z1.iter().zip(z2) {
        let dw1 = sdt * a;
        let dw2 = sdt * (rho * a + rho_c * b);
        let sq = nu.sqrt();
        u += mu * u * dt + sq * u * dw1;
        nu = (nu + kappa * (theta - nu) * dt + sigma * sq * dw2).max(0.0);
    }
    if !u.is_finite() {
        return Err(Error::Integration(format!("non-finite Heston state at x = {x:?}")));
    }
    Ok(u)
}

/// `1 + m1(x) + xi` with the polynomial `m1(x) = x1 + x1 x2 + x2^3 / 2`.
pub fn additive_synthetic(x: &[f64], xi: f64) -> f64 {
    1.0 + x[0] + x[0] * x[1] + 0.5 * x[1].powi(3) + xi
}

/// `r` trajectories on `n`-point designs. Trajectory `i` draws its event and
/// then its design from `substream(seed, i)`.
pub fn generate_dataset(bench: &Benchmark, n: usize, r: usize, seed: u64) -> Result<TrajectorySet> {
    if n == 0 || r == 0 {
        return Err(Error::Config("N and R must be positive".into()));
    }
    let input = bench.input_model();
    let trajectories = (0..r as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let event = bench.sample_event(&mut rng);
            let x = input.sample_n(&mut rng, n);
            let y = x.iter().map(|p| bench.eval(p, &event)).collect::<Result<Vec<f64>>>()?;
            Ok(Trajectory { id: i, x, y })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet { input_model: input, trajectories })
}

/// Simulator replications on shared points: `values[(j, i)]` is replication
/// `j` (a fresh latent event) at point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pub points: Vec<Vec<f64>>,
    pub values: DMatrix<f64>,
}

/// `n_val` points from the input model, `r_val` latent events each.
pub fn generate_validation(bench: &Benchmark, n_val: usize, r_val: usize, seed: u64) -> Result<ValidationSet> {
    let input = bench.input_model();
    let points = input.sample_n(&mut substream(derive_seed(seed, &[0]), 0), n_val);
    let values = replicate(bench, &points, r_val, derive_seed(seed, &[1]))?;
    Ok(ValidationSet { points, values })
}

/// `r` independent replications of the simulator at fixed points.
pub fn replicate(bench: &Benchmark, points: &[Vec<f64>], r: usize, seed: u64) -> Result<DMatrix<f64>> {
    let rows = (0..r as u64)
        .into_par_iter()
        .map(|j| {
            let event = bench.sample_event(&mut substream(seed, j));
            points.iter().map(|p| bench.eval(p, &event)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(r, points.len(), |j, i| rows[j][i]))
}
