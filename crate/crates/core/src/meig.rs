//! M-eigenpairs and a sampling probe for negativity.
//!
//! `(λ, x, y)` with unit `x`, `y` is an M-eigenpair when `G(y)x = λx` and
//! `H(x)y = λy`, where `G(y)_ik = Σ_jl a_ijkl y_j y_l` and `H(x)_jl = Σ_ik a_ijkl x_i x_k`.
//! Then `λ = P(x, y)`. The solver alternates exact eigen-steps on `G` and `H`,
//! which increases (or decreases) `P` monotonically, so it finds pairs near the
//! extremes of `P` on the product of spheres. It is a heuristic and can miss pairs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::forms::BiquadraticForm;
use crate::linalg::{self, sym_eig, SymMatrix};
use crate::sampling;

/// Largest `m` and `n` accepted by [`meig_solve`].
pub const MEIG_CAP: usize = 8;
/// Eigenpairs closer than this in `λ` and in `(±x, ±y)` are merged.
pub const DEDUP_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MEigenpair {
    pub lambda: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `‖G(y)x − λx‖`.
    pub residual_x: f64,
    /// `‖H(x)y − λy‖`.
    pub residual_y: f64,
}

fn g_matrix(p: &BiquadraticForm, y: &[f64]) -> SymMatrix {
    let (m, n) = (p.m(), p.n());
    SymMatrix::from_fn(m, |i, k| {
        let mut acc = 0.0;
        for j in 0..n {
            for l in 0..n {
                acc += p.coeff(i, j, k, l) * y[j] * y[l];
            }
        }
        acc
    })
}

fn h_matrix(p: &BiquadraticForm, x: &[f64]) -> SymMatrix {
    let (m, n) = (p.m(), p.n());
    SymMatrix::from_fn(n, |j, l| {
        let mut acc = 0.0;
        for i in 0..m {
            for k in 0..m {
                acc += p.coeff(i, j, k, l) * x[i] * x[k];
            }
        }
        acc
    })
}

/// `(A·yxy)_i = Σ_jkl a_ijkl y_j x_k y_l`, i.e. `G(y)x`; half the `x`-gradient of `P`.
pub fn contract_x(p: &BiquadraticForm, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    p.check_dims(x, y)?;
    Ok(g_matrix(p, y).mul_vec(x))
}

/// `(Ax·xy)_j = Σ_ikl a_ijkl x_i x_k y_l`, i.e. `H(x)y`; half the `y`-gradient of `P`.
pub fn contract_y(p: &BiquadraticForm, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    p.check_dims(x, y)?;
    Ok(h_matrix(p, x).mul_vec(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Max,
    Min,
}

fn extreme_vector(s: &SymMatrix, target: Target) -> Result<Vec<f64>> {
    let eig = sym_eig(s)?;
    let v = match target {
        Target::Max => eig.eigenvectors.first(),
        Target::Min => eig.eigenvectors.last(),
    };
    Ok(v.cloned().unwrap_or_default())
}

fn residuals(p: &BiquadraticForm, x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let gx = g_matrix(p, y).mul_vec(x);
    let lambda = linalg::dot(x, &gx);
    let hy = h_matrix(p, x).mul_vec(y);
    let rx = linalg::norm(&gx.iter().zip(x).map(|(a, b)| a - lambda * b).collect::<Vec<_>>());
    let ry = linalg::norm(&hy.iter().zip(y).map(|(a, b)| a - lambda * b).collect::<Vec<_>>());
    (lambda, rx, ry)
}

fn fix_sign(v: &mut [f64]) {
    let lead = v.iter().copied().fold(0.0_f64, |a, e| if e.abs() > a.abs() { e } else { a });
    if lead < 0.0 {
        v.iter_mut().for_each(|e| *e = -*e);
    }
}

fn alternate(p: &BiquadraticForm, mut y: Vec<f64>, target: Target, bound: f64) -> Result<Option<MEigenpair>> {
    let mut x = extreme_vector(&g_matrix(p, &y), target)?;
    for _ in 0..MAX_SWEEPS {
        y = extreme_vector(&h_matrix(p, &x), target)?;
        x = extreme_vector(&g_matrix(p, &y), target)?;
        let (lambda, rx, ry) = residuals(p, &x, &y);
        if rx <= bound && ry <= bound {
            fix_sign(&mut x);
            fix_sign(&mut y);
            return Ok(Some(MEigenpair {
                lambda,
                x,
                y,
                residual_x: rx,
                residual_y: ry,
            }));
        }
    }
    Ok(None)
}

fn sign_distance(a: &[f64], b: &[f64]) -> f64 {
    let plus = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
    let minus = a.iter().zip(b).map(|(u, v)| (u + v).powi(2)).sum::<f64>().sqrt();
    plus.min(minus)
}

/// M-eigenpairs found from `restarts` seeded starts, half aimed at the maximum of
/// `P` and half at the minimum, sorted by `λ`.
///
/// A start is kept once both residuals are at most `tol · (1 + max |a_ijkl|)`;
/// starts that do not get there are dropped. The smallest `λ` returned is an
/// upper bound on the smallest M-eigenvalue.
pub fn meig_solve(p: &BiquadraticForm, restarts: usize, seed: u64, tol: f64) -> Result<Vec<MEigenpair>> {
    let (m, n) = (p.m(), p.n());
    if m > MEIG_CAP || n > MEIG_CAP {
        return invalid(format!("meig_solve supports m, n ≤ {MEIG_CAP}, got {m}×{n}"));
    }
    if tol.is_nan() || tol <= 0.0 {
        return invalid("tolerance must be positive");
    }
    let scale = 1.0 + p.tensor().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let bound = tol * scale;
    let mut found: Vec<MEigenpair> = Vec::new();
    for start in 0..restarts.max(1) {
        let mut rng = sampling::sub_rng(seed, start as u64);
        let y0 = sampling::unit_sphere(&mut rng, n);
        let target = if start % 2 == 0 { Target::Max } else { Target::Min };
        let Some(pair) = alternate(p, y0, target, bound)? else {
            log::debug!("meig start {start} did not converge; discarded");
            continue;
        };
        let duplicate = found.iter().any(|q| {
            (q.lambda - pair.lambda).abs() <= DEDUP_TOL
                && sign_distance(&q.x, &pair.x) <= DEDUP_TOL
                && sign_distance(&q.y, &pair.y) <= DEDUP_TOL
        });
        if !duplicate {
            found.push(pair);
        }
    }
    found.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(found)
}

/// Smallest sampled value of `P` on the product of unit spheres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleProbe {
    pub min_value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

const POLISH_STEPS: usize = 25;

/// Minimum of `P` over `samples` seeded sphere pairs, refined by a few
/// minimizing eigen-steps from the best sample.
pub fn psd_sample_check(p: &BiquadraticForm, samples: usize, seed: u64) -> SampleProbe {
    let (m, n) = (p.m(), p.n());
    let mut rng = sampling::rng(seed);
    let mut best = SampleProbe {
        min_value: f64::INFINITY,
        x: vec![0.0; m],
        y: vec![0.0; n],
    };
    for _ in 0..samples.max(1) {
        let x = sampling::unit_sphere(&mut rng, m);
        let y = sampling::unit_sphere(&mut rng, n);
        let v = p.evaluate_unchecked(&x, &y);
        if v < best.min_value {
            best = SampleProbe { min_value: v, x, y };
        }
    }
    let mut y = best.y.clone();
    for _ in 0..POLISH_STEPS {
        let Ok(x) = extreme_vector(&g_matrix(p, &y), Target::Min) else {
            break;
        };
        let Ok(ny) = extreme_vector(&h_matrix(p, &x), Target::Min) else {
            break;
        };
        y = ny;
        let v = p.evaluate_unchecked(&x, &y);
        if v < best.min_value {
            best = SampleProbe {
                min_value: v,
                x: x.clone(),
                y: y.clone(),
            };
        }
    }
    best
}
