//! Dense symmetric linear algebra with explicit rank and PSD tolerances.
//!
//! Every rank or definiteness decision in the crate goes through this module so
//! that one [`Tolerances`] value controls them all. The eigensolver itself is
//! faer's self-adjoint decomposition; this module normalizes its output
//! (descending order, deterministic eigenvector signs).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative thresholds used by rank and PSD decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Eigenvalues with `|λ| ≤ eps_rank · max(1, ρ)` count as zero (`ρ` the spectral radius).
    pub eps_rank: f64,
    /// A matrix is PSD when `λ_min ≥ −eps_psd · max(1, ρ)`.
    pub eps_psd: f64,
    /// Relative Frobenius residual allowed for reconstructions.
    pub tol_recon: f64,
    /// Allowed `‖UᵀU − I‖_F` for computed eigenvector sets.
    pub tol_orth: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_rank: 1e-9,
            eps_psd: 1e-9,
            tol_recon: 1e-9,
            tol_orth: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eps_rank, self.eps_psd, self.tol_recon, self.tol_orth];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            invalid(format!("tolerances must be finite and positive: {self:?}"))
        }
    }

    /// Same tolerances with both decision thresholds (`eps_rank`, `eps_psd`) replaced.
    pub fn with_decision_tol(self, tol: f64) -> Self {
        Self {
            eps_rank: tol,
            eps_psd: tol,
            ..self
        }
    }
}

/// Real symmetric matrix, stored densely in row-major order.
///
/// Constructors mirror the upper triangle, so `get(i, j) == get(j, i)` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            data: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut s = Self::zeros(order);
        for i in 0..order {
            s.data[i * order + i] = 1.0;
        }
        s
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut s = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            s.set(i, i, d);
        }
        s
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle (`i ≤ j`).
    pub fn from_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(order);
        for i in 0..order {
            for j in i..order {
                s.set(i, j, f(i, j));
            }
        }
        s
    }

    /// Builds a matrix from row-major data, rejecting inputs that are not symmetric
    /// up to rounding (`1e-12` relative to the largest entry).
    pub fn from_row_major(order: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != order * order {
            return invalid(format!(
                "expected {} entries for an order-{order} matrix, got {}",
                order * order,
                data.len()
            ));
        }
        let scale = data.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..order {
            for j in (i + 1)..order {
                let (u, l) = (data[i * order + j], data[j * order + i]);
                if (u - l).abs() > 1e-12 * scale || u.is_nan() != l.is_nan() {
                    return invalid(format!("matrix is not symmetric at ({i}, {j}): {u} vs {l}"));
                }
            }
        }
        Ok(Self::from_fn(order, |i, j| data[i * order + j]))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let order = rows.len();
        if rows.iter().any(|r| r.len() != order) {
            return invalid("matrix rows must all have length equal to the row count");
        }
        Self::from_row_major(order, rows.concat())
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    /// Sets entries `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.order + j] = v;
        self.data[j * self.order + i] = v;
    }

    /// Adds `v` to `(i, j)` and, off the diagonal, to `(j, i)`.
    #[inline]
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.order + j] += v;
        if i != j {
            self.data[j * self.order + i] += v;
        }
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.order.max(1)).map(<[f64]>::to_vec).take(self.order).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    /// `self + alpha · other`.
    pub fn add_scaled(&self, alpha: f64, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.order, other.order, "order mismatch");
        SymMatrix {
            order: self.order,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + alpha * b).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        SymMatrix {
            order: self.order,
            data: self.data.iter().map(|a| alpha * a).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.order, "vector length mismatch");
        self.data
            .chunks(self.order.max(1))
            .take(self.order)
            .map(|row| dot(row, v))
            .collect()
    }

    /// `vᵀ S v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    /// Frobenius distance `‖self − other‖_F`.
    pub fn distance(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.order, other.order, "order mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Symmetric rank-one update `self += alpha · w wᵀ`.
    pub fn rank_one_update(&mut self, alpha: f64, w: &[f64]) {
        assert_eq!(w.len(), self.order, "vector length mismatch");
        let n = self.order;
        for i in 0..n {
            let wi = alpha * w[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, wj) in row.iter_mut().zip(w) {
                *r += wi * wj;
            }
        }
    }

    /// Gram matrix `Σ_p w_p w_pᵀ`.
    pub fn from_outer_products<'a>(order: usize, vectors: impl IntoIterator<Item = &'a [f64]>) -> SymMatrix {
        let mut s = SymMatrix::zeros(order);
        for w in vectors {
            s.rank_one_update(1.0, w);
        }
        s
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(s: SymMatrix) -> Self {
        s.rows()
    }
}

/// Eigen-decomposition `S = U Λ Uᵀ` with eigenvalues sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[p]` is the unit eigenvector of `eigenvalues[p]`.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl SpectralDecomposition {
    pub fn order(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.max_eigenvalue().abs().max(self.min_eigenvalue().abs())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let mut s = SymMatrix::zeros(self.order());
        for (lambda, u) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            s.rank_one_update(*lambda, u);
        }
        s
    }

    /// `‖UᵀU − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut acc = 0.0;
        for (p, u) in self.eigenvectors.iter().enumerate() {
            for (q, v) in self.eigenvectors.iter().enumerate() {
                let target = if p == q { 1.0 } else { 0.0 };
                let e = dot(u, v) - target;
                acc += e * e;
            }
        }
        acc.sqrt()
    }
}

/// Symmetric eigendecomposition, eigenvalues descending.
///
/// Each eigenvector is signed so that its largest-magnitude entry (first one on
/// ties) is positive.
pub fn sym_eig(s: &SymMatrix) -> Result<SpectralDecomposition> {
    if !s.is_finite() {
        return invalid("matrix has non-finite entries");
    }
    let n = s.order();
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: vec![],
            eigenvectors: vec![],
        });
    }
    let mat = faer::Mat::<f64>::from_fn(n, n, |i, j| s.get(i, j));
    let evd = mat
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let values = evd.S().column_vector();
    let vectors = evd.U();

    // faer returns ascending eigenvalues
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    let eigenvalues = order.iter().map(|&p| values[p]).collect();
    let eigenvectors = order
        .iter()
        .map(|&p| {
            let mut u: Vec<f64> = (0..n).map(|i| vectors[(i, p)]).collect();
            fix_sign(&mut u);
            u
        })
        .collect();
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn fix_sign(u: &mut [f64]) {
    let mut best = 0usize;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > u[best].abs() {
            best = i;
        }
    }
    if u.get(best).is_some_and(|v| *v < 0.0) {
        u.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Cutoff below which an eigenvalue of a spectrum with radius `radius` counts as zero.
#[inline]
pub fn rank_cutoff(radius: f64, tol: &Tolerances) -> f64 {
    tol.eps_rank * radius.max(1.0)
}

/// Number of eigenvalues with `|λ| > eps_rank · max(1, radius)`.
pub fn rank_of_spectrum(eigenvalues: &[f64], radius: f64, tol: &Tolerances) -> usize {
    let cut = rank_cutoff(radius, tol);
    eigenvalues.iter().filter(|l| l.abs() > cut).count()
}

pub fn numerical_rank(s: &SymMatrix, tol: &Tolerances) -> Result<usize> {
    let eig = sym_eig(s)?;
    Ok(rank_of_spectrum(&eig.eigenvalues, eig.spectral_radius(), tol))
}

/// Outcome of a PSD test.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCheck {
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Eigenvector of the smallest eigenvalue when the test fails; `vᵀSv < 0`.
    pub witness: Option<Vec<f64>>,
}

/// PSD test on an already computed spectrum.
pub fn psd_from_spectrum(eig: &SpectralDecomposition, tol: &Tolerances) -> PsdCheck {
    let min = eig.min_eigenvalue();
    let psd = min >= -tol.eps_psd * eig.spectral_radius().max(1.0);
    PsdCheck {
        psd,
        min_eigenvalue: min,
        max_eigenvalue: eig.max_eigenvalue(),
        witness: (!psd).then(|| eig.eigenvectors.last().cloned().unwrap_or_default()),
    }
}

pub fn is_psd(s: &SymMatrix, tol: &Tolerances) -> Result<PsdCheck> {
    Ok(psd_from_spectrum(&sym_eig(s)?, tol))
}

/// Factors a PSD matrix as `S = Σ_p w_p w_pᵀ` with `w_p = √λ_p u_p`, one vector per
/// eigenvalue above the rank cutoff (descending). Eigenvalues inside the
/// tolerance band are dropped.
pub fn psd_factor(s: &SymMatrix, tol: &Tolerances) -> Result<Vec<Vec<f64>>> {
    let eig = sym_eig(s)?;
    factor_from_spectrum(&eig, tol)
}

pub fn factor_from_spectrum(eig: &SpectralDecomposition, tol: &Tolerances) -> Result<Vec<Vec<f64>>> {
    let check = psd_from_spectrum(eig, tol);
    if !check.psd {
        return Err(Error::NotPsd {
            min_eigenvalue: check.min_eigenvalue,
            witness: check.witness.unwrap_or_default(),
        });
    }
    let cut = rank_cutoff(eig.spectral_radius(), tol);
    Ok(eig
        .eigenvalues
        .iter()
        .zip(&eig.eigenvectors)
        .filter(|(l, _)| **l > cut)
        .map(|(l, u)| {
            let r = l.sqrt();
            u.iter().map(|v| r * v).collect()
        })
        .collect())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `a ⊗ b` with `b` varying fastest.
pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        out.extend(b.iter().map(|bj| ai * bj));
    }
    out
}

/// Orthogonal `m × m` Helmert matrix, returned as columns.
///
/// Column 0 is `1/√m`; column `k ≥ 1` is `(1, …, 1, −k, 0, …) / √(k(k+1))` with `k`
/// leading ones, so columns `1..m` are an orthonormal basis of `1^⊥`.
pub fn helmert_basis(m: usize) -> Vec<Vec<f64>> {
    let mut cols = Vec::with_capacity(m);
    if m == 0 {
        return cols;
    }
    cols.push(vec![1.0 / (m as f64).sqrt(); m]);
    for k in 1..m {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        let mut v = vec![0.0; m];
        v[..k].iter_mut().for_each(|e| *e = scale);
        v[k] = -(k as f64) * scale;
        cols.push(v);
    }
    cols
}

/// Congruence `(Uᵀ ⊗ I_n) S (U ⊗ I_n)` for `U` given by its `m` columns, `S` of order `m·n`.
pub fn kron_congruence(s: &SymMatrix, u_cols: &[Vec<f64>], n: usize) -> SymMatrix {
    let m = u_cols.len();
    assert_eq!(s.order(), m * n, "order mismatch");
    // T = S (U ⊗ I): T[(i,j), (c,l)] = Σ_k S[(i,j),(k,l)] U[k][c]
    let mn = m * n;
    let mut t = vec![0.0; mn * mn];
    for row in 0..mn {
        for (c, u) in u_cols.iter().enumerate() {
            for l in 0..n {
                let mut acc = 0.0;
                for (k, uk) in u.iter().enumerate() {
                    acc += s.get(row, k * n + l) * uk;
                }
                t[row * mn + c * n + l] = acc;
            }
        }
    }
    SymMatrix::from_fn(mn, |r, col| {
        let (a, j) = (r / n, r % n);
        u_cols[a]
            .iter()
            .enumerate()
            .map(|(i, ui)| ui * t[(i * n + j) * mn + col])
            .sum()
    })
}
