//! x-symmetric biquadratic forms.
//!
//! An x-symmetric form is invariant under permutations of `x` and has the shape
//!
//! ```text
//! P(x, y) = Σ_i Σ_j d_j x_i² y_j² + Σ_{i≠k} Σ_{j,l} a_jl x_i x_k y_j y_l + Σ_i Σ_{j≠l} b_jl x_i² y_j y_l
//!         = (xᵀx)·yᵀ(D + B)y + ((1ᵀx)² − xᵀx)·yᵀAy,          D = diag(d)
//! ```
//!
//! with `A`, `B` symmetric and `diag(B) = 0`. Both sums run over ordered pairs,
//! so the polynomial coefficient of `x_i x_k y_j y_l` (`i < k`, `j < l`) is
//! `4 a_jl`, that of `x_i x_k y_j²` is `2 a_jj`, and that of `x_i² y_j y_l` is
//! `2 b_jl`. In tensor terms the diagonal `x`-blocks of the Gram layout equal
//! `D + B` and every off-diagonal block equals `A`.
//!
//! The form is *monic* when `d = 1`. A monic form is PSD iff `Q = I + B − A` and
//! `R = I + B + (m−1)A` are both PSD, and then
//! `M = I_m ⊗ Q + (1/m)(11ᵀ) ⊗ (R − Q)` is a PSD Gram matrix of `P`. Conjugating
//! `M` by `U ⊗ I_n`, with `U` orthogonal and first column `1/√m`, gives
//! `diag(R, Q, …, Q)`, which is what the structured decomposition exploits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forms::{BiquadraticForm, SosDecomposition};
use crate::linalg::{
    self, dot, factor_from_spectrum, helmert_basis, psd_from_spectrum, rank_cutoff, rank_of_spectrum, sym_eig,
    SpectralDecomposition, SymMatrix, Tolerances,
};
use crate::sampling;

/// Relative size below which a `d_j` (or a coefficient required to vanish) counts as zero.
pub const ZERO_DIAGONAL_TOL: f64 = 1e-12;

/// Parameters `(m, d, A, B)` of an x-symmetric form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "XSymmetricFile", into = "XSymmetricFile")]
pub struct XSymmetricData {
    m: usize,
    d: Vec<f64>,
    a: SymMatrix,
    b: SymMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XSymmetricFile {
    pub m: usize,
    pub d: Vec<f64>,
    #[serde(rename = "A")]
    pub a: SymMatrix,
    #[serde(rename = "B")]
    pub b: SymMatrix,
}

impl TryFrom<XSymmetricFile> for XSymmetricData {
    type Error = Error;

    fn try_from(f: XSymmetricFile) -> Result<Self> {
        XSymmetricData::new(f.m, f.d, f.a, f.b)
    }
}

impl From<XSymmetricData> for XSymmetricFile {
    fn from(x: XSymmetricData) -> Self {
        XSymmetricFile {
            m: x.m,
            d: x.d,
            a: x.a,
            b: x.b,
        }
    }
}

impl XSymmetricData {
    pub fn new(m: usize, d: Vec<f64>, a: SymMatrix, b: SymMatrix) -> Result<Self> {
        let n = d.len();
        if m == 0 || n == 0 {
            return invalid("x-symmetric data needs m ≥ 1 and n ≥ 1");
        }
        if a.order() != n || b.order() != n {
            return invalid(format!(
                "A and B must be {n}×{n}, got orders {} and {}",
                a.order(),
                b.order()
            ));
        }
        if (0..n).any(|j| b.get(j, j) != 0.0) {
            return invalid("B must have an exactly zero diagonal");
        }
        if !d.iter().all(|v| v.is_finite()) || !a.is_finite() || !b.is_finite() {
            return invalid("x-symmetric data must be finite");
        }
        Ok(Self { m, d, a, b })
    }

    /// Monic data (`d = 1`).
    pub fn monic(m: usize, a: SymMatrix, b: SymMatrix) -> Result<Self> {
        let n = a.order();
        Self::new(m, vec![1.0; n], a, b)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn a(&self) -> &SymMatrix {
        &self.a
    }

    pub fn b(&self) -> &SymMatrix {
        &self.b
    }

    pub fn is_monic(&self) -> bool {
        self.d.iter().all(|v| (v - 1.0).abs() <= ZERO_DIAGONAL_TOL)
    }

    /// `Q = D + B − A` and `R = D + B + (m−1)A` (the usual pair when `D = I`).
    pub fn qr(&self) -> QrPair {
        let n = self.n();
        let mf = self.m as f64;
        let base = |j: usize, l: usize| self.b.get(j, l) + if j == l { self.d[j] } else { 0.0 };
        QrPair {
            q: SymMatrix::from_fn(n, |j, l| base(j, l) - self.a.get(j, l)),
            r: SymMatrix::from_fn(n, |j, l| base(j, l) + (mf - 1.0) * self.a.get(j, l)),
        }
    }

    /// `P(x, y)` via `(xᵀx)·yᵀ(D + B)y + ((1ᵀx)² − xᵀx)·yᵀAy`, in `O(m + n²)`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.m || y.len() != self.n() {
            return invalid(format!(
                "expected x ∈ R^{} and y ∈ R^{}, got lengths {} and {}",
                self.m,
                self.n(),
                x.len(),
                y.len()
            ));
        }
        let xx = dot(x, x);
        let sx: f64 = x.iter().sum();
        let dy: f64 = y.iter().zip(&self.d).map(|(v, d)| d * v * v).sum();
        Ok(xx * (dy + self.b.quad_form(y)) + (sx * sx - xx) * self.a.quad_form(y))
    }
}

/// Recovers `(d, A, B)` when `P` is x-symmetric, i.e. when all diagonal `x`-blocks
/// of its tensor agree and all off-diagonal blocks agree (within
/// `tol · (1 + max |a_ijkl|)`). For `m = 1` every form qualifies and `A = 0`.
pub fn detect_x_symmetric(p: &BiquadraticForm, tol: f64) -> Option<XSymmetricData> {
    let (m, n) = (p.m(), p.n());
    let scale = 1.0 + p.tensor().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let thr = tol * scale;
    let block = |i: usize, k: usize| SymMatrix::from_fn(n, |j, l| p.coeff(i, j, k, l));

    let diag = block(0, 0);
    let off = if m > 1 { block(0, 1) } else { SymMatrix::zeros(n) };
    for i in 0..m {
        for k in 0..m {
            let reference = if i == k { &diag } else { &off };
            for j in 0..n {
                for l in 0..n {
                    if (p.coeff(i, j, k, l) - reference.get(j, l)).abs() > thr {
                        return None;
                    }
                }
            }
        }
    }
    let d: Vec<f64> = (0..n).map(|j| diag.get(j, j)).collect();
    let b = SymMatrix::from_fn(n, |j, l| if j == l { 0.0 } else { diag.get(j, l) });
    XSymmetricData::new(m, d, off, b).ok()
}

/// The form with parameters `x`; inverse of [`detect_x_symmetric`] on its image.
pub fn reconstruct(x: &XSymmetricData) -> BiquadraticForm {
    let (m, n) = (x.m, x.n());
    let mn = m * n;
    let mut coeffs = vec![0.0; mn * mn];
    for r in 0..mn {
        let (i, j) = (r / n, r % n);
        for c in 0..mn {
            let (k, l) = (c / n, c % n);
            coeffs[r * mn + c] = if i != k {
                x.a.get(j, l)
            } else if j == l {
                x.d[j]
            } else {
                x.b.get(j, l)
            };
        }
    }
    BiquadraticForm::from_symmetric_tensor(m, n, coeffs)
}

/// The matrices `Q` and `R` whose definiteness decides PSD-ness of a monic form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrPair {
    pub q: SymMatrix,
    pub r: SymMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Psd,
    NotPsd,
}

/// A point with `P(x, y) = value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdCertificate {
    pub verdict: Verdict,
    pub q_eigenvalues: Vec<f64>,
    pub r_eigenvalues: Vec<f64>,
    /// Present iff the verdict is `NotPsd`; `value < 0` always.
    pub witness: Option<Witness>,
}

impl PsdCertificate {
    pub fn is_psd(&self) -> bool {
        self.verdict == Verdict::Psd
    }
}

struct MonicSpectra {
    q: SpectralDecomposition,
    r: SpectralDecomposition,
}

impl MonicSpectra {
    fn compute(x: &XSymmetricData) -> Result<Self> {
        let QrPair { q, r } = x.qr();
        Ok(Self {
            q: sym_eig(&q)?,
            r: sym_eig(&r)?,
        })
    }

    /// Spectral radius of `M`, whose spectrum is `eig(R) ∪ eig(Q)`.
    fn radius(&self) -> f64 {
        self.q.spectral_radius().max(self.r.spectral_radius())
    }
}

fn require_monic(x: &XSymmetricData) -> Result<()> {
    if x.is_monic() {
        Ok(())
    } else {
        invalid("form is not monic (d ≠ 1); reduce it with reduce_general first")
    }
}

fn certify(x: &XSymmetricData, spectra: &MonicSpectra, tol: &Tolerances) -> Result<PsdCertificate> {
    let q_check = psd_from_spectrum(&spectra.q, tol);
    let r_check = psd_from_spectrum(&spectra.r, tol);
    let m = x.m;

    let mut candidates = Vec::new();
    // Q only matters when some unit x has 1ᵀx = 0, i.e. m ≥ 2.
    if !q_check.psd && m >= 2 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut wx = vec![0.0; m];
        wx[0] = h;
        wx[1] = -h;
        candidates.push((wx, q_check.witness.clone().unwrap_or_default()));
    }
    if !r_check.psd {
        let wx = vec![1.0 / (m as f64).sqrt(); m];
        candidates.push((wx, r_check.witness.clone().unwrap_or_default()));
    }

    let mut witness: Option<Witness> = None;
    for (wx, wy) in candidates {
        let value = x.evaluate(&wx, &wy)?;
        if value < 0.0 && witness.as_ref().is_none_or(|w| value < w.value) {
            witness = Some(Witness { x: wx, y: wy, value });
        }
    }
    let verdict = if witness.is_some() {
        Verdict::NotPsd
    } else {
        Verdict::Psd
    };
    Ok(PsdCertificate {
        verdict,
        q_eigenvalues: spectra.q.eigenvalues.clone(),
        r_eigenvalues: spectra.r.eigenvalues.clone(),
        witness,
    })
}

/// PSD test for monic data through the spectra of `Q` and `R`.
///
/// A failing `Q` yields the witness `x = (e₁ − e₂)/√2`, `y = u` (so `P = uᵀQu`); a
/// failing `R` yields `x = 1/√m`, `y = u` (so `P = uᵀRu`). Witnesses are evaluated
/// on the form before being returned.
pub fn check_psd_monic(x: &XSymmetricData, tol: &Tolerances) -> Result<PsdCertificate> {
    require_monic(x)?;
    certify(x, &MonicSpectra::compute(x)?, tol)
}

/// `M = I_m ⊗ Q + (1/m)(11ᵀ) ⊗ (R − Q)`, of order `mn`.
pub fn assemble_m(x: &XSymmetricData) -> SymMatrix {
    let (m, n) = (x.m, x.n());
    let QrPair { q, r } = x.qr();
    let inv_m = 1.0 / m as f64;
    SymMatrix::from_fn(m * n, |row, col| {
        let (i, j, k, l) = (row / n, row % n, col / n, col % n);
        let shared = inv_m * (r.get(j, l) - q.get(j, l));
        if i == k {
            q.get(j, l) + shared
        } else {
            shared
        }
    })
}

fn require_psd(x: &XSymmetricData, spectra: &MonicSpectra, tol: &Tolerances) -> Result<()> {
    let cert = certify(x, spectra, tol)?;
    if cert.is_psd() {
        Ok(())
    } else {
        Err(Error::FormNotPsd(Box::new(cert)))
    }
}

/// SOS decomposition by assembling `M` and factoring it spectrally.
///
/// Costs `O(m³n³)`; see [`sos_decompose_structured`] for the same Gram matrix
/// without forming `M`.
pub fn sos_decompose_naive(x: &XSymmetricData, tol: &Tolerances) -> Result<SosDecomposition> {
    require_monic(x)?;
    let spectra = MonicSpectra::compute(x)?;
    require_psd(x, &spectra, tol)?;
    let eig = sym_eig(&assemble_m(x))?;
    let factors = factor_from_spectrum(&eig, tol)?;
    SosDecomposition::new(x.m, x.n(), factors)
}

/// SOS decomposition from the spectra of `Q` and `R` alone.
///
/// Emits one factor `(1/√m)1 ⊗ √μ u` per positive eigenpair `(μ, u)` of `R`,
/// then `m − 1` factors `v_k ⊗ √λ u` per positive eigenpair `(λ, u)` of `Q`,
/// where `v_k` are the Helmert columns spanning `1^⊥`. Ordering: `R` factors by
/// descending eigenvalue, then `Q` factors by descending eigenvalue and `k`.
pub fn sos_decompose_structured(x: &XSymmetricData, tol: &Tolerances) -> Result<SosDecomposition> {
    require_monic(x)?;
    let spectra = MonicSpectra::compute(x)?;
    require_psd(x, &spectra, tol)?;
    let (m, n) = (x.m, x.n());
    let cut = rank_cutoff(spectra.radius(), tol);
    let basis = helmert_basis(m);

    let emit = |v: &[f64], scaled_u: &[f64]| -> Vec<f64> { linalg::kron(v, scaled_u) };
    let scaled = |lambda: f64, u: &[f64]| -> Vec<f64> {
        let s = lambda.sqrt();
        u.iter().map(|e| s * e).collect()
    };

    let mut factors = Vec::new();
    for (mu, u) in spectra.r.eigenvalues.iter().zip(&spectra.r.eigenvectors) {
        if *mu > cut {
            factors.push(emit(&basis[0], &scaled(*mu, u)));
        }
    }
    for (lambda, u) in spectra.q.eigenvalues.iter().zip(&spectra.q.eigenvectors) {
        if *lambda > cut {
            let su = scaled(*lambda, u);
            for v in &basis[1..] {
                factors.push(emit(v, &su));
            }
        }
    }
    debug_assert!(factors.iter().all(|w| w.len() == m * n));
    SosDecomposition::new(m, n, factors)
}

/// `rank(R) + (m−1)·rank(Q)`, using the same rank cutoff as `numerical_rank(M)`.
pub fn rank_bound(x: &XSymmetricData, tol: &Tolerances) -> Result<usize> {
    require_monic(x)?;
    let spectra = MonicSpectra::compute(x)?;
    require_psd(x, &spectra, tol)?;
    let radius = spectra.radius();
    let rq = rank_of_spectrum(&spectra.q.eigenvalues, radius, tol);
    let rr = rank_of_spectrum(&spectra.r.eigenvalues, radius, tol);
    Ok(rr + (x.m - 1) * rq)
}

/// Monic data obtained from general x-symmetric data by `z_j = √d_j y_j` on the
/// active indices (`d_j > 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedForm {
    /// `None` when no index is active (the form is identically zero).
    pub monic: Option<XSymmetricData>,
    /// `√d_j` for active `j`, `0` for dropped indices.
    pub scaling: Vec<f64>,
    pub active: Vec<usize>,
}

impl ReducedForm {
    /// Maps a point `(x, z)` of the monic form back to `(x, y)` with `y_j = z_j/√d_j`.
    pub fn lift_y(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.scaling.len()];
        for (p, &j) in self.active.iter().enumerate() {
            y[j] = z[p] / self.scaling[j];
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Reduction {
    Reduced(ReducedForm),
    /// A vanishing condition failed; the form is not PSD.
    Invalid { reason: String, witness: Witness },
}

/// Minimizer of `c t² + 2 g t` (for `g ≠ 0`), a point where it is negative.
fn descent_step(c: f64, g: f64) -> f64 {
    if c > 0.0 {
        -g / c
    } else {
        -g.signum()
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = linalg::norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|e| *e /= n);
    }
    v
}

/// Reduces general x-symmetric data to monic data on the indices with `d_j > 0`.
///
/// For each `j0` with `d_j0 = 0` a PSD form must satisfy `b_{j,j0} = 0`,
/// `a_{j0,j0} = 0` and `a_{j,j0} = 0` for all `j` (otherwise `P` decreases along
/// a direction leaving `e_{j0}`), so `y_{j0}` drops out. A negative `d_j` or a
/// failed condition yields [`Reduction::Invalid`] with a point where `P < 0`.
pub fn reduce_general(x: &XSymmetricData) -> Result<Reduction> {
    let (m, n) = (x.m, x.n());
    let mf = m as f64;
    let d_max = x.d.iter().fold(0.0_f64, |a, v| a.max(*v));
    let eps_d = ZERO_DIAGONAL_TOL * d_max;
    let scale = x
        .d
        .iter()
        .map(|v| v.abs())
        .chain(x.a.as_slice().iter().map(|v| v.abs()))
        .chain(x.b.as_slice().iter().map(|v| v.abs()))
        .fold(0.0_f64, f64::max);
    let eps_v = ZERO_DIAGONAL_TOL * scale;

    let e = |dim: usize, i: usize| {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    };
    let ones = vec![1.0 / mf.sqrt(); m];

    let mut candidates: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (j, &dj) in x.d.iter().enumerate() {
        if dj < -eps_d.max(0.0) && dj < 0.0 {
            candidates.push((format!("d_{} = {dj} < 0", j + 1), e(m, 0), e(n, j)));
        }
    }
    let zero: Vec<usize> = (0..n).filter(|&j| x.d[j].abs() <= eps_d).collect();
    for &j0 in &zero {
        for j in (0..n).filter(|&j| j != j0) {
            let b = x.b.get(j, j0);
            if b.abs() > eps_v {
                // P(e_1, e_j0 + t e_j) = t² d_j + 2 t b_{j,j0}
                let t = descent_step(x.d[j], b);
                let mut y = e(n, j0);
                y[j] = t;
                candidates.push((
                    format!("d_{} = 0 but b_{},{} = {b} ≠ 0", j0 + 1, j + 1, j0 + 1),
                    e(m, 0),
                    unit(y),
                ));
            }
        }
        if m < 2 {
            continue;
        }
        let a00 = x.a.get(j0, j0);
        if a00.abs() > eps_v {
            // P(x, e_j0) = ((1ᵀx)² − xᵀx) a_{j0,j0}
            let wx = if a00 > 0.0 {
                let mut v = vec![0.0; m];
                v[0] = std::f64::consts::FRAC_1_SQRT_2;
                v[1] = -std::f64::consts::FRAC_1_SQRT_2;
                v
            } else {
                ones.clone()
            };
            candidates.push((
                format!("d_{0} = 0 but a_{0},{0} = {a00} ≠ 0", j0 + 1),
                wx,
                e(n, j0),
            ));
        }
        for j in (0..n).filter(|&j| j != j0) {
            let a = x.a.get(j, j0);
            if a.abs() > eps_v {
                // P(1/√m, e_j0 + t e_j) = t²(d_j + (m−1)a_jj) + 2t(b_{j,j0} + (m−1)a_{j,j0}) + (m−1)a_{j0,j0}
                let c = x.d[j] + (mf - 1.0) * x.a.get(j, j);
                let g = x.b.get(j, j0) + (mf - 1.0) * a;
                let t = descent_step(c, g);
                let mut y = e(n, j0);
                y[j] = t;
                candidates.push((
                    format!("d_{} = 0 but a_{},{} = {a} ≠ 0", j0 + 1, j + 1, j0 + 1),
                    ones.clone(),
                    unit(y),
                ));
            }
        }
    }

    let mut best: Option<(String, Witness)> = None;
    for (reason, wx, wy) in candidates {
        let value = x.evaluate(&wx, &wy)?;
        if value < 0.0 && best.as_ref().is_none_or(|(_, w)| value < w.value) {
            best = Some((reason, Witness { x: wx, y: wy, value }));
        }
    }
    if let Some((reason, witness)) = best {
        return Ok(Reduction::Invalid { reason, witness });
    }

    let active: Vec<usize> = (0..n).filter(|&j| x.d[j] > eps_d).collect();
    let scaling: Vec<f64> = (0..n)
        .map(|j| if active.contains(&j) { x.d[j].sqrt() } else { 0.0 })
        .collect();
    if active.is_empty() {
        return Ok(Reduction::Reduced(ReducedForm {
            monic: None,
            scaling,
            active,
        }));
    }
    let k = active.len();
    let rescale = |s: &SymMatrix, p: usize, q: usize| {
        let (j, l) = (active[p], active[q]);
        s.get(j, l) / (scaling[j] * scaling[l])
    };
    let a = SymMatrix::from_fn(k, |p, q| rescale(&x.a, p, q));
    let b = SymMatrix::from_fn(k, |p, q| if p == q { 0.0 } else { rescale(&x.b, p, q) });
    let monic = XSymmetricData::monic(m, a, b)?;
    Ok(Reduction::Reduced(ReducedForm {
        monic: Some(monic),
        scaling,
        active,
    }))
}

/// PSD certificate for arbitrary x-symmetric data: reduction, then the `Q`/`R`
/// test on the monic part. Eigenvalue lists refer to the reduced `Q̃`, `R̃`;
/// witnesses are mapped back to the original variables.
pub fn check_psd(x: &XSymmetricData, tol: &Tolerances) -> Result<PsdCertificate> {
    match reduce_general(x)? {
        Reduction::Invalid { witness, .. } => Ok(PsdCertificate {
            verdict: Verdict::NotPsd,
            q_eigenvalues: vec![],
            r_eigenvalues: vec![],
            witness: Some(witness),
        }),
        Reduction::Reduced(red) => match &red.monic {
            None => Ok(PsdCertificate {
                verdict: Verdict::Psd,
                q_eigenvalues: vec![],
                r_eigenvalues: vec![],
                witness: None,
            }),
            Some(monic) => {
                let mut cert = check_psd_monic(monic, tol)?;
                if let Some(w) = cert.witness.take() {
                    let y = red.lift_y(&w.y);
                    let value = x.evaluate(&w.x, &y)?;
                    cert.witness = Some(Witness { x: w.x, y, value });
                }
                Ok(cert)
            }
        },
    }
}

/// Which construction produces the Gram matrix `M` of a monic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    #[default]
    Structured,
}

/// SOS decomposition of arbitrary x-symmetric data (structured path).
///
/// Runs the monic decomposition on the reduced form and substitutes back:
/// column `j` of each factor is scaled by `√d_j` and dropped indices get zero columns.
pub fn sos_decompose_general(x: &XSymmetricData, tol: &Tolerances) -> Result<SosDecomposition> {
    sos_decompose_general_with(x, tol, Method::Structured)
}

pub fn sos_decompose_general_with(x: &XSymmetricData, tol: &Tolerances, method: Method) -> Result<SosDecomposition> {
    let (m, n) = (x.m, x.n());
    let red = match reduce_general(x)? {
        Reduction::Reduced(red) => red,
        Reduction::Invalid { .. } => return Err(Error::FormNotPsd(Box::new(check_psd(x, tol)?))),
    };
    let Some(monic) = &red.monic else {
        return Ok(SosDecomposition::empty(m, n));
    };
    let reduced = match method {
        Method::Naive => sos_decompose_naive(monic, tol),
        Method::Structured => sos_decompose_structured(monic, tol),
    }
    .map_err(|e| match e {
        Error::FormNotPsd(_) => match check_psd(x, tol) {
            Ok(cert) => Error::FormNotPsd(Box::new(cert)),
            Err(e) => e,
        },
        other => other,
    })?;
    let k = red.active.len();
    let factors = reduced
        .factors()
        .iter()
        .map(|w| {
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                for (p, &j) in red.active.iter().enumerate() {
                    out[i * n + j] = w[i * k + p] * red.scaling[j];
                }
            }
            out
        })
        .collect();
    SosDecomposition::new(m, n, factors)
}

/// Monic data with `A`, `B` entries uniform in `[−1, 1]` (`diag B = 0`).
pub fn random_monic<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> XSymmetricData {
    let a = SymMatrix::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let b = SymMatrix::from_fn(n, |j, l| if j == l { 0.0 } else { rng.random_range(-1.0..1.0) });
    XSymmetricData::monic(m, a, b).expect("generated data is valid")
}

/// Random PSD monic data whose `Q` and `R` have ranks `rank_q` and `rank_r`.
///
/// Draws Gaussian low-rank `Q₀`, `R₀` and rescales both by the same diagonal
/// congruence so that `diag((m−1)Q + R) = m`, which makes `d = 1`. For `m = 1`
/// only `R` matters and `rank_r` must be positive.
pub fn random_psd_monic<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    rank_q: usize,
    rank_r: usize,
    rng: &mut R,
) -> Result<XSymmetricData> {
    if m == 0 || n == 0 || rank_q > n || rank_r > n {
        return invalid(format!("need m, n ≥ 1 and ranks ≤ n, got m = {m}, n = {n}, ranks {rank_q}, {rank_r}"));
    }
    if rank_r == 0 && (rank_q == 0 || m == 1) {
        return invalid("a monic form needs a nonzero diagonal, so the ranks cannot both vanish");
    }
    let mf = m as f64;
    loop {
        let low_rank = |rng: &mut R, rank: usize| {
            let vs: Vec<Vec<f64>> = (0..rank).map(|_| sampling::normal_vec(rng, n)).collect();
            SymMatrix::from_outer_products(n, vs.iter().map(Vec::as_slice))
        };
        let q0 = low_rank(rng, rank_q);
        let r0 = low_rank(rng, rank_r);
        let diag: Vec<f64> = (0..n)
            .map(|j| ((mf - 1.0) * q0.get(j, j) + r0.get(j, j)) / mf)
            .collect();
        if diag.iter().any(|v| *v < 1e-6) {
            continue;
        }
        let s: Vec<f64> = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
        let q = SymMatrix::from_fn(n, |j, l| s[j] * s[l] * q0.get(j, l));
        let r = SymMatrix::from_fn(n, |j, l| s[j] * s[l] * r0.get(j, l));
        let a = SymMatrix::from_fn(n, |j, l| (r.get(j, l) - q.get(j, l)) / mf);
        let b = SymMatrix::from_fn(n, |j, l| {
            if j == l {
                0.0
            } else {
                q.get(j, l) + a.get(j, l)
            }
        });
        return XSymmetricData::monic(m, a, b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{verify_sos, MonomialTerm};
    use crate::linalg::numerical_rank;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn swap_a(m: usize, v: f64) -> XSymmetricData {
        XSymmetricData::monic(m, sym(&[&[0.0, v], &[v, 0.0]]), SymMatrix::zeros(2)).unwrap()
    }

    #[test]
    fn b_diagonal_must_vanish() {
        let b = sym(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(XSymmetricData::monic(2, SymMatrix::zeros(2), b).is_err());
    }

    #[test]
    fn detect_examples() {
        let terms: Vec<_> = (0..2)
            .flat_map(|i| (0..2).map(move |j| MonomialTerm::new(i, i, j, j, 1.0)))
            .collect();
        let p = BiquadraticForm::from_terms(2, 2, &terms).unwrap();
        let x = detect_x_symmetric(&p, 1e-12).unwrap();
        assert_eq!(x.d(), &[1.0, 1.0]);
        assert_eq!(x.a(), &SymMatrix::zeros(2));
        assert_eq!(x.b(), &SymMatrix::zeros(2));

        let p223 = BiquadraticForm::from_terms(
            2,
            2,
            &[MonomialTerm::new(0, 0, 0, 0, 1.0), MonomialTerm::new(1, 1, 1, 1, 1.0), MonomialTerm::new(0, 0, 1, 1, 1.0)],
        )
        .unwrap();
        assert!(detect_x_symmetric(&p223, 1e-12).is_none());

        let data = swap_a(2, 1.0);
        assert_eq!(detect_x_symmetric(&reconstruct(&data), 1e-12).unwrap(), data);
    }

    #[test]
    fn reconstruct_examples() {
        let p = reconstruct(&swap_a(2, 1.0));
        let mut terms = p.terms();
        terms.sort_by_key(|t| (t.i, t.k, t.j, t.l));
        let want = vec![
            MonomialTerm::new(0, 0, 0, 0, 1.0),
            MonomialTerm::new(0, 0, 1, 1, 1.0),
            MonomialTerm::new(0, 1, 0, 1, 4.0),
            MonomialTerm::new(1, 1, 0, 0, 1.0),
            MonomialTerm::new(1, 1, 1, 1, 1.0),
        ];
        assert_eq!(terms, want);

        let data = XSymmetricData::new(3, vec![1.0, 0.0], SymMatrix::zeros(2), SymMatrix::zeros(2)).unwrap();
        assert_eq!(detect_x_symmetric(&reconstruct(&data), 1e-12).unwrap(), data);
    }

    #[test]
    fn evaluation_identity_matches_tensor() {
        let mut rng = sampling::rng(1);
        for _ in 0..20 {
            let x = random_monic(3, 4, &mut rng);
            let mut data = x.clone();
            data.d = sampling::uniform_vec(&mut rng, 4, 0.0, 2.0);
            let p = reconstruct(&data);
            for _ in 0..10 {
                let u = sampling::normal_vec(&mut rng, 3);
                let v = sampling::normal_vec(&mut rng, 4);
                let a = p.evaluate(&u, &v).unwrap();
                let b = data.evaluate(&u, &v).unwrap();
                assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
            }
        }
    }

    #[test]
    fn monic_psd_examples() {
        let cert = check_psd_monic(&XSymmetricData::monic(2, SymMatrix::zeros(2), SymMatrix::zeros(2)).unwrap(), &tol()).unwrap();
        assert!(cert.is_psd());

        let cert = check_psd_monic(&swap_a(2, 1.0), &tol()).unwrap();
        assert!(cert.is_psd());
        assert!((cert.q_eigenvalues[0] - 2.0).abs() < 1e-14 && cert.q_eigenvalues[1].abs() < 1e-14);
        assert!((cert.r_eigenvalues[0] - 2.0).abs() < 1e-14 && cert.r_eigenvalues[1].abs() < 1e-14);
        let probe = crate::meig::psd_sample_check(&reconstruct(&swap_a(2, 1.0)), 100_000, 3);
        assert!(probe.min_value >= -1e-12);

        let data = swap_a(2, 2.0);
        let cert = check_psd_monic(&data, &tol()).unwrap();
        assert_eq!(cert.verdict, Verdict::NotPsd);
        assert!((cert.q_eigenvalues[0] - 3.0).abs() < 1e-14 && (cert.q_eigenvalues[1] + 1.0).abs() < 1e-14);
        let w = cert.witness.unwrap();
        assert!((w.value + 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((w.x[0] - h).abs() < 1e-15 && (w.x[1] + h).abs() < 1e-15);
        assert!((w.y[0] - h).abs() < 1e-12 && (w.y[1] - h).abs() < 1e-12);
        assert!((reconstruct(&data).evaluate(&w.x, &w.y).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_monic_is_rejected_by_monic_paths() {
        let x = XSymmetricData::new(2, vec![2.0, 1.0], SymMatrix::zeros(2), SymMatrix::zeros(2)).unwrap();
        assert!(matches!(check_psd_monic(&x, &tol()), Err(Error::InvalidInput(_))));
        assert!(matches!(sos_decompose_structured(&x, &tol()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn r_failure_witness_uses_uniform_x() {
        // A = −I/2 with m = 4: Q = 3/2 I, R = I − 3/2 I = −1/2 I
        let a = SymMatrix::identity(2).scaled(-0.5);
        let data = XSymmetricData::monic(4, a, SymMatrix::zeros(2)).unwrap();
        let cert = check_psd_monic(&data, &tol()).unwrap();
        let w = cert.witness.unwrap();
        assert!(w.x.iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert!((w.value + 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_x_variable_ignores_q() {
        // m = 1: P = yᵀ(I + B)y regardless of A
        let data = XSymmetricData::monic(1, SymMatrix::identity(2).scaled(5.0), SymMatrix::zeros(2)).unwrap();
        assert!(check_psd_monic(&data, &tol()).unwrap().is_psd());
        let d = sos_decompose_structured(&data, &tol()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(verify_sos(&reconstruct(&data), &d, 200, 0).unwrap().passed);
    }

    #[test]
    fn naive_decomposition_examples() {
        let zero = XSymmetricData::monic(2, SymMatrix::zeros(2), SymMatrix::zeros(2)).unwrap();
        let d = sos_decompose_naive(&zero, &tol()).unwrap();
        assert_eq!(d.len(), 4);
        assert!(verify_sos(&reconstruct(&zero), &d, 1000, 0).unwrap().passed);

        let data = swap_a(2, 1.0);
        let d = sos_decompose_naive(&data, &tol()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(verify_sos(&reconstruct(&data), &d, 1000, 0).unwrap().passed);

        let data = swap_a(3, 0.5);
        let d = sos_decompose_naive(&data, &tol()).unwrap();
        assert_eq!(d.len(), 5);
        assert!(verify_sos(&reconstruct(&data), &d, 1000, 0).unwrap().passed);

        assert!(matches!(sos_decompose_naive(&swap_a(2, 2.0), &tol()), Err(Error::FormNotPsd(_))));
    }

    #[test]
    fn structured_decomposition_examples() {
        let zero = XSymmetricData::monic(3, SymMatrix::zeros(2), SymMatrix::zeros(2)).unwrap();
        assert_eq!(sos_decompose_structured(&zero, &tol()).unwrap().len(), 6);

        // (x1−x2)(y1−y2)/√2·… and (x1+x2)(y1+y2)/√2·… up to scale
        let data = swap_a(2, 1.0);
        let d = sos_decompose_structured(&data, &tol()).unwrap();
        assert_eq!(d.len(), 2);
        let r_factor = &d.factors()[0];
        assert!(r_factor.iter().all(|v| (v - 0.5 * 2f64.sqrt()).abs() < 1e-12));
        let q_factor = &d.factors()[1];
        let s = 0.5 * 2f64.sqrt();
        let want = [s, -s, -s, s];
        assert!(q_factor.iter().zip(want).all(|(a, b)| (a.abs() - b.abs()).abs() < 1e-12 && a * b > 0.0)
            || q_factor.iter().zip(want).all(|(a, b)| (a + b).abs() < 1e-12));
        assert!(verify_sos(&reconstruct(&data), &d, 1000, 0).unwrap().passed);

        let mut rng = sampling::rng(42);
        let data = random_psd_monic(5, 3, 2, 3, &mut rng).unwrap();
        let d = sos_decompose_structured(&data, &tol()).unwrap();
        assert_eq!(d.len(), 11);
        assert!(verify_sos(&reconstruct(&data), &d, 1000, 0).unwrap().passed);
    }

    #[test]
    fn rank_bound_examples() {
        let zero = XSymmetricData::monic(3, SymMatrix::zeros(4), SymMatrix::zeros(4)).unwrap();
        assert_eq!(rank_bound(&zero, &tol()).unwrap(), 12);
        assert_eq!(rank_bound(&swap_a(2, 1.0), &tol()).unwrap(), 2);
        assert_eq!(rank_bound(&swap_a(3, 0.5), &tol()).unwrap(), 5);
        assert!(rank_bound(&swap_a(2, 2.0), &tol()).is_err());
    }

    #[test]
    fn paths_agree_and_rank_identity_holds() {
        let mut rng = sampling::rng(7);
        for trial in 0..100 {
            let m = 2 + trial % 5;
            let n = 1 + trial % 5;
            let rq = trial % (n + 1);
            let rr = ((trial / 3) % (n + 1)).max(usize::from(rq == 0));
            let data = random_psd_monic(m, n, rq, rr, &mut rng).unwrap();
            let naive = sos_decompose_naive(&data, &tol()).unwrap();
            let fast = sos_decompose_structured(&data, &tol()).unwrap();
            let m_mat = assemble_m(&data);
            let scale = m_mat.frobenius_norm().max(1.0);
            assert!(naive.gram().distance(&fast.gram()) <= 1e-9 * scale);
            assert!(fast.gram().distance(&m_mat) <= 1e-9 * scale);
            let bound = rank_bound(&data, &tol()).unwrap();
            assert_eq!(bound, rr + (m - 1) * rq, "trial {trial}");
            assert_eq!(numerical_rank(&m_mat, &tol()).unwrap(), bound);
            assert_eq!(fast.len(), bound);
            assert_eq!(naive.len(), bound);
        }
    }

    #[test]
    fn assembled_m_is_the_form_tensor() {
        let mut rng = sampling::rng(8);
        let data = random_monic(3, 3, &mut rng);
        assert!(assemble_m(&data).distance(&reconstruct(&data).gram_matrix()) < 1e-14);
    }

    #[test]
    fn reduce_examples() {
        let data = swap_a(2, 1.0);
        match reduce_general(&data).unwrap() {
            Reduction::Reduced(r) => {
                assert_eq!(r.monic.unwrap(), data);
                assert_eq!(r.scaling, vec![1.0, 1.0]);
            }
            other => panic!("{other:?}"),
        }

        let data = XSymmetricData::new(2, vec![4.0, 1.0], sym(&[&[0.0, 2.0], &[2.0, 0.0]]), SymMatrix::zeros(2)).unwrap();
        match reduce_general(&data).unwrap() {
            Reduction::Reduced(r) => {
                let monic = r.monic.unwrap();
                assert_eq!(monic.a(), &sym(&[&[0.0, 1.0], &[1.0, 0.0]]));
                assert_eq!(r.scaling, vec![2.0, 1.0]);
            }
            other => panic!("{other:?}"),
        }

        let data = XSymmetricData::new(2, vec![1.0, 0.0], SymMatrix::zeros(2), sym(&[&[0.0, 1.0], &[1.0, 0.0]])).unwrap();
        match reduce_general(&data).unwrap() {
            Reduction::Invalid { witness, .. } => {
                assert!(witness.value < 0.0);
                assert!(reconstruct(&data).evaluate(&witness.x, &witness.y).unwrap() < 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reduce_flags_every_vanishing_condition() {
        let n = 3;
        let base = || (vec![1.0, 0.0, 2.0], SymMatrix::zeros(n), SymMatrix::zeros(n));
        // a_{j0,j0} > 0, a_{j0,j0} < 0, a_{j,j0} ≠ 0, d_j < 0
        let cases: Vec<XSymmetricData> = vec![
            {
                let (d, mut a, b) = base();
                a.set(1, 1, 0.3);
                XSymmetricData::new(3, d, a, b).unwrap()
            },
            {
                let (d, mut a, b) = base();
                a.set(1, 1, -0.3);
                XSymmetricData::new(3, d, a, b).unwrap()
            },
            {
                let (d, mut a, b) = base();
                a.set(0, 1, 0.01);
                XSymmetricData::new(3, d, a, b).unwrap()
            },
            {
                let (mut d, a, b) = base();
                d[2] = -1.0;
                XSymmetricData::new(3, d, a, b).unwrap()
            },
        ];
        for data in cases {
            match reduce_general(&data).unwrap() {
                Reduction::Invalid { witness, reason } => {
                    let v = reconstruct(&data).evaluate(&witness.x, &witness.y).unwrap();
                    assert!(v < 0.0, "{reason}: {v}");
                }
                other => panic!("{other:?}"),
            }
            assert!(matches!(sos_decompose_general(&data, &tol()), Err(Error::FormNotPsd(_))));
            assert!(!check_psd(&data, &tol()).unwrap().is_psd());
        }
    }

    #[test]
    fn general_decomposition_examples() {
        let data = swap_a(2, 1.0);
        assert_eq!(
            sos_decompose_general(&data, &tol()).unwrap().gram().distance(&sos_decompose_structured(&data, &tol()).unwrap().gram()),
            0.0
        );

        let data = XSymmetricData::new(2, vec![4.0, 1.0], sym(&[&[0.0, 2.0], &[2.0, 0.0]]), SymMatrix::zeros(2)).unwrap();
        let d = sos_decompose_general(&data, &tol()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(verify_sos(&reconstruct(&data), &d, 1000, 0).unwrap().passed);

        let data = XSymmetricData::new(2, vec![1.0, 0.0], SymMatrix::zeros(2), SymMatrix::zeros(2)).unwrap();
        let d = sos_decompose_general(&data, &tol()).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.factors().iter().all(|w| w[1] == 0.0 && w[3] == 0.0));
        assert!(verify_sos(&reconstruct(&data), &d, 1000, 0).unwrap().passed);

        let zero = XSymmetricData::new(2, vec![0.0, 0.0], SymMatrix::zeros(2), SymMatrix::zeros(2)).unwrap();
        assert!(sos_decompose_general(&zero, &tol()).unwrap().is_empty());
        assert!(check_psd(&zero, &tol()).unwrap().is_psd());
    }

    #[test]
    fn general_witness_is_in_original_variables() {
        // d = (4, 1), A = [[0, 6], [6, 0]]: Ã = [[0, 3], [3, 0]] fails Q.
        let data = XSymmetricData::new(2, vec![4.0, 1.0], sym(&[&[0.0, 6.0], &[6.0, 0.0]]), SymMatrix::zeros(2)).unwrap();
        let cert = check_psd(&data, &tol()).unwrap();
        let w = cert.witness.unwrap();
        assert!(w.value < 0.0);
        assert!((reconstruct(&data).evaluate(&w.x, &w.y).unwrap() - w.value).abs() < 1e-12);
    }

    #[test]
    fn json_layout() {
        let data = swap_a(2, 1.0);
        let s = serde_json::to_string(&data).unwrap();
        assert_eq!(s, r#"{"m":2,"d":[1.0,1.0],"A":[[0.0,1.0],[1.0,0.0]],"B":[[0.0,0.0],[0.0,0.0]]}"#);
        let back: XSymmetricData = serde_json::from_str(&s).unwrap();
        assert_eq!(back, data);
        assert!(serde_json::from_str::<XSymmetricData>(r#"{"m":2,"d":[1],"A":[[0]],"B":[[1]]}"#).is_err());
    }
}
