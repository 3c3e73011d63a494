//! Biquadratic forms, their SOS decompositions, and the JSON file formats for both.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{kron, SymMatrix};
use crate::sampling;

/// A biquadratic form `P(x, y) = Σ a_ijkl x_i y_j x_k y_l`, `x ∈ R^m`, `y ∈ R^n`.
///
/// Coefficients are held as the unique symmetric tensor, i.e.
/// `a_ijkl = a_kjil = a_klij` (and hence `a_ijkl = a_ilkj`). The dense tensor is
/// laid out as the `mn × mn` matrix with row `i·n + j` and column `k·n + l`, which
/// is exactly the Gram matrix of `P` in the variables `z = x ⊗ y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormFile", into = "FormFile")]
pub struct BiquadraticForm {
    m: usize,
    n: usize,
    coeffs: Vec<f64>,
}

/// Coefficient of the monomial `x_i x_k y_j y_l` (0-based indices, `i ≤ k`, `j ≤ l`).
///
/// This is the polynomial coefficient, not the tensor entry: a monomial with
/// `i ≠ k` and `j ≠ l` collects four tensor entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonomialTerm {
    pub i: usize,
    pub k: usize,
    pub j: usize,
    pub l: usize,
    pub c: f64,
}

impl MonomialTerm {
    pub fn new(i: usize, k: usize, j: usize, l: usize, c: f64) -> Self {
        Self { i, k, j, l, c }
    }

    /// Same monomial with `i ≤ k` and `j ≤ l`.
    pub fn canonical(self) -> Self {
        Self {
            i: self.i.min(self.k),
            k: self.i.max(self.k),
            j: self.j.min(self.l),
            l: self.j.max(self.l),
            c: self.c,
        }
    }

    /// Number of distinct tensor entries that sum to this coefficient.
    fn multiplicity(&self) -> f64 {
        let a = if self.i == self.k { 1.0 } else { 2.0 };
        let b = if self.j == self.l { 1.0 } else { 2.0 };
        a * b
    }
}

impl BiquadraticForm {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            coeffs: vec![0.0; m * m * n * n],
        }
    }

    /// Canonical symmetric tensor of an arbitrary coefficient array.
    ///
    /// `raw` uses the same layout as [`BiquadraticForm::tensor`]. The result defines
    /// the same polynomial: each entry is the mean over its orbit under `i ↔ k`
    /// and `j ↔ l`.
    pub fn symmetrize(m: usize, n: usize, raw: &[f64]) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("form dimensions must be positive");
        }
        if raw.len() != m * m * n * n {
            return invalid(format!(
                "a {m}×{n} tensor has {} entries, got {}",
                m * m * n * n,
                raw.len()
            ));
        }
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                for k in 0..m {
                    for l in 0..n {
                        // Sorting makes every member of the orbit sum in the same order.
                        let mut orbit = [
                            raw[out.index(i, j, k, l)],
                            raw[out.index(k, j, i, l)],
                            raw[out.index(i, l, k, j)],
                            raw[out.index(k, l, i, j)],
                        ];
                        orbit.sort_by(f64::total_cmp);
                        let at = out.index(i, j, k, l);
                        out.coeffs[at] = 0.25 * orbit.iter().sum::<f64>();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Wraps a tensor already known to be symmetric (Gram layout).
    pub(crate) fn from_symmetric_tensor(m: usize, n: usize, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(coeffs.len(), m * m * n * n);
        let p = Self { m, n, coeffs };
        debug_assert!(p.symmetry_defect() == 0.0);
        p
    }

    /// Form from polynomial monomial coefficients. Terms naming the same monomial add up.
    pub fn from_terms(m: usize, n: usize, terms: &[MonomialTerm]) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("form dimensions must be positive");
        }
        let mut acc: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
        for t in terms {
            if t.i >= m || t.k >= m || t.j >= n || t.l >= n {
                return invalid(format!(
                    "term indices (i={}, k={}, j={}, l={}) out of range for a {m}×{n} form",
                    t.i, t.k, t.j, t.l
                ));
            }
            if !t.c.is_finite() {
                return invalid("term coefficient is not finite");
            }
            let c = t.canonical();
            *acc.entry((c.i, c.k, c.j, c.l)).or_insert(0.0) += c.c;
        }
        let mut form = Self::zeros(m, n);
        for ((i, k, j, l), c) in acc {
            let t = MonomialTerm::new(i, k, j, l, c);
            let a = c / t.multiplicity();
            for (p, q, r, s) in [(i, j, k, l), (k, j, i, l), (i, l, k, j), (k, l, i, j)] {
                let at = form.index(p, q, r, s);
                form.coeffs[at] = a;
            }
        }
        Ok(form)
    }

    /// Nonzero monomial coefficients in canonical order.
    pub fn terms(&self) -> Vec<MonomialTerm> {
        let mut out = Vec::new();
        for i in 0..self.m {
            for k in i..self.m {
                for j in 0..self.n {
                    for l in j..self.n {
                        let mut t = MonomialTerm::new(i, k, j, l, 0.0);
                        t.c = t.multiplicity() * self.coeff(i, j, k, l);
                        if t.c != 0.0 {
                            out.push(t);
                        }
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let mn = self.m * self.n;
        (i * self.n + j) * mn + k * self.n + l
    }

    /// Tensor entry `a_ijkl` (0-based).
    #[inline]
    pub fn coeff(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.coeffs[self.index(i, j, k, l)]
    }

    /// Dense tensor in Gram layout (row `i·n + j`, column `k·n + l`).
    pub fn tensor(&self) -> &[f64] {
        &self.coeffs
    }

    /// The tensor viewed as an `mn × mn` symmetric matrix.
    pub fn gram_matrix(&self) -> SymMatrix {
        let mn = self.m * self.n;
        SymMatrix::from_fn(mn, |r, c| self.coeffs[r * mn + c])
    }

    /// Largest absolute polynomial coefficient.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms().iter().fold(0.0, |m, t| m.max(t.c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m: self.m,
            n: self.n,
            coeffs: self.coeffs.iter().map(|c| factor * c).collect(),
        }
    }

    /// `P(x, y)`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dims(x, y)?;
        Ok(self.evaluate_unchecked(x, y))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let z = kron(x, y);
        let mn = z.len();
        let mut total = 0.0;
        for (r, zr) in z.iter().enumerate() {
            if *zr == 0.0 {
                continue;
            }
            let row = &self.coeffs[r * mn..(r + 1) * mn];
            total += zr * crate::linalg::dot(row, &z);
        }
        total
    }

    pub(crate) fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.m || y.len() != self.n {
            return invalid(format!(
                "expected x ∈ R^{} and y ∈ R^{}, got lengths {} and {}",
                self.m,
                self.n,
                x.len(),
                y.len()
            ));
        }
        Ok(())
    }

    /// The `n × m` form `P'(y, x) = P(x, y)`.
    pub fn transpose_xy(&self) -> Self {
        let mut out = Self::zeros(self.n, self.m);
        for i in 0..self.m {
            for j in 0..self.n {
                for k in 0..self.m {
                    for l in 0..self.n {
                        let at = out.index(j, i, l, k);
                        out.coeffs[at] = self.coeff(i, j, k, l);
                    }
                }
            }
        }
        out
    }

    /// Largest violation of the tensor symmetry identities (zero for every value
    /// produced by this type's constructors).
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.m {
            for j in 0..self.n {
                for k in 0..self.m {
                    for l in 0..self.n {
                        let a = self.coeff(i, j, k, l);
                        worst = worst
                            .max((a - self.coeff(k, j, i, l)).abs())
                            .max((a - self.coeff(k, l, i, j)).abs());
                    }
                }
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("form serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("form file: {e}")))
    }
}

/// On-disk form layout: polynomial coefficients with 1-based indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormFile {
    pub m: usize,
    pub n: usize,
    pub terms: Vec<TermRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TermRecord {
    pub i: usize,
    pub k: usize,
    pub j: usize,
    pub l: usize,
    pub c: f64,
}

impl TryFrom<FormFile> for BiquadraticForm {
    type Error = Error;

    fn try_from(f: FormFile) -> Result<Self> {
        let terms = f
            .terms
            .iter()
            .map(|t| {
                if t.i == 0 || t.k == 0 || t.j == 0 || t.l == 0 {
                    return invalid("term indices are 1-based");
                }
                Ok(MonomialTerm::new(t.i - 1, t.k - 1, t.j - 1, t.l - 1, t.c))
            })
            .collect::<Result<Vec<_>>>()?;
        BiquadraticForm::from_terms(f.m, f.n, &terms)
    }
}

impl From<BiquadraticForm> for FormFile {
    fn from(p: BiquadraticForm) -> Self {
        FormFile {
            m: p.m,
            n: p.n,
            terms: p
                .terms()
                .into_iter()
                .map(|t| TermRecord {
                    i: t.i + 1,
                    k: t.k + 1,
                    j: t.j + 1,
                    l: t.l + 1,
                    c: t.c,
                })
                .collect(),
        }
    }
}

/// `P = Σ_p (xᵀ W_p y)²` with each `W_p` an `m × n` matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecompositionFile", into = "DecompositionFile")]
pub struct SosDecomposition {
    m: usize,
    n: usize,
    factors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub m: usize,
    pub n: usize,
    pub factors: Vec<Vec<f64>>,
}

impl TryFrom<DecompositionFile> for SosDecomposition {
    type Error = Error;

    fn try_from(f: DecompositionFile) -> Result<Self> {
        SosDecomposition::new(f.m, f.n, f.factors)
    }
}

impl From<SosDecomposition> for DecompositionFile {
    fn from(d: SosDecomposition) -> Self {
        DecompositionFile {
            m: d.m,
            n: d.n,
            factors: d.factors,
        }
    }
}

impl SosDecomposition {
    pub fn new(m: usize, n: usize, factors: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(bad) = factors.iter().find(|w| w.len() != m * n) {
            return invalid(format!(
                "factor has {} entries, expected m·n = {}",
                bad.len(),
                m * n
            ));
        }
        if factors.iter().flatten().any(|v| !v.is_finite()) {
            return invalid("factor entries must be finite");
        }
        Ok(Self { m, n, factors })
    }

    pub fn empty(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            factors: vec![],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Row-major `m × n` coefficient matrices. Each one is also the vector `w_p`
    /// with `xᵀW_p y = w_pᵀ(x ⊗ y)`.
    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<Vec<f64>> {
        self.factors
    }

    /// `xᵀ W_p y` for each factor.
    pub fn bilinear_values(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let z = kron(x, y);
        self.factors.iter().map(|w| crate::linalg::dot(w, &z)).collect()
    }

    /// `Σ_p (xᵀ W_p y)²`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.m || y.len() != self.n {
            return invalid(format!(
                "expected x ∈ R^{} and y ∈ R^{}, got lengths {} and {}",
                self.m,
                self.n,
                x.len(),
                y.len()
            ));
        }
        Ok(self.bilinear_values(x, y).iter().map(|v| v * v).sum())
    }

    /// Gram matrix `Σ_p w_p w_pᵀ` of order `mn`.
    pub fn gram(&self) -> SymMatrix {
        SymMatrix::from_outer_products(self.m * self.n, self.factors.iter().map(Vec::as_slice))
    }

    /// Factors of the transposed form `P'(y, x)`: each `W_p` replaced by `W_pᵀ`.
    pub fn transpose(&self) -> Self {
        let (m, n) = (self.m, self.n);
        let factors = self
            .factors
            .iter()
            .map(|w| {
                let mut t = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        t[j * m + i] = w[i * n + j];
                    }
                }
                t
            })
            .collect();
        Self {
            m: n,
            n: m,
            factors,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decomposition serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("decomposition file: {e}")))
    }
}

/// Result of a randomized `P ≟ Σ f_p²` check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SosCheck {
    pub passed: bool,
    pub max_residual: f64,
    pub threshold: f64,
}

/// Relative residual threshold used by [`verify_sos`].
pub const SOS_RESIDUAL_TOL: f64 = 1e-8;

/// Compares `P` with `Σ (xᵀW_p y)²` at `samples` seeded points on the unit spheres.
///
/// Passes iff the largest gap is at most `1e-8 · (1 + max |coefficient|)`.
pub fn verify_sos(p: &BiquadraticForm, d: &SosDecomposition, samples: usize, seed: u64) -> Result<SosCheck> {
    if p.m() != d.m() || p.n() != d.n() {
        return invalid(format!(
            "form is {}×{} but decomposition is {}×{}",
            p.m(),
            p.n(),
            d.m(),
            d.n()
        ));
    }
    let mut rng = sampling::rng(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let x = sampling::unit_sphere(&mut rng, p.m());
        let y = sampling::unit_sphere(&mut rng, p.n());
        let lhs = p.evaluate_unchecked(&x, &y);
        let rhs: f64 = d.bilinear_values(&x, &y).iter().map(|v| v * v).sum();
        worst = worst.max((lhs - rhs).abs());
    }
    let threshold = SOS_RESIDUAL_TOL * (1.0 + p.max_abs_coefficient());
    Ok(SosCheck {
        passed: worst <= threshold,
        max_residual: worst,
        threshold,
    })
}
