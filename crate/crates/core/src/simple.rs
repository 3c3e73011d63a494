//! Simple forms `Σ_{(i,j)∈S} x_i² y_j²` and exact SOS ranks for rectangle-free supports.
//!
//! Suppose `P = Σ_{(i,j)∈S} c_ij x_i² y_j²` with all `c_ij > 0` equals `Σ_p (xᵀW_p y)²`
//! and collect the entries into vectors `v_ij = (W_p[i][j])_p`. Matching
//! coefficients gives `‖v_ij‖² = c_ij` on `S` and `v_ij = 0` off `S`. The
//! coefficient of `x_i x_k y_j y_l` (`i ≠ k`, `j ≠ l`) is
//! `2(⟨v_ij, v_kl⟩ + ⟨v_il, v_kj⟩)`, and the other mixed monomials give
//! `⟨v_ij, v_il⟩ = 0` and `⟨v_ij, v_kj⟩ = 0`. When `S` contains no rectangle
//! `{(p,r), (p,s), (q,r), (q,s)}`, at most one of the two products in each mixed
//! sum involves two pairs of `S`, so all `|S|` nonzero vectors are mutually
//! orthogonal and at least `|S|` squares are needed. The trivial decomposition
//! by `√c_ij x_i y_j` attains this count.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forms::{BiquadraticForm, MonomialTerm};

/// Index pairs `(i, j)` of the monomials `x_i² y_j²` (0-based in memory, 1-based in JSON).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SupportFile", into = "SupportFile")]
pub struct SupportSet {
    m: usize,
    n: usize,
    pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportFile {
    pub m: usize,
    pub n: usize,
    pub pairs: Vec<[usize; 2]>,
}

impl TryFrom<SupportFile> for SupportSet {
    type Error = Error;

    fn try_from(f: SupportFile) -> Result<Self> {
        if f.pairs.iter().any(|p| p[0] == 0 || p[1] == 0) {
            return invalid("support pairs are 1-based");
        }
        SupportSet::new(f.m, f.n, f.pairs.iter().map(|p| (p[0] - 1, p[1] - 1)).collect())
    }
}

impl From<SupportSet> for SupportFile {
    fn from(s: SupportSet) -> Self {
        SupportFile {
            m: s.m,
            n: s.n,
            pairs: s.pairs.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        }
    }
}

impl SupportSet {
    pub fn new(m: usize, n: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("support needs m ≥ 1 and n ≥ 1");
        }
        let mut seen = BTreeSet::new();
        for &(i, j) in &pairs {
            if i >= m || j >= n {
                return invalid(format!("pair ({}, {}) outside [{m}]×[{n}]", i + 1, j + 1));
            }
            if !seen.insert((i, j)) {
                return invalid(format!("pair ({}, {}) repeated", i + 1, j + 1));
            }
        }
        Ok(Self { m, n, pairs })
    }

    /// Support of a simple form: only `x_i² y_j²` monomials, each with a positive
    /// coefficient. `None` for any other form.
    pub fn from_form(p: &BiquadraticForm) -> Option<Self> {
        let mut pairs = Vec::new();
        for t in p.terms() {
            if t.i != t.k || t.j != t.l || t.c <= 0.0 {
                return None;
            }
            pairs.push((t.i, t.j));
        }
        Self::new(p.m(), p.n(), pairs).ok()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i, j))
    }

    /// `Σ_{(i,j)∈S} x_i² y_j²`.
    pub fn to_form(&self) -> BiquadraticForm {
        let terms: Vec<MonomialTerm> = self.pairs.iter().map(|&(i, j)| MonomialTerm::new(i, i, j, j, 1.0)).collect();
        BiquadraticForm::from_terms(self.m, self.n, &terms).expect("pairs are in range")
    }

    /// First rectangle `[(p,r), (p,s), (q,r), (q,s)]` with `p < q`, `r < s`, if any.
    pub fn find_rectangle(&self) -> Option<[(usize, usize); 4]> {
        let mut rows = vec![vec![false; self.n]; self.m];
        for &(i, j) in &self.pairs {
            rows[i][j] = true;
        }
        for p in 0..self.m {
            for q in p + 1..self.m {
                let common: Vec<usize> = (0..self.n).filter(|&j| rows[p][j] && rows[q][j]).take(2).collect();
                if let [r, s] = common[..] {
                    return Some([(p, r), (p, s), (q, r), (q, s)]);
                }
            }
        }
        None
    }
}

/// Ordered support of the simple form series: for `k = 0..s−1`, with
/// `p = ⌊k/m⌋` and `q = k mod m`, the pair `(q, (p + q) mod n)` (0-based).
pub fn gen_simple(m: usize, n: usize, s: usize) -> Result<SupportSet> {
    if n == 0 || m < n {
        return invalid(format!("the series needs m ≥ n ≥ 1, got m = {m}, n = {n}"));
    }
    if s == 0 || s > m * n {
        return invalid(format!("s must lie in 1..={}, got {s}", m * n));
    }
    let pairs = (0..s)
        .map(|k| {
            let (p, q) = (k / m, k % m);
            (q, (p + q) % n)
        })
        .collect();
    SupportSet::new(m, n, pairs)
}

pub fn to_form(s: &SupportSet) -> BiquadraticForm {
    s.to_form()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowerBoundCertificate {
    pub applicable: bool,
    /// `|S|` when applicable.
    pub bound: Option<usize>,
    /// Four pairs forming a rectangle when not applicable (0-based).
    pub rectangle_witness: Option<[(usize, usize); 4]>,
}

pub fn lower_bound_certificate(s: &SupportSet) -> LowerBoundCertificate {
    match s.find_rectangle() {
        Some(rect) => LowerBoundCertificate {
            applicable: false,
            bound: None,
            rectangle_witness: Some(rect),
        },
        None => LowerBoundCertificate {
            applicable: true,
            bound: Some(s.len()),
            rectangle_witness: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SimpleRank {
    Exact(usize),
    /// Only the trivial decomposition count is known; a Gram search may do better.
    UpperBoundOnly(usize),
}

impl SimpleRank {
    pub fn value(self) -> usize {
        match self {
            SimpleRank::Exact(v) | SimpleRank::UpperBoundOnly(v) => v,
        }
    }
}

pub fn exact_sos_rank_simple(s: &SupportSet) -> SimpleRank {
    if lower_bound_certificate(s).applicable {
        SimpleRank::Exact(s.len())
    } else {
        SimpleRank::UpperBoundOnly(s.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(s: &SupportSet) -> Vec<(usize, usize)> {
        s.pairs().iter().map(|&(i, j)| (i + 1, j + 1)).collect()
    }

    #[test]
    fn printed_examples() {
        assert_eq!(one_based(&gen_simple(2, 2, 3).unwrap()), vec![(1, 1), (2, 2), (1, 2)]);
        assert_eq!(one_based(&gen_simple(3, 2, 4).unwrap()), vec![(1, 1), (2, 2), (3, 1), (1, 2)]);
        assert_eq!(
            one_based(&gen_simple(3, 3, 6).unwrap()),
            vec![(1, 1), (2, 2), (3, 3), (1, 2), (2, 3), (3, 1)]
        );
    }

    #[test]
    fn invalid_parameters() {
        assert!(gen_simple(2, 3, 1).is_err());
        assert!(gen_simple(2, 2, 5).is_err());
        assert!(gen_simple(2, 2, 0).is_err());
        assert!(SupportSet::new(2, 2, vec![(0, 0), (0, 0)]).is_err());
    }

    #[test]
    fn pairs_distinct_and_full_enumeration() {
        for m in 1..=8 {
            for n in 1..=m {
                let full = gen_simple(m, n, m * n).unwrap();
                let set: BTreeSet<_> = full.pairs().iter().copied().collect();
                assert_eq!(set.len(), m * n);
                for s in 1..=m * n {
                    assert_eq!(gen_simple(m, n, s).unwrap().pairs(), &full.pairs()[..s]);
                }
            }
        }
    }

    #[test]
    fn forms_from_supports() {
        let empty = SupportSet::new(2, 2, vec![]).unwrap();
        assert!(empty.to_form().is_zero());
        let p = gen_simple(3, 2, 6).unwrap().to_form();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(p.coeff(i, j, i, j), 1.0);
            }
        }
        assert_eq!(p.terms().len(), 6);
        assert_eq!(SupportSet::from_form(&p).unwrap().len(), 6);
    }

    #[test]
    fn certificates() {
        for m in 2..=6 {
            let c = lower_bound_certificate(&gen_simple(m, 2, m + 1).unwrap());
            assert!(c.applicable);
            assert_eq!(c.bound, Some(m + 1));
        }
        assert_eq!(lower_bound_certificate(&gen_simple(3, 3, 6).unwrap()).bound, Some(6));
        let c = lower_bound_certificate(&gen_simple(2, 2, 4).unwrap());
        assert!(!c.applicable);
        assert_eq!(c.rectangle_witness, Some([(0, 0), (0, 1), (1, 0), (1, 1)]));

        assert_eq!(exact_sos_rank_simple(&gen_simple(3, 2, 4).unwrap()), SimpleRank::Exact(4));
        assert_eq!(exact_sos_rank_simple(&gen_simple(2, 2, 3).unwrap()), SimpleRank::Exact(3));
        assert_eq!(exact_sos_rank_simple(&gen_simple(2, 2, 4).unwrap()), SimpleRank::UpperBoundOnly(4));
    }

    #[test]
    fn json_is_one_based() {
        let s = gen_simple(2, 2, 3).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"m":2,"n":2,"pairs":[[1,1],[2,2],[1,2]]}"#);
        assert_eq!(serde_json::from_str::<SupportSet>(&text).unwrap(), s);
        assert!(serde_json::from_str::<SupportSet>(r#"{"m":2,"n":2,"pairs":[[0,1]]}"#).is_err());
    }

    #[test]
    fn non_simple_forms_are_rejected() {
        let p = BiquadraticForm::from_terms(2, 2, &[MonomialTerm::new(0, 1, 0, 1, 1.0)]).unwrap();
        assert!(SupportSet::from_form(&p).is_none());
        let q = BiquadraticForm::from_terms(2, 2, &[MonomialTerm::new(0, 0, 0, 0, -1.0)]).unwrap();
        assert!(SupportSet::from_form(&q).is_none());
    }
}
