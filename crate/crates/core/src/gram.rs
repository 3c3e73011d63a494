//! The affine family of Gram matrices of a biquadratic form.
//!
//! Every symmetric `G` of order `mn` with `zᵀGz = P(x, y)` for `z = x ⊗ y` has the
//! form `G = B + Σ_t γ_t Δ_t`. The base `B` is the tensor itself
//! (`B[(i,j),(k,l)] = a_ijkl`) and, for each `i < k` and `j < l`, the direction
//! `Δ_t` has `+1` at `((i,j),(k,l))`, `−1` at `((i,l),(k,j))`, and the mirrored
//! entries. Because `z_{ij} z_{kl} = z_{il} z_{kj}`, each `Δ_t` is invisible to
//! `P`. PSD members of the family are exactly the SOS representations of `P`, and
//! the rank of such a member is the number of bilinear squares it yields.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forms::{BiquadraticForm, SosDecomposition};
use crate::linalg::{
    self, factor_from_spectrum, psd_from_spectrum, rank_cutoff, rank_of_spectrum, sym_eig, SpectralDecomposition,
    SymMatrix, Tolerances,
};
use crate::optim::NelderMead;
use crate::sampling;

/// Direction retries allowed in [`reduce_to_boundary`].
pub const BOUNDARY_RETRIES: usize = 3;
/// Relative bracket width at which the boundary bisection may stop.
pub const BISECTION_TOL: f64 = 1e-10;
const BISECTION_MAX_ITERS: usize = 200;
const BRACKET_MAX_DOUBLINGS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Direction {
    i: usize,
    k: usize,
    j: usize,
    l: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramFamily {
    m: usize,
    n: usize,
    base: SymMatrix,
    directions: Vec<Direction>,
}

/// A member `B + Σ γ_t Δ_t` of a Gram family.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPoint {
    pub gamma: Vec<f64>,
    pub matrix: SymMatrix,
}

/// JSON view of a Gram point: `{"gamma": [...], "rank": r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramPointRecord {
    pub gamma: Vec<f64>,
    pub rank: usize,
}

impl GramPoint {
    pub fn rank(&self, tol: &Tolerances) -> Result<usize> {
        linalg::numerical_rank(&self.matrix, tol)
    }

    pub fn record(&self, tol: &Tolerances) -> Result<GramPointRecord> {
        Ok(GramPointRecord {
            gamma: self.gamma.clone(),
            rank: self.rank(tol)?,
        })
    }
}

/// Outcome of [`min_rank_search`]. `rank` is an upper bound on the SOS rank.
#[derive(Debug, Clone, PartialEq)]
pub struct MinRankResult {
    pub best: GramPoint,
    pub rank: usize,
    /// Final rank of each restart, `None` where no PSD point was found.
    pub restart_ranks: Vec<Option<usize>>,
}

impl GramFamily {
    pub fn new(p: &BiquadraticForm) -> Self {
        let (m, n) = (p.m(), p.n());
        let mut directions = Vec::new();
        for i in 0..m {
            for k in i + 1..m {
                for j in 0..n {
                    for l in j + 1..n {
                        directions.push(Direction { i, k, j, l });
                    }
                }
            }
        }
        Self {
            m,
            n,
            base: p.gram_matrix(),
            directions,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.m * self.n
    }

    /// Number of directions, `C(m,2)·C(n,2)`.
    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    pub fn base(&self) -> &SymMatrix {
        &self.base
    }

    /// Direction `t` as `(i, k, j, l)`, 0-based, with `i < k` and `j < l`.
    pub fn direction_indices(&self, t: usize) -> (usize, usize, usize, usize) {
        let d = self.directions[t];
        (d.i, d.k, d.j, d.l)
    }

    fn positions(&self, d: Direction) -> [(usize, usize); 2] {
        let n = self.n;
        [(d.i * n + d.j, d.k * n + d.l), (d.i * n + d.l, d.k * n + d.j)]
    }

    fn add_direction(&self, g: &mut SymMatrix, t: usize, coef: f64) {
        let [(r1, c1), (r2, c2)] = self.positions(self.directions[t]);
        g.add_sym(r1, c1, coef);
        g.add_sym(r2, c2, -coef);
    }

    pub fn direction(&self, t: usize) -> SymMatrix {
        let mut g = SymMatrix::zeros(self.order());
        self.add_direction(&mut g, t, 1.0);
        g
    }

    /// `Σ c_t Δ_t`.
    pub fn combination(&self, c: &[f64]) -> Result<SymMatrix> {
        self.check_len(c)?;
        let mut g = SymMatrix::zeros(self.order());
        for (t, &ct) in c.iter().enumerate() {
            if ct != 0.0 {
                self.add_direction(&mut g, t, ct);
            }
        }
        Ok(g)
    }

    /// `Δ_t v`.
    fn apply_direction(&self, t: usize, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        let [(r1, c1), (r2, c2)] = self.positions(self.directions[t]);
        out[r1] += v[c1];
        out[c1] += v[r1];
        out[r2] -= v[c2];
        out[c2] -= v[r2];
        out
    }

    fn check_len(&self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.dim() {
            return invalid(format!("gamma has length {}, family dimension is {}", gamma.len(), self.dim()));
        }
        if !gamma.iter().all(|g| g.is_finite()) {
            return invalid("gamma must be finite");
        }
        Ok(())
    }

    /// `B + Σ γ_t Δ_t`.
    pub fn at(&self, gamma: &[f64]) -> Result<GramPoint> {
        self.check_len(gamma)?;
        let mut matrix = self.base.clone();
        for (t, &g) in gamma.iter().enumerate() {
            if g != 0.0 {
                self.add_direction(&mut matrix, t, g);
            }
        }
        Ok(GramPoint {
            gamma: gamma.to_vec(),
            matrix,
        })
    }

    /// Coordinates of a matrix in the family, `γ_t = (G[(i,j),(k,l)] − G[(i,l),(k,j)]) / 2`.
    ///
    /// Fails when `g` does not represent the form (residual beyond `tol` relative to `‖g‖_F`).
    pub fn locate(&self, g: &SymMatrix, tol: f64) -> Result<GramPoint> {
        if g.order() != self.order() {
            return invalid(format!("matrix has order {}, family order is {}", g.order(), self.order()));
        }
        let gamma: Vec<f64> = self
            .directions
            .iter()
            .map(|&d| {
                let [(r1, c1), (r2, c2)] = self.positions(d);
                0.5 * (g.get(r1, c1) - g.get(r2, c2))
            })
            .collect();
        let point = self.at(&gamma)?;
        let residual = point.matrix.distance(g);
        if residual > tol * g.frobenius_norm().max(1.0) {
            return invalid(format!("matrix does not represent the form (residual {residual:e})"));
        }
        Ok(point)
    }
}

pub fn build_family(p: &BiquadraticForm) -> GramFamily {
    GramFamily::new(p)
}

pub fn gram_at(family: &GramFamily, gamma: &[f64]) -> Result<GramPoint> {
    family.at(gamma)
}

fn spectrum_rank(eig: &SpectralDecomposition, tol: &Tolerances) -> usize {
    rank_of_spectrum(&eig.eigenvalues, eig.spectral_radius(), tol)
}

fn min_eig(m: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(m)?.min_eigenvalue())
}

/// Largest `t ≥ 0` (up to bisection accuracy) with `λ_min(G + tΔ) ≥ 0`.
fn boundary_step(g: &SymMatrix, delta: &SymMatrix, lambda0: f64, cut: f64) -> Result<Option<f64>> {
    let f = |t: f64| min_eig(&g.add_scaled(t, delta));
    // |λ_min(G + tΔ) − λ_min(G)| ≤ t‖Δ‖_F, so this first step stays PSD.
    let mut lo = 0.0;
    let mut hi = (lambda0 / delta.frobenius_norm()).max(f64::MIN_POSITIVE);
    let mut found = false;
    for _ in 0..BRACKET_MAX_DOUBLINGS {
        if f(hi)? < 0.0 {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Ok(None);
    }
    let mut f_lo = f(lo)?;
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= BISECTION_TOL * hi && f_lo <= cut / 10.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid >= 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Moves a full-rank PSD Gram point along a seeded random family direction until
/// its smallest eigenvalue reaches zero, giving a PSD representation of rank `≤ mn − 1`.
///
/// Both `Δ` and `−Δ` are searched and the nearer boundary wins. Up to
/// [`BOUNDARY_RETRIES`] directions are tried. Points that are already rank
/// deficient are returned unchanged.
pub fn reduce_to_boundary(family: &GramFamily, start: &GramPoint, seed: u64, tol: &Tolerances) -> Result<GramPoint> {
    family.check_len(&start.gamma)?;
    let eig = sym_eig(&start.matrix)?;
    let check = psd_from_spectrum(&eig, tol);
    if !check.psd {
        return Err(Error::NotPsd {
            min_eigenvalue: check.min_eigenvalue,
            witness: check.witness.unwrap_or_default(),
        });
    }
    let order = family.order();
    if spectrum_rank(&eig, tol) < order {
        return Ok(start.clone());
    }
    if family.dim() == 0 {
        return Err(Error::CannotReduce(format!(
            "the Gram family of a {}×{} form has no directions and the point has full rank {order}",
            family.m, family.n
        )));
    }
    let cut = rank_cutoff(eig.spectral_radius(), tol);
    let lambda0 = eig.min_eigenvalue();

    for attempt in 0..BOUNDARY_RETRIES {
        let mut rng = sampling::sub_rng(seed, attempt as u64);
        let c = sampling::unit_sphere(&mut rng, family.dim());
        let delta = family.combination(&c)?;
        let mut best: Option<f64> = None;
        for sign in [1.0, -1.0] {
            let signed = delta.scaled(sign);
            if let Some(t) = boundary_step(&start.matrix, &signed, lambda0, cut)? {
                let st = sign * t;
                if best.is_none_or(|b| t < b.abs()) {
                    best = Some(st);
                }
            }
        }
        let Some(step) = best else {
            log::debug!("boundary attempt {attempt}: no bracket in either sign");
            continue;
        };
        let gamma: Vec<f64> = start.gamma.iter().zip(&c).map(|(g, ct)| g + step * ct).collect();
        let point = family.at(&gamma)?;
        let e = sym_eig(&point.matrix)?;
        if psd_from_spectrum(&e, tol).psd && spectrum_rank(&e, tol) < order {
            return Ok(point);
        }
        log::debug!("boundary attempt {attempt}: endpoint not PSD-singular, retrying");
    }
    Err(Error::CannotReduce(format!(
        "no boundary point found after {BOUNDARY_RETRIES} directions"
    )))
}

struct Evaluated {
    point: GramPoint,
    eig: SpectralDecomposition,
    rank: usize,
}

impl Evaluated {
    fn new(family: &GramFamily, gamma: Vec<f64>, tol: &Tolerances) -> Result<Self> {
        let point = family.at(&gamma)?;
        let eig = sym_eig(&point.matrix)?;
        let rank = spectrum_rank(&eig, tol);
        Ok(Self { point, eig, rank })
    }

    fn is_psd(&self, tol: &Tolerances) -> bool {
        psd_from_spectrum(&self.eig, tol).psd
    }
}

/// One exact rank-reducing step inside the current face of the PSD cone.
///
/// With `G = V Λ Vᵀ` (positive part) and kernel basis `N`, a combination
/// `Δ = Σ c_t Δ_t` with `ΔN = 0` keeps `G + sΔ` within the face; stepping until an
/// eigenvalue of `Λ + s VᵀΔV` reaches zero lowers the rank.
fn face_step<R: Rng + ?Sized>(
    family: &GramFamily,
    cur: &Evaluated,
    rng: &mut R,
) -> Result<Option<Vec<f64>>> {
    let dim = family.dim();
    let r = cur.rank;
    if dim == 0 || r == 0 {
        return Ok(None);
    }
    let vecs = &cur.eig.eigenvectors;
    let lam = &cur.eig.eigenvalues[..r];
    let (positive, kernel) = vecs.split_at(r);

    let c = if kernel.is_empty() {
        sampling::unit_sphere(rng, dim)
    } else {
        // Columns vec(Δ_t N); their null space gives the admissible c.
        let cols: Vec<Vec<f64>> = (0..dim)
            .map(|t| kernel.iter().flat_map(|nu| family.apply_direction(t, nu)).collect())
            .collect();
        let gram = SymMatrix::from_fn(dim, |a, b| linalg::dot(&cols[a], &cols[b]));
        let ge = sym_eig(&gram)?;
        let thr = 1e-10 * ge.max_eigenvalue().max(1.0);
        let null: Vec<&Vec<f64>> = ge
            .eigenvalues
            .iter()
            .zip(&ge.eigenvectors)
            .filter(|(l, _)| **l <= thr)
            .map(|(_, v)| v)
            .collect();
        if null.is_empty() {
            return Ok(None);
        }
        let w = sampling::unit_sphere(rng, null.len());
        let mut c = vec![0.0; dim];
        for (wk, v) in w.iter().zip(null) {
            for (ct, vt) in c.iter_mut().zip(v) {
                *ct += wk * vt;
            }
        }
        c
    };

    let delta = family.combination(&c)?;
    let dv: Vec<Vec<f64>> = positive.iter().map(|v| delta.mul_vec(v)).collect();
    let k = SymMatrix::from_fn(r, |a, b| linalg::dot(&positive[a], &dv[b]) / (lam[a] * lam[b]).sqrt());
    let ke = sym_eig(&k)?;
    let (mu_min, mu_max) = (ke.min_eigenvalue(), ke.max_eigenvalue());
    let step = if mu_min < -1e-14 {
        -1.0 / mu_min
    } else if mu_max > 1e-14 {
        -1.0 / mu_max
    } else {
        return Ok(None);
    };
    Ok(Some(cur.point.gamma.iter().zip(&c).map(|(g, ct)| g + step * ct).collect()))
}

fn reduce_within_faces<R: Rng + ?Sized>(
    family: &GramFamily,
    mut cur: Evaluated,
    tol: &Tolerances,
    rng: &mut R,
) -> Result<Evaluated> {
    while let Some(gamma) = face_step(family, &cur, rng)? {
        let next = Evaluated::new(family, gamma, tol)?;
        if next.is_psd(tol) && next.rank < cur.rank {
            cur = next;
        } else {
            break;
        }
    }
    Ok(cur)
}

fn scale_of(family: &GramFamily) -> f64 {
    family.base.max_abs().max(1.0)
}

/// Maximizes `λ_min(M(γ))` from `gamma0` until it is within the PSD tolerance.
fn find_psd_point_from(family: &GramFamily, gamma0: Vec<f64>, tol: &Tolerances) -> Result<Option<Evaluated>> {
    let start = Evaluated::new(family, gamma0, tol)?;
    if start.is_psd(tol) {
        return Ok(Some(start));
    }
    let dim = family.dim();
    if dim == 0 {
        return Ok(None);
    }
    let nm = NelderMead {
        max_evals: 400 * (dim + 1),
        initial_step: scale_of(family),
        f_tol: 0.0,
    };
    let mut failure = None;
    let best = nm.minimize(
        |g| match Evaluated::new(family, g.to_vec(), tol) {
            Ok(e) => (-e.eig.min_eigenvalue(), e.is_psd(tol)),
            Err(err) => {
                failure.get_or_insert(err);
                (f64::INFINITY, true)
            }
        },
        &start.point.gamma,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    log::debug!("smallest eigenvalue after climbing: {:e}", -best.value);
    let e = Evaluated::new(family, best.x, tol)?;
    Ok(e.is_psd(tol).then_some(e))
}

/// Derivative-free search for a PSD point of lower rank, minimizing the sum of
/// the `mn − r + 1` smallest eigenvalues plus a penalty on negative ones.
fn surrogate_descent(family: &GramFamily, cur: &Evaluated, tol: &Tolerances) -> Result<Option<Evaluated>> {
    let dim = family.dim();
    let order = family.order();
    if dim == 0 || cur.rank == 0 {
        return Ok(None);
    }
    let k = order - cur.rank + 1;
    let penalty = 10.0 * k as f64;
    let nm = NelderMead {
        max_evals: 60 * (dim + 1),
        initial_step: 0.1 * scale_of(family),
        f_tol: 1e-13,
    };
    let mut found: Option<Evaluated> = None;
    let mut failure = None;
    nm.minimize(
        |g| match Evaluated::new(family, g.to_vec(), tol) {
            Ok(e) => {
                let tail = &e.eig.eigenvalues[order - k..];
                let value = tail.iter().sum::<f64>() + penalty * (-e.eig.min_eigenvalue()).max(0.0);
                let better = e.is_psd(tol) && e.rank < cur.rank;
                if better {
                    found = Some(e);
                }
                (value, better)
            }
            Err(err) => {
                failure.get_or_insert(err);
                (f64::INFINITY, true)
            }
        },
        &cur.point.gamma,
    );
    match failure {
        Some(err) => Err(err),
        None => Ok(found),
    }
}

fn start_gamma<R: Rng + ?Sized>(family: &GramFamily, restart: usize, rng: &mut R) -> Vec<f64> {
    let dim = family.dim();
    if restart == 0 {
        vec![0.0; dim]
    } else {
        let scale = scale_of(family);
        sampling::normal_vec(rng, dim).into_iter().map(|g| g * scale).collect()
    }
}

/// First PSD member found from the same starts as [`min_rank_search`]
/// (`γ = 0`, then seeded random points), without any rank reduction.
pub fn find_psd_point(family: &GramFamily, restarts: usize, seed: u64, tol: &Tolerances) -> Result<GramPoint> {
    tol.validate()?;
    let restarts = restarts.max(1);
    for restart in 0..restarts {
        let mut rng = sampling::sub_rng(seed, restart as u64);
        let gamma0 = start_gamma(family, restart, &mut rng);
        if let Some(e) = find_psd_point_from(family, gamma0, tol)? {
            return Ok(e.point);
        }
    }
    Err(Error::NoPsdPointFound { restarts })
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Heuristic minimum-rank PSD Gram point.
///
/// Restart 0 starts at `γ = 0`, later restarts at seeded random `γ`. Each restart
/// first climbs `λ_min` to reach the PSD cone, then alternates exact face
/// reductions with a Nelder–Mead search on a rank surrogate. The best result over
/// restarts is chosen by rank, ties broken by lexicographically smallest `γ`.
/// The rank is an upper bound on the SOS rank of the form.
pub fn min_rank_search(family: &GramFamily, restarts: usize, seed: u64, tol: &Tolerances) -> Result<MinRankResult> {
    tol.validate()?;
    let restarts = restarts.max(1);
    let mut best: Option<Evaluated> = None;
    let mut restart_ranks = Vec::with_capacity(restarts);

    for restart in 0..restarts {
        let mut rng = sampling::sub_rng(seed, restart as u64);
        let gamma0 = start_gamma(family, restart, &mut rng);
        let Some(start) = find_psd_point_from(family, gamma0, tol)? else {
            log::debug!("restart {restart}: no PSD point");
            restart_ranks.push(None);
            continue;
        };
        let mut cur = reduce_within_faces(family, start, tol, &mut rng)?;
        for _ in 0..family.order() {
            match surrogate_descent(family, &cur, tol)? {
                Some(next) => cur = reduce_within_faces(family, next, tol, &mut rng)?,
                None => break,
            }
        }
        restart_ranks.push(Some(cur.rank));
        let replace = match &best {
            None => true,
            Some(b) => cur
                .rank
                .cmp(&b.rank)
                .then_with(|| lexicographic(&cur.point.gamma, &b.point.gamma))
                .is_lt(),
        };
        if replace {
            best = Some(cur);
        }
    }

    match best {
        Some(b) => Ok(MinRankResult {
            rank: b.rank,
            best: b.point,
            restart_ranks,
        }),
        None => Err(Error::NoPsdPointFound { restarts }),
    }
}

/// SOS decomposition with one factor per positive eigenvalue of the Gram point.
pub fn factor_gram(family: &GramFamily, point: &GramPoint, tol: &Tolerances) -> Result<SosDecomposition> {
    if point.matrix.order() != family.order() {
        return invalid("Gram point does not belong to this family");
    }
    let eig = sym_eig(&point.matrix)?;
    SosDecomposition::new(family.m, family.n, factor_from_spectrum(&eig, tol)?)
}
