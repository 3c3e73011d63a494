//! Sum-of-squares certificates for biquadratic forms.
//!
//! A biquadratic form `P(x, y) = Σ a_ijkl x_i y_j x_k y_l` is stored through its
//! unique symmetric coefficient tensor ([`BiquadraticForm`]). On top of that
//! carrier the crate provides:
//!
//! - [`partsym`]: PSD certification and explicit SOS decompositions for
//!   x-symmetric forms, through the two `n × n` matrices `Q = I + B − A` and
//!   `R = I + B + (m−1)A`, with a naive path (assemble the `mn × mn` Gram matrix)
//!   and a structured path (spectra of `Q` and `R` only).
//! - [`gram`]: the affine family of Gram matrices of an arbitrary form, a
//!   boundary line search that brings any PSD Gram point down to rank `mn − 1`,
//!   and a heuristic minimum-rank search.
//! - [`simple`]: the simple form series `P_{m,n,s}` and exact SOS-rank
//!   certificates for rectangle-free supports.
//! - [`meig`]: an M-eigenvalue solver and Monte Carlo negativity probe used to
//!   cross-check the PSD criterion.
//!
//! Gram matrices index the Kronecker vector `z = x ⊗ y` as `z[i * n + j] = x_i y_j`
//! (0-based) everywhere.

pub mod error;
pub mod forms;
pub mod gram;
pub mod linalg;
pub mod meig;
mod optim;
pub mod partsym;
pub mod sampling;
pub mod simple;

pub use error::{Error, Result};
pub use forms::{BiquadraticForm, MonomialTerm, SosCheck, SosDecomposition};
pub use gram::{GramFamily, GramPoint, MinRankResult};
pub use linalg::{SpectralDecomposition, SymMatrix, Tolerances};
pub use meig::MEigenpair;
pub use partsym::{PsdCertificate, QrPair, Verdict, Witness, XSymmetricData};
pub use simple::{LowerBoundCertificate, SimpleRank, SupportSet};
