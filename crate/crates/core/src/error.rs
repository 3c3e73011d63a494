use thiserror::Error;

use crate::partsym::PsdCertificate;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A symmetric matrix failed the PSD test; `witness` satisfies `vᵀSv < 0`.
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd {
        min_eigenvalue: f64,
        witness: Vec<f64>,
    },

    /// A biquadratic form is not PSD; the certificate carries a point where it is negative.
    #[error("form is not positive semidefinite{}", witness_suffix(.0))]
    FormNotPsd(Box<PsdCertificate>),

    #[error("cannot reduce Gram rank: {0}")]
    CannotReduce(String),

    #[error("no PSD Gram point found after {restarts} restarts (inconclusive)")]
    NoPsdPointFound { restarts: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

fn witness_suffix(cert: &PsdCertificate) -> String {
    match &cert.witness {
        Some(w) => format!(" (P = {:e} at witness)", w.value),
        None => String::new(),
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
