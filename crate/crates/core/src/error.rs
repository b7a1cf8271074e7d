use thiserror::Error;

use crate::metrics::sdp::SdpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Population or norm lost past the Fock cutoff exceeds the leakage budget.
    #[error("Fock truncation {dim} insufficient: retained weight {retained:.3e} below 1 - {budget:.1e}")]
    TruncationInsufficient { dim: usize, retained: f64, budget: f64 },

    #[error("no Fock truncation up to {cap} levels meets leakage budget {budget:.1e}")]
    TruncationCapExceeded { cap: usize, budget: f64 },

    #[error("channel is not CPTP: {0}")]
    NotCptp(String),

    #[error("reference channel is not unitary (rank defect {defect:.3e})")]
    NonUnitaryIdeal { defect: f64 },

    #[error("mixture weights must be nonnegative and sum to 1 (sum = {sum:.15})")]
    WeightSum { sum: f64 },

    #[error("invalid dataset `{label}`: {reason}")]
    InvalidDataset { label: String, reason: String },

    #[error("fit did not converge after {restarts} restarts (best log-likelihood {best:.6})")]
    FitNonConvergence { restarts: usize, best: f64 },

    #[error(transparent)]
    Sdp(#[from] SdpError),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
