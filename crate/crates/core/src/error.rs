use thiserror::Error;

/// Errors raised by the physics, sampling and fitting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} is not normalized: |a|^2 + |b|^2 = {norm} (expected 1 within 1e-12)")]
    NotNormalized { what: &'static str, norm: f64 },

    #[error("negative decay time {0} ps; negative-time handling belongs to the observable model")]
    NegativeTime(f64),

    #[error("singular postselection: <phi|psi> vanishes (r = 0)")]
    SingularPostselection,

    #[error("degenerate spectrum: delta_m = 0 leaves the normalized operator undefined")]
    DegenerateSpectrum,

    #[error("degenerate postselection: normalization integral {0} is not positive")]
    DegenerateNormalization(f64),

    #[error("undefined postselection: both products xi1*eta1 and xi2*eta2 vanish")]
    UndefinedPostselection,

    #[error("numeric failure in {context}: {detail}")]
    NumericFailure { context: &'static str, detail: String },

    #[error("non-positive likelihood {value:e} at event {index} (delta_t = {delta_t:e} ps)")]
    NumericDomain { index: usize, delta_t: f64, value: f64 },

    #[error("profile interval not bracketed within +/- pi/2 of the minimum ({side} side)")]
    ProfileNotBracketed { side: &'static str },

    #[error("malformed dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {value}")))
    }
}
