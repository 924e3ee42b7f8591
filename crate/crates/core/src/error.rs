use crate::kernel::KernelKind;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("kernel {kind:?} cannot be used here: {reason}")]
    Kind {
        kind: KernelKind,
        reason: &'static str,
    },

    #[error("activation has no closed-form recurrent kernel")]
    NoKernel,

    #[error("matrix is not positive definite: pivot {index} = {value:e}")]
    Conditioning { index: usize, value: f64 },

    #[error("forecast diverged at step {step}")]
    Divergence { step: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            found,
        })
    }
}
