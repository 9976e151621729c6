use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An iterative method failed to converge, or a non-finite value appeared.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The requested compression ratio cannot be reached with rank >= 1.
    #[error("compression ratio {target} is infeasible; best achievable is {best} at rank 1")]
    Infeasible { target: f64, best: f64 },
    /// The operation is not defined for the chosen compression method.
    #[error("unsupported method: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! arg_err {
    ($($t:tt)*) => {
        $crate::error::Error::Argument(alloc::format!($($t)*))
    };
}
pub(crate) use arg_err;
