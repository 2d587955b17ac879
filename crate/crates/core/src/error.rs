use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// The training loss became NaN or infinite.
    #[error("training diverged in epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
    /// A least-squares design matrix without full rank.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
}

/// Shorthand for `Err(Error::Validation(format!(..)))`.
#[macro_export]
macro_rules! invalid {
    ($($arg:tt)*) => {
        Err($crate::Error::Validation(alloc::format!($($arg)*)))
    };
}
