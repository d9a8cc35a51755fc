use alloc::string::String;

/// Failure modes shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid mixing measure: {0}")]
    InvalidMeasure(String),

    #[error("{name} = {value} is outside its domain")]
    Domain { name: &'static str, value: f64 },

    #[error("{count} multi-indices exceed the enumeration cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("precision tier offers {available:.1} digits but {needed:.1} are required")]
    PrecisionInsufficient { needed: f64, available: f64 },

    #[error("linear solve residual {residual:e} exceeds {limit:e}")]
    SolveResidual { residual: f64, limit: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("no sharp example with TV <= {limit:e} in the searched range")]
    NoSharpExample { limit: f64 },

    #[error("inequality violated: {0}")]
    Violation(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(name: &'static str, value: f64) -> Error {
    Error::Domain { name, value }
}
