use thiserror::Error;

/// Error classes used across the library.
///
/// The CLI maps these onto distinct exit codes: configuration errors exit
/// with 2, numeric/domain errors with 3 (see `bin/coarsen.rs`).
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or construction input (bad weights, bad grid).
    #[error("invalid input: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iteration, bracket, or tolerance target failed.
    #[error("numerical failure: {0}")]
    Numerics(String),

    /// Grid too small for the requested operation (convolution overflow,
    /// shift past the last cell, missing snapshot window).
    #[error("grid error: {0}")]
    Grid(String),

    /// The time integrator detected mass drift or negativity beyond
    /// tolerance.
    #[error("instability: {0}")]
    Instability(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
