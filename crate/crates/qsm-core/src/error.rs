//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, QsmError>;

#[derive(Debug, Error)]
pub enum QsmError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("index {index:?} out of range for grid dims {dims:?}")]
    IndexOutOfRange { index: [usize; 3], dims: [usize; 3] },

    #[error("non-finite value at linear index {0}")]
    NonFinite(usize),

    #[error("symbol produced non-finite value {value} at frequency index {index:?}")]
    SymbolDomain { index: [usize; 3], value: f64 },

    #[error(
        "spectrum violates Hermitian symmetry: relative imaginary residue {residue:.3e} \
         exceeds tolerance {tolerance:.3e}"
    )]
    SymmetryViolation { residue: f64, tolerance: f64 },

    #[error("grid mismatch: {0:?} vs {1:?}")]
    GridMismatch([usize; 3], [usize; 3]),

    #[error("phantom spec contains no ellipsoids")]
    EmptyPhantom,

    #[error("spike voxel {index:?} out of range for grid dims {dims:?}")]
    SpikeOutOfRange { index: [usize; 3], dims: [usize; 3] },

    #[error("enhancement power m={0} must be even: odd powers of the half-wave symbol produce complex spatial output")]
    OddEnhancementPower(u32),

    #[error("unknown symbol name '{0}' (expected one of D, p, b, P, R, C, T, laplacian, qinv)")]
    UnknownSymbol(String),

    #[error("internal consistency: {check} discrepancy {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Inconsistency {
        check: String,
        residual: f64,
        tolerance: f64,
    },
}
