use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("Bloch vector norm {norm} exceeds the pure-state bound {bound}")]
    BlochNormExceeded { norm: f64, bound: f64 },

    #[error("{num_qubits} qubits exceed the dense basis capacity")]
    BasisTooLarge { num_qubits: u32 },

    #[error("observable has no traceless part")]
    ZeroObservable,

    #[error(
        "measurement record is informationally incomplete: rank {rank} of {columns}, \
         null space dimension {null_dim}"
    )]
    InformationallyIncomplete { rank: usize, columns: usize, null_dim: usize },

    #[error("shot noise requires an observable with spectrum {{+1, -1}}")]
    ShotNoiseUnsupported,

    #[error("Lie closure did not converge within {0} commutator generations")]
    ClosureUnconverged(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
