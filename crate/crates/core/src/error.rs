use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("vector length {found} does not match operator size {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("particle subset J must be nonempty and within 0..{n}")]
    InvalidParticleSet { n: usize },

    #[error("invalid disorder specification: {0}")]
    InvalidDisorder(String),

    #[error("site {0:?} is not covered by the disorder realization")]
    SiteOutsideRealization(Vec<i64>),

    #[error("region has {size} sites, above the dense limit of {limit}")]
    DenseLimitExceeded { size: usize, limit: usize },

    #[error("energy {energy} is resonant with the spectrum (indicator {indicator:e})")]
    NearSpectrum { energy: f64, indicator: f64 },

    #[error("eigensolver failed to converge")]
    EigenSolver,

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("cubes centered at {u:?} and {v:?} with radius {radius} are not a separable pair")]
    NonSeparablePair { u: Vec<i64>, v: Vec<i64>, radius: u32 },

    #[error("exact enumeration over {sites} sites exceeds the limit of {limit}")]
    EnumerationTooLarge { sites: usize, limit: usize },

    #[error("decay fit needs at least 3 usable shells, found {usable}")]
    TooFewShells { usable: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
