use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid Hilbert dimensions: {0}")]
    InvalidDims(String),
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("site index {site} out of range for {n_cavities} cavities")]
    SiteOutOfRange { site: usize, n_cavities: usize },
    #[error("{0} requires two cavities")]
    RequiresTwoCavities(&'static str),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("manifold {n} above the photon cutoff {n_fock}")]
    ManifoldAboveCutoff { n: usize, n_fock: usize },
    #[error("manifold index must be at least 1")]
    ZeroManifold,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("formula inapplicable: {0}")]
    FormulaInapplicable(String),
    #[error("no zero mode: smallest |lambda| = {smallest:e}")]
    NoZeroMode { smallest: f64 },
    #[error("degenerate zero eigenspace of dimension {count}: {eigenvalues}")]
    DegenerateZeroMode { count: usize, eigenvalues: String },
    #[error("state is not stationary: residual {residual:e}")]
    NotStationary { residual: f64 },
    #[error("divergent spectral integral: mode with Re(lambda) = {re:e}")]
    Divergent { re: f64 },
    #[error("generator is not dissipative")]
    NotDissipative,
    #[error("no peaks found")]
    NoPeaks,
    #[error("near-degenerate unperturbed levels {a} and {b} (gap {gap:e})")]
    NearDegenerate { a: String, b: String, gap: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("trajectory too short: {0}")]
    TrajectoryTooShort(String),
    #[error("unknown state name '{0}'")]
    UnknownState(String),
    #[error("invalid ramp schedule: {0}")]
    InvalidSchedule(String),
    #[error("found {found} maxima, need at least 3")]
    TooFewMaxima { found: usize },
    #[error("effective model is degenerate (Omega0 = 0)")]
    DegenerateEffectiveModel,
    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
