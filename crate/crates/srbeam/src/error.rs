use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("ill-posed program: {0}")]
    IllPosed(String),
    #[error("expansion point is not strictly feasible: {0}")]
    InfeasiblePoint(String),
    #[error("no feasible initial point after {0} attempts")]
    NoInitialPoint(usize),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("no feasible beamformer among {draws} draws (best gap {gap:.3e})")]
    Extraction { draws: usize, gap: f64 },
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
