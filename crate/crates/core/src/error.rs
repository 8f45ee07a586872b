use thiserror::Error;

/// Every failure a solve, audit or lab can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("worldtube contamination: |psi| = {value:.3e} at u = {u:.6} exceeds {tol:.1e}")]
    WorldtubeContamination { u: f64, value: f64, tol: f64 },
    #[error("boundary contamination: |psi| = {value:.3e} near r* = {rstar:.6} at t = {t:.6}")]
    BoundaryContamination { t: f64, rstar: f64, value: f64 },
    #[error("nonlinear divergence: cell-local iteration did not settle at u = {u:.6}, R = {r:.6e}")]
    NonlinearDivergence { u: f64, r: f64 },
    #[error("no contraction: Picard ratios {ratios:?}")]
    NoContraction { ratios: Vec<f64> },
    #[error("CFL violation: dt/dx = {ratio:.4} > {limit:.4}")]
    CflViolation { ratio: f64, limit: f64 },
    #[error("cone outside domain: {0}")]
    ConeOutsideDomain(String),
    #[error("foliation outside domain: {0}")]
    FoliationOutsideDomain(String),
    #[error("extraction inconsistency: relative difference {diff:.3e} between u_c choices exceeds {tol:.1e}")]
    ExtractionInconsistency { diff: f64, tol: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag used in CLI error JSON and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "Domain",
            Error::Config(_) => "Config",
            Error::WorldtubeContamination { .. } => "WorldtubeContamination",
            Error::BoundaryContamination { .. } => "BoundaryContamination",
            Error::NonlinearDivergence { .. } => "NonlinearDivergence",
            Error::NoContraction { .. } => "NoContraction",
            Error::CflViolation { .. } => "CFLViolation",
            Error::ConeOutsideDomain(_) => "ConeOutsideDomain",
            Error::FoliationOutsideDomain(_) => "FoliationOutsideDomain",
            Error::ExtractionInconsistency { .. } => "ExtractionInconsistency",
            Error::NonFinite(_) => "NonFinite",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
