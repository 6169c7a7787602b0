use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid interaction: {0}")]
    InvalidInteraction(String),
    #[error("interaction range {range} is ambiguous on a {ell}x{big_l} torus")]
    AmbiguousImages { range: usize, ell: usize, big_l: usize },
    #[error("bond mask is not an even subgraph (vertex {0} has odd degree)")]
    OddVertex(usize),
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("lattice too large for {what}: {detail}")]
    TooLarge { what: &'static str, detail: String },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("catastrophic cancellation: result {ratio:.3e} of the largest term")]
    Cancellation { ratio: f64 },
    #[error("near-singular pivot {pivot:.3e} at elimination step {step}")]
    NearSingular { step: usize, pivot: f64 },
    #[error("no convergence after {iterations} iterations (last change {last_change:.3e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("bracket [{lo}, {hi}] does not contain a sign change")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("string catalog exceeds cap {cap} (pair needs {needed})")]
    CatalogOverflow { cap: usize, needed: usize },
    #[error("string expansion does not reproduce the spin sum (relative error {0:.3e})")]
    ConsistencyViolation(f64),
    #[error("not enough points: need {need}, got {got}")]
    InsufficientPoints { need: usize, got: usize },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerical kind (as opposed to invalid input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Cancellation { .. }
                | Error::NearSingular { .. }
                | Error::NoConvergence { .. }
                | Error::NoSignChange { .. }
                | Error::ConsistencyViolation(_)
        )
    }
}
