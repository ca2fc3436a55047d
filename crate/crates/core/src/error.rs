use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("argument {name} = {value} outside [0, 1]")]
    OutOfDomain { name: &'static str, value: f64 },

    #[error("invalid functional curve: {0}")]
    InvalidCurve(String),

    #[error("curves do not share one grid")]
    GridMismatch,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid observation {id}: {reason}")]
    InvalidObservation { id: String, reason: String },

    #[error("degenerate likelihood: {0}")]
    Degenerate(String),

    #[error("subject {id} has zero probability mass")]
    ZeroMass { id: String },

    #[error("information matrix singular after jitter (condition estimate {condition:.3e})")]
    SingularInformation { condition: f64 },

    #[error("constraint matrix is rank deficient (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },

    #[error("constrained fit failed at perturbation point {point}: {source}")]
    ProfilePoint {
        point: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("EM did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("every fit on the tuning grid failed")]
    AllFitsFailed,

    #[error("invalid configuration: {0}")]
    Config(String),
}
