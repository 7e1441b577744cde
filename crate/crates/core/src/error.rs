use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("demand {demand} is infeasible: {reason}")]
    Infeasible { demand: usize, reason: String },

    #[error("route recovery failed for demand {demand}: {reason}")]
    Decomposition { demand: usize, reason: String },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("degenerate trajectory problem: {0}")]
    Degenerate(String),

    #[error("no feasible lateral boundary candidate at conflict distance {s_c} m")]
    InfeasibleLateral { s_c: f64 },

    #[error("rear-end junction construction infeasible: {0}")]
    InfeasibleRearEnd(String),

    #[error("hard infeasibility: {0}")]
    HardInfeasible(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("geometry configuration error: {0}")]
    Geometry(String),

    #[error("transcribed problem infeasible: {0}")]
    OracleInfeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that mean "the inputs are well formed but the
    /// requested plan does not exist".
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. }
                | Error::Decomposition { .. }
                | Error::InfeasibleLateral { .. }
                | Error::InfeasibleRearEnd(_)
                | Error::HardInfeasible(_)
                | Error::Scenario(_)
                | Error::OracleInfeasible(_)
        )
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
