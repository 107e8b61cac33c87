use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("molecule contains no ATOM/HETATM records")]
    EmptyMolecule,

    #[error("line {line}: invalid atom: {message}")]
    InvalidAtom { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("computational domain too small: boundary node {index:?} has level set value {value:.4e} <= 0")]
    DomainTooSmall { index: [usize; 3], value: f64 },

    #[error("degenerate level set gradient (|grad| = {norm:.3e}) at band node {index:?}; reinitialization failed")]
    DegenerateGradient { index: [usize; 3], norm: f64 },

    #[error("surface geometry: {0}")]
    Geometry(String),

    #[error("singular Green's function evaluation at coincident points")]
    SingularEvaluation,

    #[error("GMRES did not converge in {iterations} operator applications (relative residual {final_residual:.3e})")]
    NotConverged {
        iterations: usize,
        final_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("undefined relative error: reference norm is zero ({0})")]
    ZeroReference(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the error comes from user input (files, configuration)
    /// rather than from a numerical stage.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::EmptyMolecule
                | Error::InvalidAtom { .. }
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
