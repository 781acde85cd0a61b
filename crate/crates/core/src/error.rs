use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("non-finite value at node ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("Hessian of z is singular on the coordinate axes (requested at ({x}, {y}))")]
    AxisSingularity { x: f64, y: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("sign set cycles with period {period} after {iterations} outer iterations")]
    Cycling { period: usize, iterations: usize },

    #[error("symmetry group is inconsistent: {0}")]
    Symmetry(String),

    #[error("point ({x}, {y}) is not a critical zero: |u| = {value:e}, |grad u| = {grad:e}, tolerance {tol:e}")]
    NotCriticalZero {
        x: f64,
        y: f64,
        value: f64,
        grad: f64,
        tol: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("requested depth {requested} exceeds the resolvable depth {max_feasible}")]
    Depth { requested: usize, max_feasible: usize },

    #[error("projection too weak for a reliable angle at level {level} (tau = {tau:e}, floor {floor:e})")]
    UnreliableAngle { level: usize, tau: f64, floor: f64 },

    #[error("expected 4 branches near the crossing, found {found}")]
    Topology { found: usize },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {cause}")]
    Stage { stage: String, cause: Box<Error> },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            cause: Box::new(self),
        }
    }

    /// The underlying error with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { cause, .. } => cause.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
