use std::path::PathBuf;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("polynomial space: {0}")]
    Space(String),

    #[error("singular Gram matrix (condition estimate {0:.3e})")]
    SingularGram(f64),

    #[error("family {family} is not compatible with {what}")]
    Incompatible { family: String, what: String },

    #[error("DOF functionals of {family} are not unisolvent (condition estimate {cond:.3e})")]
    NotUnisolvent { family: String, cond: f64 },

    #[error("derivative order {requested} exceeds the supported order {supported}")]
    DerivativeOrder { requested: usize, supported: usize },

    #[error("point ({0}, {1}) lies outside the mesh")]
    PointOutside(f64, f64),

    #[error("matrix is not symmetric positive definite (pivot {pivot:.3e} at row {row})")]
    NotSpd { row: usize, pivot: f64 },

    #[error("system with {size} free DOFs exceeds the dense limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("eigenpair certification failed: {0}")]
    Certification(String),

    #[error("invalid (r, m) decomposition: r = {r}, m = {m}")]
    OperatorDecomposition { r: usize, m: usize },

    #[error("root bracketing failed for mode {0}")]
    Bracket(usize),

    #[error("eigenpair matching: {0}")]
    Matching(String),

    #[error("rate fit: {0}")]
    Fit(String),

    #[error("unsupported norm combination: {0}")]
    Norm(String),

    #[error("asymptotic window violated: lambda*h^2 = {value:.4} exceeds {cap}")]
    Window { value: f64, cap: f64 },

    #[error("config {}: line {line}: {msg}", path.display())]
    Config {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid study: {0}")]
    Study(String),

    #[error("{stage}: {inner}")]
    Stage { stage: String, inner: Box<Error> },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            inner: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
