use thiserror::Error;

/// Errors raised by the kernels, the element pipeline, and the global solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DlsError {
    #[error("matrix is not positive definite (nonpositive pivot at index {index})")]
    NotPositiveDefinite { index: usize },

    #[error("matrix is not Hermitian to tolerance")]
    NotHermitian,

    #[error("triangular matrix has a zero diagonal entry at index {index}")]
    SingularTriangular { index: usize },

    #[error("matrix is rank deficient (column {column}, |r_kk|/max|r| = {ratio:e})")]
    RankDeficient { column: usize, ratio: f64 },

    #[error("matrix has no nonzero singular values")]
    ZeroMatrix,

    #[error("saddle-point system is singular")]
    SingularSaddle,

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("unsupported polynomial order {p}")]
    UnsupportedOrder { p: usize },

    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("unknown manufactured case '{0}'")]
    UnknownCase(String),

    #[error("unknown formulation '{0}'")]
    UnknownFormulation(String),

    #[error("nonpositive diagonal entry at index {index}")]
    NonpositiveDiagonal { index: usize },

    #[error("bubble block is rank deficient (test space too small for the trial bubbles)")]
    RankDeficientBubbles,

    #[error("bubble block of the element matrix is singular")]
    SingularBubbleBlock,

    #[error("solution vector is zero")]
    ZeroSolution,

    #[error("element {element}: {source}")]
    Element {
        element: usize,
        #[source]
        source: Box<DlsError>,
    },

    #[error("invalid configuration for '{field}': {message}")]
    InvalidConfig { field: &'static str, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl DlsError {
    pub(crate) fn at_element(self, element: usize) -> Self {
        match self {
            e @ DlsError::Element { .. } => e,
            e => DlsError::Element {
                element,
                source: Box::new(e),
            },
        }
    }
}

impl From<std::io::Error> for DlsError {
    fn from(e: std::io::Error) -> Self {
        DlsError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DlsError>;
