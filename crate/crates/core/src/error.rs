use thiserror::Error;

/// Errors raised anywhere in the observer-design pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("unknown identifier `{name}` at position {pos}")]
    UnknownIdentifier { name: String, pos: usize },

    #[error("variable `{name}` out of range for arity {arity}")]
    VariableOutOfRange { name: String, arity: usize },

    #[error("domain error in `{expr}`: {msg}")]
    Domain { expr: String, msg: String },

    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix (pivot column {col})")]
    Singular { col: usize },

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("spectra overlap: eigenvalue {left} of F collides with eigenvalue {right} of A")]
    SpectraOverlap { left: String, right: String },

    #[error("resonance at series degree {degree}: degree operator is singular")]
    Resonance { degree: usize },

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error("component {component}: {source}")]
    Component {
        component: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("finite-difference column {column}: {source}")]
    JacobianColumn {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("collocation point {point:?}: {source}")]
    CollocationPoint {
        point: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("newton inversion failed after {iterations} iterations: {reason}")]
    Newton { iterations: usize, reason: String },

    #[error("simulation failed at step {step}: {source}")]
    Simulation {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training stage {stage} failed: {reason}")]
    Stage { stage: usize, reason: String },
}

impl Error {
    pub(crate) fn in_component(self, component: usize) -> Error {
        Error::Component {
            component,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
