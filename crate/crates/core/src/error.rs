use std::path::PathBuf;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("non-conforming mesh at edge ({0}, {1}): {2}")]
    Topology(usize, usize, String),

    #[error("mesh refinement exceeded {0} bisections")]
    RefinementCap(usize),

    #[error("degenerate element {0}: local mass matrix is singular")]
    DegenerateElement(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("primal-dual active set method did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        last_iterate: Box<crate::solver::PdasResult>,
    },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("infeasible iterate: constraint {row} violated by {violation:e}")]
    Infeasible { row: usize, violation: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
