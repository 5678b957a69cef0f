use std::path::PathBuf;

/// Errors raised anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "infeasible edge count {n_edges} for {n_nodes} nodes: a connected simple graph needs between {min} and {max} edges"
    )]
    InfeasibleEdgeCount { n_nodes: usize, n_edges: usize, min: usize, max: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("largest wire cluster has only {size} node(s); increase n_wires or wire_length to reach percolation")]
    SparseNanowireNetwork { size: usize },

    #[error("node {node} is out of range for a {n_nodes}-node network")]
    NodeOutOfRange { node: usize, n_nodes: usize },

    #[error("node {0} is both a voltage source and a ground")]
    BoundaryOverlap(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("column {0} is constant and cannot be normalised")]
    ConstantColumn(usize),

    #[error("nodal solve failed: {0}")]
    Solver(String),

    #[error("malformed {what}: {reason}")]
    Parse { what: &'static str, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable category, used by the command-line error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InfeasibleEdgeCount { .. }
            | Error::InvalidParameter { .. }
            | Error::BoundaryOverlap(_)
            | Error::NodeOutOfRange { .. }
            | Error::Config(_) => "validation",
            Error::InvalidGraph(_) | Error::SparseNanowireNetwork { .. } => "graph",
            Error::Dimension(_) | Error::Empty(_) | Error::ConstantColumn(_) => "data",
            Error::NonFinite { .. } => "non_finite",
            Error::Solver(_) => "solver",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
