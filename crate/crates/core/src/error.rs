use std::path::PathBuf;

use thiserror::Error;

use crate::kernel::KernelStage;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("no edge has two labeled endpoints")]
    NoLabeledEdges,
    #[error("node universes differ ({left} vs {right} nodes)")]
    UniverseMismatch { left: usize, right: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid edge ({u}, {v}) in a universe of {n} nodes")]
    InvalidEdge { u: usize, v: usize, n: usize },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeatures { row: usize, col: usize },
    #[error("train node {0} has no label")]
    UnlabeledTrainNode(usize),
    #[error("labels are missing for {0}")]
    MissingLabels(String),
    #[error("kernel scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("kernel row {node} sums to zero (isolated node in affinity space)")]
    ZeroRowSum { node: usize },
    #[error("kernel is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("kernel entry ({row}, {col}) is negative or non-finite")]
    InvalidKernelEntry { row: usize, col: usize },
    #[error("expected a {expected:?} kernel, got {found:?}")]
    WrongStage {
        expected: KernelStage,
        found: KernelStage,
    },
    #[error("the {0} split is empty")]
    InsufficientSplit(&'static str),
    #[error("epsilon grid is empty")]
    EmptyGrid,
    #[error("every epsilon in the grid produced an undecidable reference graph")]
    AllUndecidable,
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("cannot delete {k} edges: {reason}")]
    OverDeletion { k: u64, reason: String },
    #[error("separability residual {0:e} exceeds 1e-8")]
    PreconditionViolated(f64),
    #[error("perturbed reference graph has no edges")]
    DegenerateResult,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("inconsistent node count: {0}")]
    InconsistentNodeCount(String),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
