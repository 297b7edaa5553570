use thiserror::Error;

use crate::hetgraph::GraphError;
use crate::tensor::TensorError;

/// Errors from building or evaluating the embedding model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("target node at position {0} has an empty meta-path neighborhood")]
    EmptyNeighborhood(usize),
    #[error("at least one meta-path is required")]
    FewerThanOneMetaPath,
    #[error("meta-paths disagree on target type: `{0}` vs `{1}`")]
    MixedTargetTypes(String, String),
    #[error("meta-path name `{0}` used twice")]
    DuplicateMetaPath(String),
    #[error("target node {0} has no feature vector")]
    MissingFeatures(u64),
    #[error("parameter `{name}` has shape {found}, expected {expected}")]
    ParamShape {
        name: String,
        expected: String,
        found: String,
    },
    #[error("model expects {expected}, input has {found}")]
    InputMismatch { expected: String, found: String },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
}
