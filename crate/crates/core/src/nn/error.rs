use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    #[error("tensor shape {shape:?} does not hold {len} values")]
    TensorSize { shape: Vec<usize>, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("input shape mismatch: expected {expected:?}, got {actual:?}")]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("parameter shapes do not match layer {layer}: expected {expected:?}, got {actual:?}")]
    Parameters { layer: usize, expected: Vec<Vec<usize>>, actual: Vec<Vec<usize>> },

    #[error("invalid training configuration: {0}")]
    Config(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("network has {network} classes but dataset has {dataset}")]
    ClassCount { network: usize, dataset: usize },
}
