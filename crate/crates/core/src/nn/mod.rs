//! Minimal convolutional network engine: layer specs, batched forward and
//! reverse-mode passes, and minibatch Adam training with hold-out selection.

mod error;
mod layer;
mod network;
mod ops;
mod scalar;
mod tensor;
mod train;

pub use error::NnError;
pub use layer::{Activation, LayerSpec, NetworkSpec, Padding};
pub use network::{Gradients, Mode, Network};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use train::{
    argmax_rows, best_epoch, class_probabilities, error_rate, predict_labels, train, TrainConfig, TrainReport,
};

pub(crate) use network::init_layer;

/// Generator behind initialization, shuffling and dropout masks.
pub type EngineRng = rand_chacha::ChaCha8Rng;
