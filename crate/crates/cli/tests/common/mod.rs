#![allow(dead_code)]

use dib_cli::{ExperimentConfig, Method};

/// A few-second experiment on Gaussian blobs with a small dense network.
pub fn blobs_toml(method: Method, repetitions: usize) -> String {
    let dib = if method == Method::Dib {
        "[dib]\nlater_epochs = 2\ngrowth = { position = 1, layer = { kind = \"dense\", units = 8, activation = \"relu\" } }\n"
    } else {
        ""
    };
    format!(
        r#"method = "{method}"
repetitions = {repetitions}
seed = 3

[data]
kind = "synthetic"
generator = "gaussian-blobs"
n = 400
classes = 4
noise = 1.5
fractions = [0.6, 0.2, 0.2]
data_seed = 1

[network]
input_shape = [2]
layers = [
  {{ kind = "dense", units = 8, activation = "relu" }},
  {{ kind = "dense", units = 4 }},
  {{ kind = "softmax" }},
]

[train]
epochs = 4
batch_size = 16
learning_rate = 0.01

[boosting]
rounds = 3

{dib}"#
    )
}

pub fn blobs(method: Method, repetitions: usize) -> ExperimentConfig {
    ExperimentConfig::from_toml(&blobs_toml(method, repetitions)).unwrap()
}
