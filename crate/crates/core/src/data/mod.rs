//! Datasets: in-memory representation, IDX/CIFAR loaders, synthetic
//! generators and stratified splits.

mod cifar;
mod idx;
mod split;
mod synthetic;

use thiserror::Error;

use crate::nn::{NnError, Scalar, Tensor};

pub use cifar::load_cifar10_bin;
pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use split::{split, Fractions};
pub use synthetic::{blob_centres, make_synthetic, Synthetic};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, found: u32, expected: u32 },

    #[error("{path}: truncated, expected {expected} bytes, found {found}")]
    Truncated { path: String, expected: u64, found: u64 },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Tensor(#[from] NnError),
}

/// Examples, labels, and the original-index provenance of every row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Tensor<f32>,
    labels: Vec<usize>,
    ids: Vec<usize>,
    classes: usize,
}

impl Dataset {
    /// A base dataset: ids are `0..n`.
    pub fn new(examples: Tensor<f32>, labels: Vec<usize>, classes: usize) -> Result<Self, DataError> {
        let ids = (0..labels.len()).collect();
        Self::with_ids(examples, labels, ids, classes)
    }

    pub fn with_ids(
        examples: Tensor<f32>,
        labels: Vec<usize>,
        ids: Vec<usize>,
        classes: usize,
    ) -> Result<Self, DataError> {
        if examples.shape().len() < 2 {
            return Err(DataError::Invalid(format!(
                "examples need a batch dimension, got shape {:?}",
                examples.shape()
            )));
        }
        let n = examples.batch_size();
        if labels.len() != n || ids.len() != n {
            return Err(DataError::Invalid(format!("{n} examples, {} labels, {} ids", labels.len(), ids.len())));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(DataError::Label { label, classes });
        }
        Ok(Dataset { examples, labels, ids, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn examples(&self) -> &Tensor<f32> {
        &self.examples
    }

    /// Shape of one example (without the batch dimension).
    pub fn example_shape(&self) -> &[usize] {
        &self.examples.shape()[1..]
    }

    pub fn example_len(&self) -> usize {
        self.example_shape().iter().product()
    }

    pub fn example(&self, i: usize) -> &[f32] {
        let w = self.example_len();
        &self.examples.data()[i * w..(i + 1) * w]
    }

    /// Rows `indices`, in order, keeping their ids.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let w = self.example_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend_from_slice(self.example(i));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.example_shape());
        Dataset {
            examples: Tensor::new(shape, data).expect("rows of a valid tensor"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            classes: self.classes,
        }
    }

    /// Rows `indices` as an engine batch in precision `S`.
    pub fn batch<S: Scalar>(&self, indices: &[usize]) -> Tensor<S> {
        let w = self.example_len();
        let mut data = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            data.extend(self.example(i).iter().map(|&v| S::of(v as f64)));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.example_shape());
        Tensor::new(shape, data).expect("rows of a valid tensor")
    }

    /// Number of examples of each class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Per-feature mean over all examples.
    pub fn feature_mean(&self) -> Vec<f64> {
        let w = self.example_len();
        let mut mean = vec![0.0f64; w];
        for i in 0..self.len() {
            for (m, &v) in mean.iter_mut().zip(self.example(i)) {
                *m += v as f64;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Subtracts `mean` (one entry per feature) from every example.
    pub fn shifted(&self, mean: &[f64]) -> Result<Dataset, DataError> {
        let w = self.example_len();
        if mean.len() != w {
            return Err(DataError::Invalid(format!("mean has {} entries for {w} features", mean.len())));
        }
        let data = self
            .examples
            .data()
            .chunks_exact(w.max(1))
            .flat_map(|row| row.iter().zip(mean).map(|(&v, m)| (v as f64 - m) as f32))
            .collect();
        Ok(Dataset {
            examples: Tensor::new(self.examples.shape().to_vec(), data)?,
            labels: self.labels.clone(),
            ids: self.ids.clone(),
            classes: self.classes,
        })
    }

    /// Subtracts this dataset's own per-feature mean.
    pub fn centered(&self) -> Dataset {
        self.shifted(&self.feature_mean()).expect("mean matches the feature count")
    }
}
